"""Rigid-body poses: unit quaternion (w, x, y, z) plus translation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp


def canonicalize_quaternion(q):
    """Return the representative of ``q`` / ``-q`` with w >= 0.

    When w == 0 the first nonzero vector component is made positive, so the
    result is identical for q and -q.
    """
    q = np.asarray(q, dtype=float)
    for c in q:
        if c > 0:
            return q.copy()
        if c < 0:
            return -q
    return q.copy()


def _wxyz_to_xyzw(q):
    return np.array([q[1], q[2], q[3], q[0]])


def _xyzw_to_wxyz(q):
    return np.array([q[3], q[0], q[1], q[2]])


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class PoseSE3:
    """Rigid transform p -> R(q) p + t.

    ``a @ b`` composes (apply b first), ``a.inverse()`` inverts. The quaternion
    is normalized and hemisphere-canonicalized at construction.
    """

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        t = np.asarray(self.t, dtype=float).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError(f"invalid quaternion {q}")
        if not np.all(np.isfinite(t)):
            raise ValueError(f"non-finite translation {t}")
        q = canonicalize_quaternion(q / n)
        q.flags.writeable = False
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls()

    @classmethod
    def from_rotation(cls, rot: Rotation, t=(0.0, 0.0, 0.0)) -> "PoseSE3":
        return cls(_xyzw_to_wxyz(rot.as_quat()), t)

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> "PoseSE3":
        return cls.from_rotation(Rotation.from_rotvec(np.asarray(rotvec, float)), t)

    @classmethod
    def from_euler(cls, seq: str, angles, t=(0.0, 0.0, 0.0), degrees=False) -> "PoseSE3":
        return cls.from_rotation(Rotation.from_euler(seq, angles, degrees=degrees), t)

    @classmethod
    def from_matrix(cls, m) -> "PoseSE3":
        """Build from a 3x4 or 4x4 matrix whose rotation block is orthonormal."""
        m = np.asarray(m, dtype=float)
        return cls.from_rotation(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(_wxyz_to_xyzw(self.q))

    @property
    def R(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def __matmul__(self, other: "PoseSE3") -> "PoseSE3":
        if not isinstance(other, PoseSE3):
            return NotImplemented
        return PoseSE3(quat_multiply(self.q, other.q), self.R @ other.t + self.t)

    def inverse(self) -> "PoseSE3":
        qc = self.q * np.array([1.0, -1.0, -1.0, -1.0])
        inv = PoseSE3(qc, np.zeros(3))
        return PoseSE3(qc, -(inv.R @ self.t))

    def apply(self, points) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector) of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.R.T

    def rotvec(self) -> np.ndarray:
        return self.rotation.as_rotvec()

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        return 2.0 * float(np.arctan2(np.linalg.norm(self.q[1:]), abs(self.q[0])))

    def allclose(self, other: "PoseSE3", atol=1e-9) -> bool:
        return bool(np.allclose(self.as_matrix(), other.as_matrix(), rtol=0.0, atol=atol))

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.q)
        t = ", ".join(f"{v:.6g}" for v in self.t)
        return f"PoseSE3(q=[{q}], t=[{t}])"


def exp_se3(delta) -> PoseSE3:
    """Pose for a left increment (tx, ty, tz, rx, ry, rz): p -> exp(r) p + t."""
    delta = np.asarray(delta, dtype=float)
    return PoseSE3.from_rotvec(delta[3:], delta[:3])


def perturb(pose: PoseSE3, delta) -> PoseSE3:
    """Left-perturb ``pose`` by the 6-vector ``delta`` (translation, rotation vector)."""
    return exp_se3(delta) @ pose


def interpolate(a: PoseSE3, b: PoseSE3, s) -> PoseSE3 | list[PoseSE3]:
    """Slerp rotation and lerp translation from ``a`` (s=0) to ``b`` (s=1)."""
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    rots = interpolate_rotations(a, b, s_arr)
    ts = (1.0 - s_arr)[:, None] * a.t + s_arr[:, None] * b.t
    poses = [PoseSE3.from_rotation(r, t) for r, t in zip(rots, ts)]
    return poses[0] if scalar else poses


def interpolate_rotations(a: PoseSE3, b: PoseSE3, s) -> Rotation:
    key = Rotation.concatenate([a.rotation, b.rotation])
    return Slerp([0.0, 1.0], key)(np.clip(np.asarray(s, dtype=float), 0.0, 1.0))


def apply_interpolated(a: PoseSE3, b: PoseSE3, s, points, inverse=False) -> np.ndarray:
    """Apply interp(a, b, s_i) (or its inverse) to each point i, vectorized."""
    s = np.asarray(s, dtype=float)
    points = np.asarray(points, dtype=float)
    rots = interpolate_rotations(a, b, s)
    ts = (1.0 - s)[:, None] * a.t + s[:, None] * b.t
    if inverse:
        return rots.inv().apply(points - ts)
    return rots.apply(points) + ts


def pose_distance(a: PoseSE3, b: PoseSE3) -> tuple[float, float]:
    """(rotation angle in degrees, translation distance) of a^-1 b."""
    d = a.inverse() @ b
    return float(np.degrees(d.angle())), float(np.linalg.norm(d.t))
