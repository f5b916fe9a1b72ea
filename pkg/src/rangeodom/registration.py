"""Point-to-plane Gauss-Newton machinery shared by scan-to-scan and
scan-to-map alignment."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .pose import PoseSE3


class InsufficientGeometryError(RuntimeError):
    """Too few correspondences, or the normal equations are ill-conditioned."""


class DivergedError(RuntimeError):
    """Residual grew instead of shrinking; ``pose`` is the last estimate."""

    def __init__(self, message, pose: PoseSE3):
        super().__init__(message)
        self.pose = pose


class PlaneTarget:
    """Exact nearest-neighbor lookup over points carrying unit normals."""

    def __init__(self, points, normals):
        self.points = np.asarray(points, dtype=float)
        self.normals = np.asarray(normals, dtype=float)
        if len(self.points) == 0:
            raise InsufficientGeometryError("empty registration target")
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def match(self, query, max_dist, query_normals=None, min_cos=-1.0, with_near=False):
        """Return (matched mask, point-to-plane residuals, target normals) for ``query``.

        With ``query_normals`` a pair is rejected when the two normals differ by
        more than ``arccos(min_cos)``: the neighbor then lies on another surface.
        ``with_near`` appends the ungated within-distance mask.
        """
        dist, idx = self.tree.query(query, k=1, distance_upper_bound=max_dist)
        near = np.isfinite(dist)
        e = np.zeros(len(query))
        j = idx[near]
        e[near] = np.einsum("ij,ij->i", query[near] - self.points[j], self.normals[j])
        nrm = np.zeros((len(query), 3))
        nrm[near] = self.normals[j]
        ok = gate_normals(near, nrm, query_normals, min_cos)
        return (ok, e, nrm, near) if with_near else (ok, e, nrm)


def gate_normals(near, target_normals, query_normals, min_cos):
    """``near`` restricted to pairs whose normals agree to within ``arccos(min_cos)``."""
    if query_normals is None or min_cos <= -1.0:
        return near
    return near & (np.einsum("ij,ij->i", query_normals, target_normals) >= min_cos)


def huber_weights(e, delta):
    a = np.abs(e)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


def huber_cost(e, delta):
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def robust_cost(matched, e, delta, max_dist, near=None) -> float:
    """Huber cost over a fixed point set; unmatched points pay the cost at ``max_dist``.

    With ``near`` (pairs within the distance bound before normal gating), a
    near pair that the gate rejected pays the cost at the Huber knee instead.
    """
    far = huber_cost(np.asarray(max_dist), delta)
    if near is not None:
        far = np.where(near, 0.5 * delta * delta, far)
    c = np.where(matched, huber_cost(e, delta), far)
    return float(np.sum(c))


def solve_increment(points, normals, e, w, max_condition=1e8):
    """Weighted Gauss-Newton step for a left increment (translation, rotation vector).

    Returns ``(delta, condition_number)``; raises when the 6x6 system is
    ill-conditioned.
    """
    J = np.hstack([normals, np.cross(points, normals)])
    Jw = J * w[:, None]
    A = Jw.T @ J
    b = Jw.T @ e
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > max_condition:
        raise InsufficientGeometryError(f"normal equations ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(A, -b), cond


def rms(e) -> float:
    return float(np.sqrt(np.mean(np.square(e)))) if len(e) else 0.0
