"""Readers and writers for velodyne ``.bin`` scans and KITTI pose files."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .pose import PoseSE3

logger = logging.getLogger(__name__)

SCAN_PERIOD = 0.1  # seconds, 10 Hz sensor
_RECORD = np.dtype("<f4")


class FormatError(ValueError):
    """Raised when a scan or pose file does not match its declared layout."""


@dataclass(frozen=True, eq=False)
class Scan:
    """One lidar revolution.

    ``points`` is (N, 3) in meters (sensor frame), ``intensity`` is (N,) in the
    sensor's raw scale. ``n_dropped`` counts non-finite records discarded while
    reading.
    """

    points: np.ndarray
    intensity: np.ndarray
    timestamp: float = 0.0
    sequence_index: int = 0
    n_dropped: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        inten = np.asarray(self.intensity, dtype=float).reshape(-1)
        if len(pts) != len(inten):
            raise ValueError("points and intensity lengths differ")
        pts.flags.writeable = False
        inten.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensity", inten)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_array(cls, xyzi, timestamp=0.0, sequence_index=0) -> "Scan":
        xyzi = np.asarray(xyzi, dtype=float).reshape(-1, 4)
        return cls(xyzi[:, :3], xyzi[:, 3], timestamp, sequence_index)


def read_scan_bin(path, sequence_index=0, scan_period=SCAN_PERIOD) -> Scan:
    """Decode a file of little-endian float32 (x, y, z, intensity) records."""
    size = os.path.getsize(path)
    if size % 16 != 0:
        raise FormatError(f"{path}: size {size} is not a multiple of 16 bytes")
    if size == 0:
        raise FormatError(f"{path}: empty scan file")
    raw = np.fromfile(path, dtype=_RECORD).reshape(-1, 4)
    finite = np.all(np.isfinite(raw), axis=1)
    n_dropped = int(np.count_nonzero(~finite))
    if n_dropped:
        logger.warning("%s: dropped %d non-finite records", path, n_dropped)
    raw = raw[finite]
    if len(raw) == 0:
        raise FormatError(f"{path}: no finite points")
    return Scan(
        raw[:, :3].astype(float),
        raw[:, 3].astype(float),
        timestamp=sequence_index * scan_period,
        sequence_index=sequence_index,
        n_dropped=n_dropped,
    )


def write_scan_bin(scan: Scan, path) -> None:
    out = np.empty((len(scan), 4), dtype=_RECORD)
    out[:, :3] = scan.points
    out[:, 3] = scan.intensity
    out.tofile(path)


def nearest_rotation(m) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def pose_from_row(values) -> PoseSE3:
    """Parse 12 reals (row-major 3x4 [R | t]) into a pose."""
    m = np.asarray(values, dtype=float).reshape(3, 4)
    r = m[:, :3]
    if not np.all(np.isfinite(m)):
        raise FormatError("non-finite pose entry")
    if np.linalg.det(r) <= 0:
        raise FormatError(f"rotation block has det {np.linalg.det(r):.6g} <= 0")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        r = nearest_rotation(r)
    return PoseSE3.from_matrix(np.hstack([r, m[:, 3:]]))


def read_poses_kitti(path) -> list[PoseSE3]:
    poses = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 12:
                raise FormatError(f"{path}:{lineno}: expected 12 values, got {len(fields)}")
            try:
                values = [float(v) for v in fields]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            try:
                poses.append(pose_from_row(values))
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return poses


def format_pose_row(pose: PoseSE3) -> str:
    return " ".join(f"{v:.12e}" for v in pose.as_matrix()[:3].reshape(-1))


def write_poses_kitti(poses, path) -> None:
    with open(path, "w") as f:
        for pose in poses:
            f.write(format_pose_row(pose) + "\n")
