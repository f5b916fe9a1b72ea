"""Intra-sweep motion model shared by the frontend and the mapping stage.

A point at sweep fraction s (column / W; column 0 is s = 0) was sensed in a
frame that differs from the end-of-sweep frame by ``interp(I, T, s)^-1``,
where ``T`` maps the current scan into the previous one. Undistorting a point
therefore applies the inverse of ``interp(I, T, s)``.
"""

from __future__ import annotations

import numpy as np

from .ingest import Scan
from .pose import PoseSE3, apply_interpolated
from .projection import TWO_PI, ScanMatrix


def azimuth_fraction(points) -> np.ndarray:
    """Sweep fraction in [0, 1) from ``atan2(y, x)``, for points without a grid column."""
    points = np.asarray(points, dtype=float)
    az = np.mod(np.arctan2(points[:, 1], points[:, 0]), TWO_PI)
    return np.where(az >= TWO_PI, 0.0, az / TWO_PI)


def column_fraction(m: ScanMatrix) -> np.ndarray:
    """(H, W) sweep fraction column / W for every cell."""
    return np.broadcast_to(np.arange(m.cfg.W) / m.cfg.W, m.shape)


def compensate_distortion(source, T_rel: PoseSE3, s=None) -> np.ndarray:
    """Map every point by the inverse of ``interp(I, T_rel, s_i)``.

    ``source`` may be a :class:`Scan` (s from the point azimuth), a
    :class:`ScanMatrix` (valid cells in row-major order, s from the column) or
    an (N, 3) array, with ``s`` given or taken from the azimuth.
    """
    if isinstance(source, ScanMatrix):
        points = source.points()[source.valid]
        if s is None:
            s = column_fraction(source)[source.valid]
    else:
        points = source.points if isinstance(source, Scan) else np.asarray(source, dtype=float)
        if s is None:
            s = azimuth_fraction(points)
    if len(points) == 0:
        return np.array(points, dtype=float).reshape(0, 3)
    return apply_interpolated(PoseSE3.identity(), T_rel, np.asarray(s, dtype=float), points, inverse=True)


def compensate_normals(normals, T_rel: PoseSE3, s) -> np.ndarray:
    """Rotation-only counterpart of :func:`compensate_distortion` for directions."""
    return compensate_distortion(normals, PoseSE3(T_rel.q), s)
