"""Grid normal estimation, neighborhood smoothing, PCA reference normals and
angular error statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .ingest import Scan
from .projection import ScanMatrix

RANGE_WEIGHT_DECAY = 0.2
THRESHOLDS_DEG = (11.25, 22.5, 30.0)


class EmptyReportError(ValueError):
    """No point had both a predicted and a reference normal."""


@dataclass(frozen=True, eq=False)
class NormalMap:
    normals: np.ndarray  # (H, W, 3), zero where invalid
    valid: np.ndarray  # (H, W) bool
    wrap_columns: bool = True

    @property
    def shape(self):
        return self.valid.shape


@dataclass(frozen=True)
class NormalEvalReport:
    mean_err: float
    median_err: float
    pct_within: dict
    valid_count: int

    def as_dict(self) -> dict:
        out = {"mean_err_deg": self.mean_err, "median_err_deg": self.median_err,
               "valid_count": self.valid_count}
        for thr, frac in self.pct_within.items():
            out[f"pct_within_{thr:g}"] = frac
        return out


def neighbor(a: np.ndarray, drow: int, dcol: int, wrap_columns: bool, fill=0):
    """Array whose cell (i, j) holds ``a[i + drow, j + dcol]``; out-of-grid -> fill."""
    H, W = a.shape[:2]
    out = np.full_like(a, fill)
    rs_dst = slice(max(0, -drow), H - max(0, drow))
    rs_src = slice(max(0, drow), H - max(0, -drow))
    if wrap_columns:
        shifted = np.roll(a, -dcol, axis=1)
        out[rs_dst] = shifted[rs_src]
        return out
    cs_dst = slice(max(0, -dcol), W - max(0, dcol))
    cs_src = slice(max(0, dcol), W - max(0, -dcol))
    out[rs_dst, cs_dst] = a[rs_src, cs_src]
    return out


# cyclic neighbor order: up, left, down, right
_RING = ((1, 0), (0, -1), (-1, 0), (0, 1))


def orient_toward_sensor(normals, points):
    flip = np.einsum("...i,...i->...", normals, points) > 0
    return np.where(flip[..., None], -normals, normals)


def estimate_normals(m: ScanMatrix) -> NormalMap:
    """Range-weighted cross products over the four grid neighbors.

    A cell gets a normal only if it and all four neighbors are valid and the
    summed cross product is not degenerate. Normals face the sensor.
    """
    wrap = m.cfg.full_circle
    pts = m.points()
    r = m.range
    valid = m.valid.copy()
    diffs = []
    for dr, dc in _RING:
        nv = neighbor(m.valid, dr, dc, wrap, False)
        valid &= nv
        w = np.exp(-RANGE_WEIGHT_DECAY * np.abs(neighbor(r, dr, dc, wrap) - r))
        diffs.append(w[..., None] * (neighbor(pts, dr, dc, wrap) - pts))
    n = np.zeros_like(pts)
    for k in range(4):
        n += np.cross(diffs[k], diffs[(k + 1) % 4])
    norm = np.linalg.norm(n, axis=-1)
    valid &= norm >= 1e-12
    n = np.where(valid[..., None], n / np.where(valid, norm, 1.0)[..., None], 0.0)
    n = orient_toward_sensor(n, pts)
    return NormalMap(n, valid, wrap)


def smooth_normals(nm: NormalMap, window: int = 3) -> NormalMap:
    """Moving average of valid normals over a window x window neighborhood."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 1")
    if window == 1:
        return nm
    h = window // 2
    acc = np.zeros_like(nm.normals)
    masked = np.where(nm.valid[..., None], nm.normals, 0.0)
    for dr in range(-h, h + 1):
        for dc in range(-h, h + 1):
            acc += neighbor(masked, dr, dc, nm.wrap_columns)
    norm = np.linalg.norm(acc, axis=-1)
    valid = nm.valid & (norm >= 1e-12)
    out = np.where(valid[..., None], acc / np.where(valid, norm, 1.0)[..., None], 0.0)
    return NormalMap(out, valid, nm.wrap_columns)


def grid_normals(m: ScanMatrix, window: int = 3) -> NormalMap:
    """Estimate then smooth; the normal channel most consumers want."""
    return smooth_normals(estimate_normals(m), window)


def pca_normals(scan: Scan | np.ndarray, radius: float, min_points: int = 3,
                viewpoint=(0.0, 0.0, 0.0)):
    """Least-squares plane normals from all points within ``radius``.

    Returns ``(normals, valid)``; a point needs ``min_points`` points in its
    ball (itself included) to be valid. Normals face ``viewpoint``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = scan.points if isinstance(scan, Scan) else np.asarray(scan, dtype=float)
    n = len(pts)
    center = pts.mean(axis=0) if n else np.zeros(3)
    p = pts - center
    pairs = cKDTree(p).query_pairs(radius, output_type="ndarray")
    i = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(n)])
    j = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(n)])
    count = np.bincount(i, minlength=n).astype(float)
    s1 = np.stack([np.bincount(i, weights=p[j, a], minlength=n) for a in range(3)], axis=1)
    s2 = np.empty((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s2[:, a, b] = s2[:, b, a] = np.bincount(i, weights=p[j, a] * p[j, b], minlength=n)
    mean = s1 / count[:, None]
    cov = s2 / count[:, None, None] - mean[:, :, None] * mean[:, None, :]
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    valid = count >= min_points
    normals = orient_toward_sensor(normals, pts - np.asarray(viewpoint, dtype=float))
    normals[~valid] = 0.0
    return normals, valid


def evaluate_normals(pred: NormalMap, gt_normals, gt_valid, index) -> NormalEvalReport:
    """Angular error between grid normals and per-point reference normals.

    ``index`` maps each cell to its source point (the ScanMatrix back-reference).
    """
    gt_normals = np.asarray(gt_normals, dtype=float)
    gt_valid = np.asarray(gt_valid, dtype=bool)
    cells = pred.valid & (index >= 0)
    src = index[cells]
    keep = gt_valid[src]
    if not np.any(keep):
        raise EmptyReportError("no comparable normals")
    a = pred.normals[cells][keep]
    b = gt_normals[src[keep]]
    dots = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    err = np.degrees(np.arccos(dots))
    pct = {thr: float(np.mean(err < thr)) for thr in THRESHOLDS_DEG}
    return NormalEvalReport(float(err.mean()), float(np.median(err)), pct, int(err.size))


def angular_errors_deg(a, b) -> np.ndarray:
    dots = np.clip(np.einsum("...i,...i->...", a, b), -1.0, 1.0)
    return np.degrees(np.arccos(dots))
