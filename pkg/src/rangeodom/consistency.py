"""Geometric-consistency, mask and pose objectives for a scan pair.

Conventions: ``T`` maps points of the previous scan into the current scan's
frame (the previous matrix is warped onto the current grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .normals import neighbor
from .pose import PoseSE3, perturb
from .projection import TWO_PI, ScanMatrix, transform_and_reproject

MASK_EPS = 1e-7


class NoOverlapError(ValueError):
    """The warped and current matrices share no comparable cell."""


@dataclass(frozen=True)
class LossWeights:
    lambda_n: float = 0.15
    lambda_r: float = 0.05
    s_x: float = 0.0
    s_q: float = -2.5

    def __post_init__(self):
        if self.lambda_n < 0 or self.lambda_r < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class ConsistencyResult:
    total: float
    count: float

    @property
    def mean(self) -> float:
        return self.total / self.count


@dataclass(frozen=True)
class ConsistencyBreakdown:
    l_n: float
    l_r: float
    l_x: float
    l_q: float
    l_o: float
    total: float
    compared_cell_count: int = 0

    def to_record(self) -> str:
        keys = ("l_n", "l_r", "l_x", "l_q", "l_o", "total", "compared_cell_count")
        return " ".join(f"{k}={getattr(self, k)!r}" for k in keys)

    @classmethod
    def from_record(cls, line: str) -> "ConsistencyBreakdown":
        kv = dict(item.split("=", 1) for item in line.split())
        return cls(*(float(kv[k]) for k in ("l_n", "l_r", "l_x", "l_q", "l_o", "total")),
                   compared_cell_count=int(kv["compared_cell_count"]))


def range_gradient(r, valid, wrap_columns=True) -> np.ndarray:
    """|dr/dalpha| + |dr/dbeta| by central differences on valid neighbors.

    One-sided differences are used where only one neighbor is valid; a
    direction with no valid neighbor contributes 0. Invalid cells get 0.
    """
    out = np.zeros_like(r, dtype=float)
    for axis_shift in (((0, 1), (0, -1)), ((1, 0), (-1, 0))):
        (a_r, a_c), (b_r, b_c) = axis_shift
        rp = neighbor(r, a_r, a_c, wrap_columns)
        rm = neighbor(r, b_r, b_c, wrap_columns)
        vp = neighbor(valid, a_r, a_c, wrap_columns, False) & valid
        vm = neighbor(valid, b_r, b_c, wrap_columns, False) & valid
        d = np.where(vp & vm, (rp - rm) / 2.0,
                     np.where(vp, rp - r, np.where(vm, r - rm, 0.0)))
        out += np.abs(d)
    return np.where(valid, out, 0.0)


def _edge_weight(grad, grad_clamp):
    return np.exp(np.minimum(grad, grad_clamp))


def _require_normals(m: ScanMatrix, name: str):
    if m.normals is None or m.normal_valid is None:
        raise ValueError(f"{name} matrix has no normal channel")


def _mask_of(cur: ScanMatrix, mask):
    if mask is None:
        mask = cur.mask
    if mask is None:
        return np.ones(cur.shape)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != cur.shape:
        raise ValueError(f"mask shape {mask.shape} != grid {cur.shape}")
    return mask


def consistency_loss(prev: ScanMatrix, cur: ScanMatrix, T: PoseSE3, mask=None,
                     grad_clamp: float = 10.0) -> ConsistencyResult:
    """Mask-weighted L1 normal discrepancy between warped ``prev`` and ``cur``.

    Each compared cell contributes ``M * |n_warped - n_cur|_1 * exp(|grad r|)``
    with the range gradient taken on the warped range channel and clamped at
    ``grad_clamp`` before exponentiation. Cells correspond by integer grid
    position. ``mask`` defaults to ``cur.mask``, then to all ones.
    """
    _require_normals(prev, "previous")
    _require_normals(cur, "current")
    if prev.cfg != cur.cfg:
        raise ValueError("matrices use different projection configs")
    M = _mask_of(cur, mask)
    warped = transform_and_reproject(prev, T, cur.cfg)
    both = warped.valid & warped.normal_valid & cur.valid & cur.normal_valid
    count = int(np.count_nonzero(both))
    if count == 0:
        raise NoOverlapError("no overlapping valid cells")
    grad = range_gradient(warped.range, warped.valid, cur.cfg.full_circle)
    diff = np.abs(warped.normals[both] - cur.normals[both]).sum(axis=1)
    terms = M[both] * diff * _edge_weight(grad[both], grad_clamp)
    return ConsistencyResult(float(np.sum(terms)), count)


def _continuous_coords(points, cfg):
    """Fractional (row, col) positions with cell centers at integers."""
    r = np.linalg.norm(points, axis=1)
    az = np.mod(np.arctan2(points[:, 1], points[:, 0]), TWO_PI)
    el = np.arcsin(np.clip(points[:, 2] / np.maximum(r, 1e-300), -1.0, 1.0))
    col = az / cfg.delta_alpha - 0.5
    if cfg.row_elevations is None:
        row = (el - cfg.beta_offset) / cfg.delta_beta - 0.5
    else:
        centers = np.asarray(cfg.row_elevations)
        row = np.interp(el, centers, np.arange(cfg.H), left=-1.0, right=cfg.H)
    return row, col


def consistency_loss_bilinear(prev: ScanMatrix, cur: ScanMatrix, T: PoseSE3, mask=None,
                              grad_clamp: float = 10.0) -> ConsistencyResult:
    """Continuous counterpart of :func:`consistency_loss` for differentiation.

    Every valid previous point with a normal is warped by ``T`` and the per-cell
    term ``M * |R n - n_cur|_1`` is bilinearly interpolated at its fractional
    grid position, counting only corners that are valid in ``cur``. The edge
    weight uses the range gradient at the point's source cell. ``count`` is the
    summed corner coverage, so ``mean`` is continuous in ``T``.
    """
    _require_normals(prev, "previous")
    _require_normals(cur, "current")
    cfg = cur.cfg
    M = _mask_of(cur, mask)
    src = prev.valid & prev.normal_valid
    pts = T.apply(prev.points()[src])
    nrm = T.rotate(prev.normals[src])
    g = _edge_weight(range_gradient(prev.range, prev.valid, prev.cfg.full_circle)[src], grad_clamp)
    row, col = _continuous_coords(pts, cfg)
    r0 = np.floor(row).astype(np.int64)
    c0 = np.floor(col).astype(np.int64)
    fr = row - r0
    fc = col - c0
    ok_cur = cur.valid & cur.normal_valid
    total = np.zeros(len(pts))
    cover = np.zeros(len(pts))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            if cfg.full_circle:
                cc = np.mod(cc, cfg.W)
            inside = (rr >= 0) & (rr < cfg.H) & (cc >= 0) & (cc < cfg.W)
            rr_s = np.where(inside, rr, 0)
            cc_s = np.where(inside, cc, 0)
            w = wr * wc * (inside & ok_cur[rr_s, cc_s])
            term = M[rr_s, cc_s] * np.abs(nrm - cur.normals[rr_s, cc_s]).sum(axis=1)
            total += w * term
            cover += w
    count = float(np.sum(cover))
    if count <= 0.0:
        raise NoOverlapError("no overlapping valid cells")
    return ConsistencyResult(float(np.sum(g * total)), count)


def loss_gradient_fd(prev: ScanMatrix, cur: ScanMatrix, T: PoseSE3, h: float = 1e-4,
                     mask=None, grad_clamp: float = 10.0) -> np.ndarray:
    """Central-difference gradient of the bilinear mean loss.

    Coordinates are a left perturbation (tx, ty, tz, rx, ry, rz) of ``T``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    grad = np.zeros(6)
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        fp = consistency_loss_bilinear(prev, cur, perturb(T, e), mask, grad_clamp).mean
        fm = consistency_loss_bilinear(prev, cur, perturb(T, -e), mask, grad_clamp).mean
        grad[k] = (fp - fm) / (2.0 * h)
    return grad


def mask_regularizer(mask, valid=None) -> float:
    """Cross-entropy pull toward M = 1: ``-sum log(M)`` over valid cells."""
    m = np.clip(np.asarray(mask, dtype=float), MASK_EPS, 1.0)
    if valid is not None:
        m = m[np.asarray(valid, dtype=bool)]
    return float(-np.sum(np.log(m)))


def heuristic_mask(prev: ScanMatrix, cur: ScanMatrix, T: PoseSE3, threshold: float = 0.3) -> np.ndarray:
    """Zero out current cells whose warped range disagrees by more than ``threshold``."""
    warped = transform_and_reproject(prev, T, cur.cfg)
    both = warped.valid & cur.valid
    bad = both & (np.abs(warped.range - cur.range) > threshold)
    return np.where(bad, 0.0, 1.0)


def pose_loss(pred: PoseSE3, gt: PoseSE3, w: LossWeights = LossWeights()):
    """(l_x, l_q, l_o): translation and quaternion errors balanced by s_x, s_q."""
    l_x = float(np.linalg.norm(gt.t - pred.t))
    # PoseSE3 stores unit, hemisphere-canonical quaternions already
    l_q = float(np.linalg.norm(gt.q - pred.q))
    l_o = l_x * math.exp(-w.s_x) + w.s_x + l_q * math.exp(-w.s_q) + w.s_q
    return l_x, l_q, l_o


def total_loss(l_o: float, l_n: float, l_r: float, w: LossWeights = LossWeights(),
               l_x: float = 0.0, l_q: float = 0.0, compared_cell_count: int = 0) -> ConsistencyBreakdown:
    total = l_o + w.lambda_n * l_n + w.lambda_r * l_r
    return ConsistencyBreakdown(l_n, l_r, l_x, l_q, l_o, total, compared_cell_count)


def evaluate_pair(prev: ScanMatrix, cur: ScanMatrix, T: PoseSE3, gt: PoseSE3 | None = None,
                  w: LossWeights = LossWeights(), mask=None, grad_clamp=10.0,
                  normalized=False) -> ConsistencyBreakdown:
    """Every objective for one scan pair. Without ``gt`` the pose terms are zero."""
    res = consistency_loss(prev, cur, T, mask, grad_clamp)
    M = _mask_of(cur, mask)
    l_r = mask_regularizer(M, cur.valid)
    l_x, l_q, l_o = pose_loss(T, gt if gt is not None else T, w)
    l_n = res.mean if normalized else res.total
    return total_loss(l_o, l_n, l_r, w, l_x, l_q, int(res.count))
