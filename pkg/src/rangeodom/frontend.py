"""Scan-to-scan relative pose by point-to-plane alignment of smooth points.

This stands in for a learned pose regressor: any callable with the signature
of :func:`estimate_relative_pose` can replace it in the pipeline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .normals import NormalMap, neighbor
from .pose import PoseSE3, apply_interpolated, exp_se3
from .projection import TWO_PI, ScanMatrix
from .sweep import azimuth_fraction, column_fraction, compensate_distortion, compensate_normals
from .registration import (
    DivergedError,
    InsufficientGeometryError,
    PlaneTarget,
    gate_normals,
    huber_weights,
    rms,
    robust_cost,
    solve_increment,
)

logger = logging.getLogger(__name__)

# 3 rows x 5 columns, center -14, all other taps 1
SMOOTHNESS_KERNEL = np.ones((3, 5))
SMOOTHNESS_KERNEL[1, 2] = -14.0
MIN_POINTS = 6


@dataclass(frozen=True)
class FrontendConfig:
    max_iterations: int = 15
    convergence_eps: float = 1e-5
    correspondence_max_dist: float = 1.0
    selection_fraction: float = 0.01
    huber_delta: float = 0.1
    max_condition: float = 1e8
    normal_gate_deg: float = 25.0

    @property
    def min_cos(self) -> float:
        return math.cos(math.radians(self.normal_gate_deg))

    def __post_init__(self):
        if not 0 < self.normal_gate_deg <= 180:
            raise ValueError("normal_gate_deg must be in (0, 180]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for name in ("convergence_eps", "correspondence_max_dist", "huber_delta", "max_condition"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.selection_fraction <= 1:
            raise ValueError("selection_fraction must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class SmoothnessMap:
    c: np.ndarray
    valid: np.ndarray


@dataclass
class FrontendDiagnostics:
    iterations: int = 0
    rms_residual: float = float("nan")
    matches: int = 0
    condition_number: float = float("nan")
    initial_cost: float = float("nan")
    final_cost: float = float("nan")
    converged: bool = False

    def to_record(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items())


def smoothness(nm: NormalMap) -> SmoothnessMap:
    """Squared response of the zero-sum 3x5 kernel, summed over normal components.

    A cell is valid only when all fifteen cells under the kernel carry a
    normal. Since the taps sum to zero the response is accumulated as
    ``sum k_ij (n_ij - n_center)``, which is exactly zero on a constant field.
    """
    acc = np.zeros_like(nm.normals)
    valid = nm.valid.copy()
    for i, dr in enumerate((-1, 0, 1)):
        for j, dc in enumerate((-2, -1, 0, 1, 2)):
            acc += SMOOTHNESS_KERNEL[i, j] * (neighbor(nm.normals, dr, dc, nm.wrap_columns) - nm.normals)
            valid &= neighbor(nm.valid, dr, dc, nm.wrap_columns, False)
    c = np.where(valid, np.sum(acc * acc, axis=-1), 0.0)
    return SmoothnessMap(c, valid)


def select_planar_points(sm: SmoothnessMap, mask=None, fraction: float = 0.01) -> np.ndarray:
    """Flat (row-major) indices of the smoothest cells, excluding masked ones.

    Cells are ranked by ascending c with ties broken by row-major position;
    cells with mask < 0.5 are skipped. At most ``floor(fraction * H * W)`` are
    returned.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    ok = sm.valid.copy()
    if mask is not None:
        ok &= np.asarray(mask) >= 0.5
    flat = np.flatnonzero(ok)
    if len(flat) < MIN_POINTS:
        raise InsufficientGeometryError(f"only {len(flat)} selectable cells")
    n = int(np.floor(fraction * sm.c.size))
    order = np.lexsort((flat, sm.c.reshape(-1)[flat]))
    return flat[order[:n]]


def cell_selection(m: ScanMatrix, fraction: float, mask=None) -> np.ndarray:
    if m.normals is None:
        raise ValueError("matrix has no normal channel")
    nm = NormalMap(m.normals, m.normal_valid, m.cfg.full_circle)
    if mask is None:
        mask = m.mask
    return select_planar_points(smoothness(nm), mask, fraction)


class SweptTarget:
    """Nearest-plane lookup in a swept scan undistorted by a variable motion.

    The index is built once over the raw points. A query (in the
    end-of-sweep frame) is mapped back into raw coordinates with its own sweep
    fraction, the raw nearest neighbor is found, and that neighbor and its
    normal are undistorted exactly with their own fraction.
    """

    def __init__(self, m: ScanMatrix):
        if m.normals is None:
            raise ValueError("matrix has no normal channel")
        ok = m.valid & m.normal_valid
        self.raw = PlaneTarget(m.points()[ok], m.normals[ok])
        self.s = column_fraction(m)[ok]
        self.cfg = m.cfg

    def match(self, query, max_dist, motion: PoseSE3, query_normals=None, min_cos=-1.0):
        """(matched, residuals, normals, sweep fractions, ungated near mask)."""
        s_q = np.clip(azimuth_fraction(query) * TWO_PI / (self.cfg.W * self.cfg.delta_alpha), 0.0, 1.0)
        raw_q = apply_interpolated(PoseSE3.identity(), motion, s_q, query)
        dist, idx = self.raw.tree.query(raw_q, k=1, distance_upper_bound=2.0 * max_dist)
        ok = np.isfinite(dist)
        j = idx[ok]
        m_pts = compensate_distortion(self.raw.points[j], motion, self.s[j])
        m_nrm = compensate_normals(self.raw.normals[j], motion, self.s[j])
        close = np.linalg.norm(query[ok] - m_pts, axis=1) <= max_dist
        sel = np.flatnonzero(ok)[close]
        e = np.zeros(len(query))
        nrm = np.zeros((len(query), 3))
        s_j = np.zeros(len(query))
        e[sel] = np.einsum("ij,ij->i", query[sel] - m_pts[close], m_nrm[close])
        nrm[sel] = m_nrm[close]
        s_j[sel] = self.s[j][close]
        near = np.zeros(len(query), dtype=bool)
        near[sel] = True
        return gate_normals(near, nrm, query_normals, min_cos), e, nrm, s_j, near


def estimate_relative_pose(prev: ScanMatrix, cur: ScanMatrix, T0: PoseSE3 | None = None,
                           cfg: FrontendConfig = FrontendConfig(), mask=None, selection=None,
                           target=None, sweep: bool = False):
    """Pose mapping ``cur`` coordinates into ``prev``'s frame, plus diagnostics.

    ``selection`` (flat cell indices of ``cur``) defaults to the smoothness
    selection; ``target`` may pass a prebuilt :class:`PlaneTarget` (or, with
    ``sweep``, a :class:`SweptTarget`) over ``prev``.

    With ``sweep`` both scans are treated as swept with the same constant
    motion, the pose being estimated: selected points of ``cur`` and their
    matches in ``prev`` are undistorted by the current estimate every
    iteration, and the Jacobian row of a pair is scaled by ``1 - s_i + s_j``,
    its first-order sensitivity to the motion.
    """
    if target is None:
        if sweep:
            target = SweptTarget(prev)
        else:
            if prev.normals is None:
                raise ValueError("previous matrix has no normal channel")
            ok = prev.valid & prev.normal_valid
            target = PlaneTarget(prev.points()[ok], prev.normals[ok])
    return _solve(prev, cur, T0, cfg, mask, selection, target, sweep)


def _solve(prev, cur, T0, cfg, mask, selection, target, sweep):
    T = T0 if T0 is not None else PoseSE3.identity()
    if selection is None:
        selection = cell_selection(cur, cfg.selection_fraction, mask)
    src = cur.points().reshape(-1, 3)[selection]
    if len(src) < MIN_POINTS:
        raise InsufficientGeometryError(f"only {len(src)} source points")
    s = column_fraction(cur).reshape(-1)[selection]
    src_n = cur.normals.reshape(-1, 3)[selection]

    def place(pose):
        return pose.apply(compensate_distortion(src, pose, s)) if sweep else pose.apply(src)

    def match(pose, q):
        qn = pose.rotate(compensate_normals(src_n, pose, s) if sweep else src_n)
        if sweep:
            return target.match(q, cfg.correspondence_max_dist, pose, qn, cfg.min_cos)
        matched, e, n, near = target.match(q, cfg.correspondence_max_dist, qn, cfg.min_cos, with_near=True)
        return matched, e, n, None, near

    diag = FrontendDiagnostics()
    grew = 0
    last_cost = None
    best = None
    for it in range(cfg.max_iterations):
        q = place(T)
        matched, e, n, s_j, near = match(T, q)
        cost = robust_cost(matched, e, cfg.huber_delta, cfg.correspondence_max_dist, near)
        if it == 0:
            diag.initial_cost = cost
        if best is None or cost < best[0]:
            best = (cost, T, matched, e)
        if last_cost is not None:
            grew = grew + 1 if cost > last_cost else 0
            if grew >= 3:
                raise DivergedError("residual grew for 3 consecutive iterations", T)
        last_cost = cost
        if np.count_nonzero(matched) < MIN_POINTS:
            raise InsufficientGeometryError(f"only {np.count_nonzero(matched)} correspondences")
        w = huber_weights(e[matched], cfg.huber_delta)
        jn = n[matched] * (1.0 - s[matched] + s_j[matched])[:, None] if sweep else n[matched]
        delta, cond = solve_increment(q[matched], jn, e[matched], w, cfg.max_condition)
        diag.condition_number = cond
        T = exp_se3(delta) @ T
        diag.iterations = it + 1
        if np.linalg.norm(delta) < cfg.convergence_eps:
            diag.converged = True
            break

    # the last iterate is returned unless it costs more than T0; then the
    # cheapest visited one is, so the result never regresses
    matched, e, _, _, near = match(T, place(T))
    cost = robust_cost(matched, e, cfg.huber_delta, cfg.correspondence_max_dist, near)
    if best is None:
        diag.initial_cost = cost
    if best is None or cost <= diag.initial_cost:
        best = (cost, T, matched, e)
    diag.final_cost, T, matched, e = best
    diag.matches = int(np.count_nonzero(matched))
    diag.rms_residual = rms(e[matched])
    return T, diag
