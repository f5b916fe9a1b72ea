"""Scan-to-map refinement over a sliding window of world-frame scans."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .frontend import FrontendConfig, MIN_POINTS, cell_selection, estimate_relative_pose
from .consistency import heuristic_mask
from .ingest import Scan
from .normals import grid_normals
from .pose import PoseSE3, exp_se3
from .projection import ProjectionConfig, ScanMatrix, project
from .sweep import azimuth_fraction, column_fraction, compensate_distortion, compensate_normals  # noqa: F401
from .registration import (
    InsufficientGeometryError,
    PlaneTarget,
    huber_weights,
    rms,
    robust_cost,
    solve_increment,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MappingConfig:
    n_iter: int = 15
    n_m: int = 100
    n_c_fraction: float = 0.01
    correspondence_max_dist: float = 1.0
    distortion_compensation: bool = True
    distortion_source: str = "frontend"  # or "predicted"
    huber_delta: float = 0.1
    convergence_eps: float = 1e-6
    max_condition: float = 1e8
    map_voxel_size: float = 0.2
    max_halvings: int = 4
    normal_gate_deg: float = 25.0

    @property
    def min_cos(self) -> float:
        return math.cos(math.radians(self.normal_gate_deg))

    def __post_init__(self):
        if not 0 < self.normal_gate_deg <= 180:
            raise ValueError("normal_gate_deg must be in (0, 180]")
        if self.n_iter < 0 or self.n_m < 1:
            raise ValueError("n_iter must be >= 0 and n_m >= 1")
        if not 0 < self.n_c_fraction <= 1:
            raise ValueError("n_c_fraction must be in (0, 1]")
        if self.correspondence_max_dist <= 0 or self.huber_delta <= 0:
            raise ValueError("distances must be positive")
        if self.distortion_source not in ("frontend", "predicted"):
            raise ValueError("distortion_source must be 'frontend' or 'predicted'")
        if self.map_voxel_size < 0:
            raise ValueError("map_voxel_size must be >= 0")


class MapWindow:
    """The last ``n_m`` inserted point sets (world frame) with a nearest-point index.

    The index is rebuilt on every insertion and always covers exactly the
    resident sets.
    """

    def __init__(self, n_m: int = 100):
        if n_m < 1:
            raise ValueError("n_m must be >= 1")
        self.n_m = n_m
        self.sets: deque = deque()
        self.target: PlaneTarget | None = None

    def __len__(self):
        return len(self.sets)

    @property
    def n_points(self) -> int:
        return sum(len(p) for p, _, _ in self.sets)

    def add(self, points, normals, tag=None):
        self.sets.append((np.asarray(points, float), np.asarray(normals, float), tag))
        while len(self.sets) > self.n_m:
            self.sets.popleft()
        self._rebuild()

    def _rebuild(self):
        pts = np.concatenate([p for p, _, _ in self.sets])
        nrm = np.concatenate([n for _, n, _ in self.sets])
        self.target = PlaneTarget(pts, nrm) if len(pts) else None

    def tags(self):
        return [t for _, _, t in self.sets]

    def dump(self, path):
        """ASCII ``x y z nx ny nz`` lines, one block per resident set."""
        with open(path, "w") as f:
            for k, (p, n, tag) in enumerate(self.sets):
                f.write(f"# set {k} tag={tag}\n")
                np.savetxt(f, np.hstack([p, n]), fmt="%.6f")


@dataclass
class ScanDiagnostics:
    scan: int = 0
    iterations: int = 0
    residual: float = float("nan")
    matches: int = 0
    fallback: bool = False
    frontend_ok: bool = False
    frontend_iterations: int = 0
    elapsed_ms: float = 0.0
    note: str = ""

    def to_record(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items() if k != "note" or v)


def predict_initial_pose(traj) -> PoseSE3:
    """Constant-velocity guess ``M[t-1] M[t-2]^-1 M[t-1]``."""
    if len(traj) == 0:
        return PoseSE3.identity()
    if len(traj) == 1:
        return traj[-1]
    a, b = traj[-1], traj[-2]
    return a @ b.inverse() @ a


def voxel_downsample(points, normals, voxel):
    """Keep the first point of every occupied voxel (deterministic)."""
    if voxel <= 0 or len(points) == 0:
        return points, normals
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    first.sort()
    return points[first], normals[first]


def sweep_motion(M_t: PoseSE3, M_prev: PoseSE3) -> PoseSE3:
    """Relative pose ``M_prev^-1 M_t`` spanned by one sweep."""
    return M_prev.inverse() @ M_t


def world_points(points, s, M_t: PoseSE3, M_prev: PoseSE3 | None = None) -> np.ndarray:
    """Scan points into the world frame.

    With ``M_prev`` a point at sweep fraction s is placed by
    ``M_t interp(I, T, s)^-1`` with ``T = M_prev^-1 M_t``, i.e. it is first
    undistorted exactly as :func:`compensate_distortion` does. Without it this
    is ``M_t`` applied rigidly.
    """
    if M_prev is None:
        return M_t.apply(points)
    return M_t.apply(compensate_distortion(points, sweep_motion(M_t, M_prev), s))


def insert_scan(window: MapWindow, points, normals, s, M_t: PoseSE3, M_prev: PoseSE3 | None = None,
                voxel: float = 0.0, tag=None) -> MapWindow:
    """Place a scan in the world, append it and evict the oldest set past ``n_m``."""
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    wp = world_points(points, s, M_t, M_prev)
    if M_prev is None:
        wn = M_t.rotate(normals)
    else:
        wn = M_t.rotate(compensate_normals(normals, sweep_motion(M_t, M_prev), s))
    wp, wn = voxel_downsample(wp, wn, voxel)
    window.add(wp, wn, tag)
    return window


def register_to_map(points, window: MapWindow, M_init: PoseSE3, cfg: MappingConfig = MappingConfig(),
                    normals=None):
    """Point-to-plane refinement of ``M_init`` against the map.

    Each accepted Gauss-Newton increment ``dM_k`` is left-multiplied onto the
    running estimate, so the result is ``dM_K ... dM_1 M_init``. A step that
    raises the robust cost is halved up to ``max_halvings`` times; if none of
    the shortened steps helps the loop ends. With ``normals`` (sensor frame)
    correspondences are gated by normal agreement.
    Returns ``(M_t, info)``.
    """
    if window.target is None or len(window) == 0:
        raise InsufficientGeometryError("map is empty")
    points = np.asarray(points, dtype=float)
    if len(points) < MIN_POINTS:
        raise InsufficientGeometryError(f"only {len(points)} selected points")
    target = window.target
    M = M_init
    increments = []
    info = {"iterations": 0, "residual": float("nan"), "matches": 0, "condition": float("nan"),
            "costs": []}
    if normals is not None:
        normals = np.asarray(normals, dtype=float)

    def match(pose, q):
        qn = None if normals is None else pose.rotate(normals)
        return target.match(q, cfg.correspondence_max_dist, qn, cfg.min_cos, with_near=True)

    q = M.apply(points)
    matched, e, n, near = match(M, q)
    cost = robust_cost(matched, e, cfg.huber_delta, cfg.correspondence_max_dist, near)
    info["costs"].append(cost)
    for _ in range(cfg.n_iter):
        if np.count_nonzero(matched) < MIN_POINTS:
            raise InsufficientGeometryError(f"only {np.count_nonzero(matched)} correspondences")
        w = huber_weights(e[matched], cfg.huber_delta)
        delta, cond = solve_increment(q[matched], n[matched], e[matched], w, cfg.max_condition)
        info["condition"] = cond
        for _ in range(cfg.max_halvings + 1):
            step = exp_se3(delta)
            cand = step @ M
            q2 = cand.apply(points)
            m2, e2, n2, near2 = match(cand, q2)
            cost2 = robust_cost(m2, e2, cfg.huber_delta, cfg.correspondence_max_dist, near2)
            if cost2 <= cost:
                break
            delta = 0.5 * delta
        else:
            break
        increments.append(step)
        M, q, matched, e, n, cost = cand, q2, m2, e2, n2, cost2
        info["costs"].append(cost)
        info["iterations"] += 1
        if np.linalg.norm(delta) < cfg.convergence_eps:
            break
    if np.count_nonzero(matched) < MIN_POINTS:
        raise InsufficientGeometryError(f"only {np.count_nonzero(matched)} correspondences")
    info["matches"] = int(np.count_nonzero(matched))
    info["residual"] = rms(e[matched])
    info["increments"] = increments
    return M, info


@dataclass
class PipelineConfig:
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    normal_window: int = 3


@dataclass
class PipelineResult:
    trajectory: list
    diagnostics: list
    relative: list  # frontend poses (cur -> prev frame), None where it failed

    @property
    def mean_ms(self) -> float:
        return float(np.mean([d.elapsed_ms for d in self.diagnostics])) if self.diagnostics else 0.0


def prepare_matrix(scan: Scan, cfg: PipelineConfig, mask=None) -> ScanMatrix:
    m = project(scan, cfg.projection)
    m = m.with_normals(grid_normals(m, cfg.normal_window))
    return m.with_mask(mask) if mask is not None else m


def run_pipeline(scans, cfg: PipelineConfig = PipelineConfig(), masks=None,
                 heuristic_threshold: float = 0.3) -> PipelineResult:
    """Odometry plus mapping over a scan sequence; the first pose is the identity.

    ``masks`` is None, one (H, W) array per scan, or ``"heuristic"`` to mask
    cells that disagree with the previous scan warped by the last relative pose.
    Registration failures fall back to the constant-velocity prediction and
    are flagged in the per-scan diagnostics.
    """
    scans = list(scans)
    if isinstance(masks, str) and masks != "heuristic":
        raise ValueError(f"unknown mask mode {masks!r}")
    if not scans:
        raise ValueError("run_pipeline needs at least one scan")
    mc = cfg.mapping
    window = MapWindow(mc.n_m)
    traj, diags, rel = [], [], []
    prev_m = None
    last_rel = PoseSE3.identity()
    pending = None
    for k, scan in enumerate(scans):
        t0 = time.perf_counter()
        d = ScanDiagnostics(scan=k)
        if isinstance(masks, str):
            m = prepare_matrix(scan, cfg)
            if prev_m is not None:
                m = m.with_mask(heuristic_mask(prev_m, m, last_rel.inverse(), heuristic_threshold))
        else:
            m = prepare_matrix(scan, cfg, None if masks is None else masks[k])
        ok = m.valid & m.normal_valid
        try:
            sel = cell_selection(m, mc.n_c_fraction)
        except InsufficientGeometryError as exc:
            sel = np.zeros(0, dtype=np.int64)
            d.note = f"selection:{exc}"

        T_rel = None
        if prev_m is not None:
            try:
                T_rel, fd = estimate_relative_pose(prev_m, m, last_rel, cfg.frontend, selection=sel,
                                                   sweep=mc.distortion_compensation)
                d.frontend_ok = True
                d.frontend_iterations = fd.iterations
                last_rel = T_rel
            except (InsufficientGeometryError, RuntimeError) as exc:
                d.note = f"frontend:{exc}"
        rel.append(T_rel)

        M_init = predict_initial_pose(traj)
        pts_all = m.points()[ok]
        nrm_all = m.normals[ok]
        s_all = column_fraction(m)[ok]
        M_prev = traj[-1] if traj else None
        compensate = mc.distortion_compensation and M_prev is not None
        motion = None
        if compensate:
            if mc.distortion_source == "predicted" and len(traj) >= 2:
                motion = M_prev.inverse() @ M_init
            elif T_rel is not None:
                motion = T_rel
            elif len(traj) >= 2:
                motion = M_prev.inverse() @ M_init
        sel_pts = m.points().reshape(-1, 3)[sel]
        sel_nrm = m.normals.reshape(-1, 3)[sel]
        if motion is not None:
            sel_s = column_fraction(m).reshape(-1)[sel]
            sel_pts = compensate_distortion(sel_pts, motion, sel_s)
            sel_nrm = compensate_normals(sel_nrm, motion, sel_s)

        if pending is not None:
            # the first scan waits for a motion estimate so it enters the map undistorted
            p0, n0, s0 = pending
            before = traj[0] @ motion.inverse() if motion is not None else None
            insert_scan(window, p0, n0, s0, traj[0], before, mc.map_voxel_size, tag=0)
            pending = None

        if k == 0:
            M_t = PoseSE3.identity()
        else:
            try:
                M_t, info = register_to_map(sel_pts, window, M_init, mc, sel_nrm)
                d.iterations = info["iterations"]
                d.residual = info["residual"]
                d.matches = info["matches"]
            except (InsufficientGeometryError, np.linalg.LinAlgError) as exc:
                M_t = M_init
                d.fallback = True
                d.note = f"mapping:{exc}"
                logger.warning("scan %d: registration failed (%s); using predicted pose", k, exc)
        if k == 0 and mc.distortion_compensation and len(scans) > 1:
            pending = (pts_all, nrm_all, s_all)
        else:
            insert_scan(window, pts_all, nrm_all, s_all, M_t, M_prev if motion is not None else None,
                        mc.map_voxel_size, tag=k)
        traj.append(M_t)
        prev_m = m
        d.elapsed_ms = 1000.0 * (time.perf_counter() - t0)
        diags.append(d)
    return PipelineResult(traj, diags, rel)
