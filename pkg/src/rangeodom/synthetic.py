"""Ray-cast synthetic lidar scans of piecewise-planar worlds.

Used by the test suite and the experiment scripts; every scene is exact, so
ground-truth poses and surface normals are known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import Scan
from .pose import PoseSE3, interpolate_rotations
from .projection import ProjectionConfig, project

_EPS = 1e-9


@dataclass(frozen=True)
class Plane:
    """Plane ``normal . x = offset``, optionally clipped to an axis-aligned box.

    ``intersect`` takes one origin (3,) or one origin per ray (N, 3); so does
    :class:`Box`.
    """

    normal: tuple
    offset: float
    lo: tuple | None = None
    hi: tuple | None = None

    def intersect(self, origin, dirs):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offset - origin @ n) / denom
        t = np.where((np.abs(denom) > 1e-12) & (t > _EPS), t, np.inf)
        if self.lo is not None:
            hit = origin + t[:, None] * dirs
            inside = np.all((hit >= np.asarray(self.lo) - 1e-6) & (hit <= np.asarray(self.hi) + 1e-6), axis=1)
            t = np.where(inside, t, np.inf)
        return t


@dataclass(frozen=True)
class Box:
    """Box with yaw about its vertical axis; rays from inside hit its inner walls."""

    center: tuple
    half_extents: tuple
    yaw: float = 0.0

    def intersect(self, origin, dirs):
        # rays that miss the bounding sphere cannot hit the box
        origin = np.asarray(origin, dtype=float)
        v = np.asarray(self.center, dtype=float) - origin
        radius2 = float(np.sum(np.square(self.half_extents))) * (1 + 1e-9)
        vv = np.sum(v * v, axis=-1)
        proj = np.sum(dirs * v, axis=-1)
        near = (vv <= radius2) | ((proj > 0) & (vv - proj * proj <= radius2))
        idx = np.flatnonzero(np.broadcast_to(near, (len(dirs),)))
        t = np.full(len(dirs), np.inf)
        if len(idx):
            t[idx] = self._intersect(origin if origin.ndim == 1 else origin[idx], dirs[idx])
        return t

    def _intersect(self, origin, dirs):
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> box
        o = (np.asarray(origin, dtype=float) - np.asarray(self.center, dtype=float)) @ rot.T
        d = dirs @ rot.T
        h = np.asarray(self.half_extents, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-h - o) * inv
            t2 = (h - o) * inv
        t1 = np.where(np.isnan(t1), -np.inf, t1)
        t2 = np.where(np.isnan(t2), np.inf, t2)
        tnear = np.max(np.minimum(t1, t2), axis=1)
        tfar = np.min(np.maximum(t1, t2), axis=1)
        hit = tnear <= tfar
        t = np.where(tnear > _EPS, tnear, np.where(tfar > _EPS, tfar, np.inf))
        return np.where(hit, t, np.inf)


@dataclass
class Scene:
    primitives: list = field(default_factory=list)
    max_range: float = 120.0

    def cast(self, origin, dirs) -> np.ndarray:
        t = np.full(len(dirs), np.inf)
        for prim in self.primitives:
            t = np.minimum(t, prim.intersect(origin, dirs))
        t[t > self.max_range] = np.inf
        return t


def ground_plane_scene(height=1.73, max_range=120.0) -> Scene:
    return Scene([Plane((0, 0, 1), -height)], max_range)


def three_plane_scene(rng=None, clutter=8, height=1.73, max_range=80.0) -> Scene:
    """Ground plus two tilted, mutually non-parallel walls, plus random boxes."""
    rng = np.random.default_rng(rng)
    prims = [
        Plane((0, 0, 1), -height),
        Plane((math.cos(0.3), math.sin(0.3), 0.15), 18.0),
        Plane((math.cos(2.0), math.sin(2.0), -0.1), 14.0),
    ]
    for _ in range(clutter):
        r = rng.uniform(6.0, 25.0)
        a = rng.uniform(0, 2 * math.pi)
        center = (r * math.cos(a), r * math.sin(a), -height + 1.5)
        prims.append(Box(center, tuple(rng.uniform(0.4, 1.5, 3)), rng.uniform(0, math.pi)))
    return Scene(prims, max_range)


def courtyard_scene(rng=None, n_boxes=30, height=1.73, size=(140.0, 70.0), max_range=80.0) -> Scene:
    """Closed yard with a ground plane, four walls, a ramp and scattered boxes."""
    rng = np.random.default_rng(rng)
    lx, ly = size
    prims = [Box((0.0, 0.0, -height + 10.0), (lx / 2, ly / 2, 10.0))]
    prims.append(Plane((0.3, 0.2, 1.0), 0.3 * 20.0 + 0.2 * 15.0 - height + 0.8,
                       lo=(12.0, 10.0, -height - 1), hi=(30.0, 25.0, 10.0)))
    placed = 0
    while placed < n_boxes:
        x = rng.uniform(-lx / 2 + 5, lx / 2 - 5)
        y = rng.uniform(-ly / 2 + 5, ly / 2 - 5)
        if abs(y) < 5.0:  # keep the driving corridor along the x axis clear
            continue
        half = tuple(rng.uniform([0.5, 0.5, 0.5], [3.0, 3.0, 4.0]))
        prims.append(Box((x, y, -height + half[2]), half, rng.uniform(0, math.pi)))
        placed += 1
    return Scene(prims, max_range)


def render_scan(scene: Scene, pose: PoseSE3, cfg: ProjectionConfig = ProjectionConfig(),
                noise=0.0, jitter=0.0, rng=None, sequence_index=0, offset=(0.0, 0.0),
                point_noise=0.0, sweep_from: PoseSE3 | None = None) -> Scan:
    """Cast one ray per cell from ``pose`` (world-from-sensor).

    With ``sweep_from`` the sensor moves during the revolution: a ray whose
    column is c is cast from ``pose interp(I, T, c / W)^-1`` where
    ``T = sweep_from^-1 pose``, and the point is expressed in that
    instantaneous frame. This is the sweep model the mapping module undoes.
    """
    rng = np.random.default_rng(rng)
    el = cfg.row_elevation_centers()[:, None]
    az = cfg.column_azimuths()[None, :]
    el, az = np.broadcast_arrays(el, az)
    el = el.reshape(-1).copy()
    az = az.reshape(-1) + offset[1] * cfg.delta_alpha
    el = el + offset[0] * cfg.delta_beta
    if jitter:
        az += rng.uniform(-jitter / 2, jitter / 2, az.shape) * cfg.delta_alpha
        el += rng.uniform(-jitter / 2, jitter / 2, el.shape) * cfg.delta_beta
    dirs = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)
    if sweep_from is None:
        t = scene.cast(pose.t, pose.rotate(dirs))
    else:
        col = np.mod(cfg.column_of(np.mod(az, 2 * np.pi)), cfg.W)
        frac = col / cfg.W
        motion = sweep_from.inverse() @ pose
        inv_rots = interpolate_rotations(PoseSE3.identity(), motion, frac).inv()
        rots = pose.rotation * inv_rots
        origins = pose.t - rots.apply(frac[:, None] * motion.t)
        t = scene.cast(origins, rots.apply(dirs))
    hit = np.isfinite(t)
    r = t[hit]
    if noise:
        r = r + rng.normal(0.0, noise, r.shape)
    pts = dirs[hit] * r[:, None]
    if point_noise:
        pts = pts + rng.normal(0.0, point_noise, pts.shape)
    inten = np.full(len(pts), 0.5)
    return Scan(pts, inten, timestamp=0.1 * sequence_index, sequence_index=sequence_index)


def rigid_sequence(scene: Scene, poses, cfg: ProjectionConfig = ProjectionConfig(),
                   reference=None) -> list[Scan]:
    """One fixed set of world points seen from every pose (world-from-sensor).

    The points come from a scan rendered at ``poses[reference]`` (default the
    middle pose); only those that win their cell in every view are kept, so
    each scan holds exactly the same points and every pair of scans has exact
    one-to-one correspondences.
    """
    poses = list(poses)
    ref = poses[len(poses) // 2 if reference is None else reference]
    base = render_scan(scene, ref, cfg)
    world = ref.apply(base.points)
    keep = np.arange(len(world))
    for pose in poses:
        m = project(Scan(pose.inverse().apply(world[keep]), base.intensity[keep]), cfg)
        keep = keep[np.sort(m.index[m.valid])]
    return [Scan(p.inverse().apply(world[keep]), base.intensity[keep], timestamp=0.1 * k, sequence_index=k)
            for k, p in enumerate(poses)]


def render_sequence(scene: Scene, poses, cfg: ProjectionConfig = ProjectionConfig(), swept=False,
                    rng=None, **kwargs) -> list[Scan]:
    """Render one scan per world-from-sensor pose.

    With ``swept`` every scan is taken while moving from the previous pose to
    its own (the first one repeats the first step backwards). Extra keyword
    arguments go to :func:`render_scan`.
    """
    rng = np.random.default_rng(rng)
    poses = list(poses)
    scans = []
    for k, pose in enumerate(poses):
        before = None
        if swept and k > 0:
            before = poses[k - 1]
        elif swept and len(poses) > 1:
            before = pose @ (poses[0].inverse() @ poses[1]).inverse()
        scans.append(render_scan(scene, pose, cfg, rng=rng, sequence_index=k, sweep_from=before, **kwargs))
    return scans


def smooth_trajectory(n=50, step=1.0, rng=None, height=0.0, amplitude=(2.0, 5.0),
                      wavelength=(80.0, 150.0)) -> tuple[list[PoseSE3], PoseSE3]:
    """Gently curving ground-vehicle path along x (a sine of random amplitude and wavelength).

    Returns the poses relative to the first one (which is the identity) and
    the first pose in world coordinates, for rendering.
    """
    rng = np.random.default_rng(rng)
    amp = rng.uniform(*amplitude)
    wave = rng.uniform(*wavelength)
    phase = rng.uniform(0, 2 * math.pi)
    poses = []
    x0 = -step * (n - 1) / 2
    for k in range(n):
        x = x0 + step * k
        arg = 2 * math.pi * (x - x0) / wave + phase
        y = amp * (math.sin(arg) - math.sin(phase))
        yaw = math.atan(amp * 2 * math.pi / wave * math.cos(arg))
        pitch = 0.01 * math.sin(0.2 * k)
        poses.append(PoseSE3.from_euler("zyx", [yaw, pitch, 0.0], (x, y, height)))
    first_inv = poses[0].inverse()
    return [first_inv @ p for p in poses], poses[0]
