"""Cylindrical range-image encoding of scans and its inverse."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import Scan
from .pose import PoseSE3

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ProjectionConfig:
    """Grid geometry.

    Rows grow with elevation: row k spans elevations
    ``[beta_offset + k*delta_beta, beta_offset + (k+1)*delta_beta)``. Columns
    grow with azimuth ``atan2(y, x)`` in [0, 2*pi). The defaults follow the
    HDL-64 field of view (+2 deg to -24.9 deg).

    ``row_elevations`` optionally replaces the uniform vertical model with a
    per-row table of center elevations (radians, strictly increasing).
    """

    H: int = 64
    W: int = 1800
    delta_alpha: float | None = None
    delta_beta: float = math.radians(26.9) / 64
    beta_offset: float = math.radians(-24.9)
    row_elevations: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.H <= 0 or self.W <= 0:
            raise ValueError("H and W must be positive")
        if self.delta_alpha is None:
            object.__setattr__(self, "delta_alpha", TWO_PI / self.W)
        if self.delta_alpha <= 0 or self.delta_beta <= 0:
            raise ValueError("angular resolutions must be positive")
        if self.W * self.delta_alpha > TWO_PI + 1e-9:
            raise ValueError("W * delta_alpha exceeds a full revolution")
        if self.row_elevations is not None:
            rows = np.asarray(self.row_elevations, dtype=float)
            if rows.shape != (self.H,) or np.any(np.diff(rows) <= 0):
                raise ValueError("row_elevations must be H strictly increasing angles")
            object.__setattr__(self, "row_elevations", tuple(float(v) for v in rows))

    @property
    def full_circle(self) -> bool:
        return abs(self.W * self.delta_alpha - TWO_PI) < 1e-9

    def column_of(self, azimuth):
        return np.floor(azimuth / self.delta_alpha).astype(np.int64)

    def row_of(self, elevation):
        if self.row_elevations is None:
            return np.floor((elevation - self.beta_offset) / self.delta_beta).astype(np.int64)
        c = np.asarray(self.row_elevations)
        edges = np.concatenate([[c[0] - (c[1] - c[0]) / 2 if len(c) > 1 else c[0] - self.delta_beta / 2],
                                (c[1:] + c[:-1]) / 2,
                                [c[-1] + (c[-1] - c[-2]) / 2 if len(c) > 1 else c[0] + self.delta_beta / 2]])
        row = np.searchsorted(edges, elevation, side="right") - 1
        return np.where(elevation >= edges[-1], self.H, row).astype(np.int64)

    def column_azimuths(self) -> np.ndarray:
        return (np.arange(self.W) + 0.5) * self.delta_alpha

    def row_elevation_centers(self) -> np.ndarray:
        if self.row_elevations is not None:
            return np.asarray(self.row_elevations)
        return self.beta_offset + (np.arange(self.H) + 0.5) * self.delta_beta

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) unit vectors through every cell center."""
        el = self.row_elevation_centers()[:, None]
        az = self.column_azimuths()[None, :]
        return np.stack(np.broadcast_arrays(np.cos(el) * np.cos(az),
                                            np.cos(el) * np.sin(az),
                                            np.sin(el)), axis=-1)


@dataclass(frozen=True, eq=False)
class ScanMatrix:
    """H x W multi-channel grid.

    Invalid cells have ``valid == False``, ``range == 0`` and ``index == -1``;
    consumers branch on ``valid`` only. ``xyz`` keeps the exact coordinates of
    the point that won each cell. ``normals``/``normal_valid`` and ``mask`` are
    attached later by the normal estimator and by mask sources.
    """

    cfg: ProjectionConfig
    range: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray
    index: np.ndarray
    xyz: np.ndarray | None = None
    normals: np.ndarray | None = None
    normal_valid: np.ndarray | None = None
    mask: np.ndarray | None = None
    n_dropped: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.range.shape

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid))

    def points(self) -> np.ndarray:
        """(H, W, 3) cell coordinates: exact where known, else cell centers."""
        if self.xyz is not None:
            return self.xyz
        return cell_center_points(self)

    def with_normals(self, nm) -> "ScanMatrix":
        return replace(self, normals=nm.normals, normal_valid=nm.valid)

    def with_mask(self, mask) -> "ScanMatrix":
        mask = None if mask is None else np.asarray(mask, dtype=float)
        if mask is not None and mask.shape != self.shape:
            raise ValueError(f"mask shape {mask.shape} != grid {self.shape}")
        return replace(self, mask=mask)


def _project_arrays(points, intensity, cfg, source_index, normals=None, normal_valid=None):
    points = np.asarray(points, dtype=float)
    n = len(points)
    H, W = cfg.H, cfg.W
    r = np.sqrt(np.einsum("ij,ij->i", points, points))
    ok = r > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        az = np.mod(np.arctan2(points[:, 1], points[:, 0]), TWO_PI)
        az[az >= TWO_PI] = 0.0  # seam wraps to column 0
        el = np.arcsin(np.clip(points[:, 2] / np.where(ok, r, 1.0), -1.0, 1.0))
    col = cfg.column_of(az)
    row = cfg.row_of(el)
    ok &= (col >= 0) & (col < W) & (row >= 0) & (row < H)
    kept = np.flatnonzero(ok)
    key = row[kept] * W + col[kept]
    order = np.lexsort((kept, r[kept], key))
    key_sorted = key[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = key_sorted[1:] != key_sorted[:-1]
    win = kept[order[first]]
    cells = key_sorted[first]

    rng = np.zeros(H * W)
    inten = np.zeros(H * W)
    valid = np.zeros(H * W, dtype=bool)
    index = np.full(H * W, -1, dtype=np.int64)
    xyz = np.zeros((H * W, 3))
    rng[cells] = r[win]
    inten[cells] = intensity[win]
    valid[cells] = True
    index[cells] = source_index[win]
    xyz[cells] = points[win]
    out = dict(
        cfg=cfg,
        range=rng.reshape(H, W),
        intensity=inten.reshape(H, W),
        valid=valid.reshape(H, W),
        index=index.reshape(H, W),
        xyz=xyz.reshape(H, W, 3),
        n_dropped=int(n - len(kept)),
    )
    if normals is not None:
        nrm = np.zeros((H * W, 3))
        nv = np.zeros(H * W, dtype=bool)
        nrm[cells] = normals[win]
        nv[cells] = normal_valid[win]
        out["normals"] = nrm.reshape(H, W, 3)
        out["normal_valid"] = nv.reshape(H, W)
    return ScanMatrix(**out)


def project(scan: Scan, cfg: ProjectionConfig = ProjectionConfig()) -> ScanMatrix:
    """Encode a scan; on cell collisions the point with the smaller range wins."""
    if len(scan) == 0:
        raise ValueError("cannot project an empty scan")
    return _project_arrays(scan.points, scan.intensity, cfg, np.arange(len(scan)))


def cell_center_points(m: ScanMatrix) -> np.ndarray:
    return m.cfg.ray_directions() * m.range[..., None]


def unproject(m: ScanMatrix, cell_centers: bool = False) -> Scan:
    """Rebuild a scan from the valid cells in row-major order.

    By default the exact stored coordinates are used when available; with
    ``cell_centers=True`` (or when the matrix has no coordinates) points are
    placed on the ray through each cell center at the stored range.
    """
    pts = cell_center_points(m) if cell_centers or m.xyz is None else m.xyz
    return Scan(pts[m.valid], m.intensity[m.valid])


def transform_and_reproject(m: ScanMatrix, T: PoseSE3, cfg: ProjectionConfig | None = None) -> ScanMatrix:
    """Warp a matrix's points by T and re-encode them, rotating normals along.

    The result's ``index`` still refers to the scan ``m`` was built from. The
    mask channel is not carried since it belongs to the source frame.
    """
    cfg = cfg or m.cfg
    pts = m.points()[m.valid]
    normals = normal_valid = None
    if m.normals is not None:
        normals = T.rotate(m.normals[m.valid])
        normal_valid = m.normal_valid[m.valid]
    if len(pts) == 0:
        return empty_matrix(cfg)
    return _project_arrays(T.apply(pts), m.intensity[m.valid], cfg, m.index[m.valid],
                           normals, normal_valid)


def empty_matrix(cfg: ProjectionConfig) -> ScanMatrix:
    H, W = cfg.H, cfg.W
    return ScanMatrix(cfg, np.zeros((H, W)), np.zeros((H, W)), np.zeros((H, W), bool),
                      np.full((H, W), -1, np.int64), np.zeros((H, W, 3)))


def crop_columns(m: ScanMatrix, width: int) -> ScanMatrix:
    """View with ``width`` central columns, trimming both ends evenly."""
    if not 0 < width <= m.cfg.W:
        raise ValueError(f"width must be in (0, {m.cfg.W}]")
    start = (m.cfg.W - width) // 2
    sl = slice(start, start + width)

    def cut(a):
        return None if a is None else a[:, sl]

    cfg = replace(m.cfg, W=width, delta_alpha=m.cfg.delta_alpha)
    return replace(m, cfg=cfg, range=cut(m.range), intensity=cut(m.intensity), valid=cut(m.valid),
                   index=cut(m.index), xyz=cut(m.xyz), normals=cut(m.normals),
                   normal_valid=cut(m.normal_valid), mask=cut(m.mask))


def write_pgm16(values, path, scale=1.0, offset=0.0) -> None:
    """Write ``round((values + offset) * scale)`` clipped to uint16 as binary PGM."""
    values = np.asarray(values, dtype=float)
    h, w = values.shape
    data = np.clip(np.rint((values + offset) * scale), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    header = []
    pos = 0
    while len(header) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not blob[pos:pos + 1].isspace():
            pos += 1
        header.append(blob[start:pos].decode("ascii"))
    pos += 1
    magic, w, h, maxval = header[0], int(header[1]), int(header[2]), int(header[3])
    if magic != "P5" or maxval != 65535:
        raise ValueError(f"{path}: not a 16-bit binary PGM")
    return np.frombuffer(blob[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w).astype(np.int64)


def dump_channel_pgm(m: ScanMatrix, channel: str, path, scale=100.0) -> None:
    """Debug dump of ``range``, ``intensity`` or ``mask``; invalid cells are 0."""
    values = getattr(m, channel)
    if values is None:
        raise ValueError(f"matrix has no {channel} channel")
    write_pgm16(np.where(m.valid, values, 0.0), path, scale=scale)
