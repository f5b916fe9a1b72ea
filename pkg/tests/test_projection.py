import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangeodom.ingest import Scan
from rangeodom.pose import PoseSE3
from rangeodom.projection import (
    ProjectionConfig,
    crop_columns,
    dump_channel_pgm,
    project,
    read_pgm16,
    transform_and_reproject,
    unproject,
    write_pgm16,
)

from conftest import SMALL


def random_scan(rng, n, cfg=SMALL):
    az = rng.uniform(0, 2 * math.pi, n)
    lo = cfg.beta_offset
    el = rng.uniform(lo, lo + cfg.H * cfg.delta_beta, n)
    r = rng.uniform(1.0, 60.0, n)
    pts = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], 1) * r[:, None]
    return Scan(pts, rng.uniform(0, 1, n))


def brute_force_cells(scan, cfg):
    best = {}
    for k, p in enumerate(scan.points):
        r = float(np.linalg.norm(p))
        az = math.atan2(p[1], p[0]) % (2 * math.pi)
        el = math.asin(p[2] / r)
        c = int(math.floor(az / cfg.delta_alpha))
        row = int(math.floor((el - cfg.beta_offset) / cfg.delta_beta))
        if not (0 <= c < cfg.W and 0 <= row < cfg.H):
            continue
        if (row, c) not in best or r < best[(row, c)][0]:
            best[(row, c)] = (r, k)
    return best


def test_defaults():
    cfg = ProjectionConfig()
    assert (cfg.H, cfg.W) == (64, 1800)
    assert cfg.delta_alpha == pytest.approx(2 * math.pi / 1800)
    assert cfg.full_circle


def test_config_validation():
    with pytest.raises(ValueError):
        ProjectionConfig(W=0)
    with pytest.raises(ValueError):
        ProjectionConfig(W=100, delta_alpha=0.1)
    with pytest.raises(ValueError):
        ProjectionConfig(H=3, row_elevations=(0.1, 0.0, 0.2))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_collision_rule_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    scan = random_scan(rng, 3000)
    m = project(scan, SMALL)
    best = brute_force_cells(scan, SMALL)
    assert m.valid_count == len(best)
    for (row, c), (r, k) in best.items():
        assert m.valid[row, c]
        assert m.range[row, c] == pytest.approx(r, rel=1e-12)
        assert m.index[row, c] == k
    assert np.all(m.range[~m.valid] == 0) and np.all(m.index[~m.valid] == -1)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_round_trip_is_fixed_point(seed):
    rng = np.random.default_rng(seed)
    m1 = project(random_scan(rng, 2000), SMALL)
    m2 = project(unproject(m1), SMALL)
    assert np.array_equal(m1.valid, m2.valid)
    assert np.max(np.abs(m1.range - m2.range)) < 1e-6
    np.testing.assert_array_equal(m1.intensity, m2.intensity)


def test_points_outside_fov_are_dropped():
    scan = Scan([[10, 0, 0], [1, 0, 5], [0, 0, 0]], [0, 0, 0])
    m = project(scan, SMALL)
    assert m.valid_count == 1
    assert m.n_dropped == 2


def test_seam_point_lands_in_column_zero():
    scan = Scan([[10.0, -1e-17, 0.0]], [1.0])
    m = project(scan, SMALL)
    assert m.valid[:, 0].any()


def test_cell_center_unproject_stays_on_ray(rng):
    m = project(random_scan(rng, 500), SMALL)
    back = unproject(m, cell_centers=True)
    m2 = project(back, SMALL)
    assert np.array_equal(m.valid, m2.valid)
    np.testing.assert_allclose(m2.range[m2.valid], m.range[m.valid], atol=1e-9)


def test_transform_and_reproject_identity_and_rotation(rng):
    m = project(random_scan(rng, 1000), SMALL)
    same = transform_and_reproject(m, PoseSE3.identity())
    assert np.array_equal(same.valid, m.valid)
    assert np.array_equal(same.index, m.index)
    rot = PoseSE3.from_rotvec([0, 0, SMALL.delta_alpha * 10])
    moved = transform_and_reproject(m, rot)
    # a yaw by exactly 10 columns shifts every cell by 10 columns
    shifted = np.roll(m.valid, 10, axis=1)
    assert np.mean(moved.valid == shifted) > 0.99


def test_crop_columns(rng):
    m = project(random_scan(rng, 500), SMALL)
    c = crop_columns(m, 100)
    assert c.shape == (SMALL.H, 100)
    assert not c.cfg.full_circle
    np.testing.assert_array_equal(c.range, m.range[:, 130:230])
    with pytest.raises(ValueError):
        crop_columns(m, 0)


def test_pgm_round_trip(tmp_path, rng):
    values = rng.integers(0, 65535, size=(7, 11)).astype(float)
    write_pgm16(values, tmp_path / "a.pgm")
    np.testing.assert_array_equal(read_pgm16(tmp_path / "a.pgm"), values)
    m = project(random_scan(rng, 300), SMALL)
    dump_channel_pgm(m, "range", tmp_path / "r.pgm", scale=100)
    img = read_pgm16(tmp_path / "r.pgm")
    assert img.shape == m.shape
    assert np.all(img[~m.valid] == 0)
