import math

import numpy as np
import pytest

from rangeodom.ingest import Scan
from rangeodom.normals import (
    EmptyReportError,
    NormalMap,
    angular_errors_deg,
    estimate_normals,
    evaluate_normals,
    grid_normals,
    neighbor,
    pca_normals,
    smooth_normals,
)
from rangeodom.pose import PoseSE3
from rangeodom.projection import project
from rangeodom.synthetic import Plane, Scene, render_scan

from conftest import SMALL


def test_neighbor_wraps_columns_only():
    a = np.arange(12).reshape(3, 4)
    np.testing.assert_array_equal(neighbor(a, 0, 1, True), np.roll(a, -1, axis=1))
    up = neighbor(a, 1, 0, True, fill=-1)
    np.testing.assert_array_equal(up[:2], a[1:])
    assert np.all(up[2] == -1)
    right = neighbor(a, 0, 1, False, fill=-1)
    assert np.all(right[:, 3] == -1)


def plane_matrix(normal, offset, noise=0.0, cfg=SMALL):
    scene = Scene([Plane(normal, offset)], 200.0)
    return project(render_scan(scene, PoseSE3.identity(), cfg, noise=noise, rng=0), cfg)


def test_plane_normals_are_exact_and_face_sensor():
    n = np.array([0.2, 0.1, 1.0])
    n /= np.linalg.norm(n)
    m = plane_matrix(n, -1.7)
    nm = estimate_normals(m)
    assert nm.valid.sum() > 100
    err = angular_errors_deg(nm.normals[nm.valid], n)
    assert err.max() < 1e-4  # arccos near 1 limits the resolvable angle
    # the sensor is at the origin on the positive side of n.x = -1.7
    assert np.all(nm.normals[nm.valid] @ n > 0)


def test_invalid_neighbors_invalidate():
    m = plane_matrix((0, 0, 1), -1.7)
    nm = estimate_normals(m)
    rows = np.flatnonzero(m.valid.any(axis=1))
    # the top valid row has no valid upward neighbor
    assert not nm.valid[rows.max()].any()


def test_smoothing_keeps_plane_and_validates_window():
    m = plane_matrix((0, 0, 1), -1.7, noise=0.01)
    raw = estimate_normals(m)
    sm = smooth_normals(raw, 3)
    e_raw = angular_errors_deg(raw.normals[raw.valid], [0, 0, 1]).mean()
    e_sm = angular_errors_deg(sm.normals[sm.valid], [0, 0, 1]).mean()
    assert e_sm < e_raw
    assert smooth_normals(raw, 1) is raw
    with pytest.raises(ValueError):
        smooth_normals(raw, 2)
    np.testing.assert_allclose(np.linalg.norm(sm.normals[sm.valid], axis=1), 1.0)


def test_pca_normals_on_plane(rng):
    xy = rng.uniform(-5, 5, (2000, 2))
    pts = np.column_stack([xy, np.full(2000, -1.7)])
    n, valid = pca_normals(Scan(pts, np.zeros(2000)), radius=0.5)
    assert valid.all()
    np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (2000, 1)), atol=1e-9)
    isolated = np.array([[0, 0, 0.0], [100, 0, 0]])
    _, v = pca_normals(isolated, radius=1.0)
    assert not v.any()


def test_evaluate_normals_report():
    m = plane_matrix((0, 0, 1), -1.7)
    nm = grid_normals(m)
    gt = np.tile([0.0, 0.0, 1.0], (m.valid_count, 1))
    rep = evaluate_normals(nm, gt, np.ones(len(gt), bool), m.index)
    assert rep.mean_err < 1e-5 and rep.valid_count == nm.valid.sum()
    assert rep.pct_within[11.25] == 1.0
    assert set(rep.as_dict()) >= {"mean_err_deg", "median_err_deg", "pct_within_22.5"}
    with pytest.raises(EmptyReportError):
        evaluate_normals(nm, gt, np.zeros(len(gt), bool), m.index)


def test_tilted_wall_under_rotation():
    """Grid normals rotate with the sensor (equivariance on a fixed wall)."""
    n = np.array([math.cos(0.3), math.sin(0.3), 0.0])
    scene = Scene([Plane(n, 8.0)], 200.0)
    pose = PoseSE3.from_rotvec([0, 0, 0.7])
    m = project(render_scan(scene, pose, SMALL), SMALL)
    nm = grid_normals(m)
    expected = -pose.inverse().rotate(n)
    assert angular_errors_deg(nm.normals[nm.valid], expected).max() < 1e-5
    assert isinstance(nm, NormalMap)
