import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rangeodom.pose import PoseSE3, exp_se3
from rangeodom.registration import (
    InsufficientGeometryError,
    PlaneTarget,
    gate_normals,
    huber_cost,
    huber_weights,
    robust_cost,
    solve_increment,
)


@given(st.floats(0.01, 1.0), st.floats(-5, 5))
def test_huber_pieces(delta, e):
    c = huber_cost(np.array([e]), delta)[0]
    w = huber_weights(np.array([e]), delta)[0]
    if abs(e) <= delta:
        assert c == pytest.approx(0.5 * e * e) and w == 1.0
    else:
        assert c == pytest.approx(delta * (abs(e) - 0.5 * delta)) and w == pytest.approx(delta / abs(e))
    # continuity at the knee
    assert huber_cost(np.array([delta]), delta)[0] == pytest.approx(0.5 * delta * delta)


def test_robust_cost_charges_unmatched():
    e = np.array([0.0, 0.05, 0.3])
    c_all = robust_cost(np.ones(3, bool), e, 0.1, 1.0)
    c_some = robust_cost(np.array([True, True, False]), e, 0.1, 1.0)
    assert c_some - c_all == pytest.approx(huber_cost(np.array(1.0), 0.1) - huber_cost(np.array(0.3), 0.1))


def box_points(rng, n=600):
    """Points on three orthogonal planes through the origin."""
    pts, nrm = [], []
    for axis in range(3):
        p = rng.uniform(-3, 3, (n, 3))
        p[:, axis] = 0.0
        v = np.zeros(3)
        v[axis] = 1.0
        pts.append(p)
        nrm.append(np.tile(v, (n, 1)))
    return np.vstack(pts), np.vstack(nrm)


def test_solve_increment_recovers_small_motion(rng):
    pts, nrm = box_points(rng)
    truth = exp_se3([0.01, -0.02, 0.015, 0.002, -0.001, 0.003])
    moved = truth.inverse().apply(pts)
    # residuals of moved points against the planes, linearized at identity
    e = np.einsum("ij,ij->i", moved, nrm)
    delta, cond = solve_increment(moved, nrm, e, np.ones(len(e)))
    assert cond < 100
    recovered = exp_se3(delta)
    assert recovered.allclose(truth, atol=1e-4)


def test_ill_conditioned_raises(rng):
    p = rng.uniform(-3, 3, (100, 3))
    p[:, 2] = 0
    n = np.tile([0, 0, 1.0], (100, 1))
    with pytest.raises(InsufficientGeometryError):
        solve_increment(p, n, np.zeros(100), np.ones(100))


def test_plane_target_match_and_gate(rng):
    pts, nrm = box_points(rng, 50)
    t = PlaneTarget(pts, nrm)
    q = pts[:5] + 0.01 * nrm[:5]
    ok, e, n = t.match(q, 0.5)
    assert ok.all()
    np.testing.assert_allclose(e, 0.01)
    flipped = np.tile([0.0, 0.0, 1.0], (5, 1)) if nrm[0, 2] == 0 else np.tile([1.0, 0, 0], (5, 1))
    ok2, _, _, near = t.match(q, 0.5, flipped, np.cos(np.radians(25)), with_near=True)
    assert near.all() and not ok2.any()
    far = t.match(q + 100, 0.5)[0]
    assert not far.any()
    assert gate_normals(near, n, None, 0.9) is near
    with pytest.raises(InsufficientGeometryError):
        PlaneTarget(np.zeros((0, 3)), np.zeros((0, 3)))


def test_identity_pose_fixed_point(rng):
    pts, nrm = box_points(rng)
    e = np.einsum("ij,ij->i", pts, nrm)
    delta, _ = solve_increment(pts, nrm, e, np.ones(len(e)))
    assert np.allclose(delta, 0, atol=1e-12)
    assert exp_se3(delta).allclose(PoseSE3.identity())
