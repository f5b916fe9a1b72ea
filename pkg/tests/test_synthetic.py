import math

import numpy as np
import pytest

from rangeodom.pose import PoseSE3
from rangeodom.projection import project
from rangeodom.synthetic import (Box, Plane, Scene, courtyard_scene, render_scan, render_sequence, rigid_sequence,
                                 smooth_trajectory)

from conftest import SMALL


def test_plane_hits_at_exact_range():
    scene = Scene([Plane((0, 0, 1), -2.0)])
    scan = render_scan(scene, PoseSE3.identity(), SMALL)
    np.testing.assert_allclose(scan.points[:, 2], -2.0, atol=1e-12)
    assert len(scan) > 0


def test_box_seen_from_inside_and_outside():
    box = Box((0, 0, 0), (5, 5, 5), yaw=0.3)
    dirs = np.array([[1.0, 0, 0], [0, 0, 1.0]])
    inside = box.intersect(np.zeros(3), dirs)
    assert np.all(np.isfinite(inside)) and inside[1] == pytest.approx(5.0)
    outside = box.intersect(np.array([20.0, 0, 0]), np.array([[-1.0, 0, 0], [1.0, 0, 0]]))
    assert outside[0] == pytest.approx(20 - 5 / math.cos(0.3)) and outside[1] == np.inf
    per_ray = box.intersect(np.array([[0, 0, 0], [20.0, 0, 0]]), np.array([[0, 0, 1.0], [-1.0, 0, 0]]))
    assert per_ray[0] == pytest.approx(5.0) and per_ray[1] == pytest.approx(outside[0])


def test_clipped_plane_and_range_limit():
    plane = Plane((0, 0, 1), -1.0, lo=(0, -1, -2), hi=(5, 1, 0))
    t = plane.intersect(np.zeros(3), np.array([[1, 0, -1.0], [-1, 0, -1.0]]) / math.sqrt(2))
    assert np.isfinite(t[0]) and t[1] == np.inf
    far = Scene([Plane((1, 0, 0), 500.0)], max_range=100.0)
    assert len(render_scan(far, PoseSE3.identity(), SMALL)) == 0


def test_noise_and_metadata():
    scene = courtyard_scene(1, n_boxes=3)
    a = render_scan(scene, PoseSE3.identity(), SMALL, point_noise=0.01, rng=0, sequence_index=4)
    b = render_scan(scene, PoseSE3.identity(), SMALL, point_noise=0.01, rng=0, sequence_index=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.sequence_index == 4 and a.timestamp == pytest.approx(0.4)


def test_smooth_trajectory_shape():
    rel, origin = smooth_trajectory(20, 1.5, rng=3)
    assert rel[0].allclose(PoseSE3.identity(), atol=1e-12)
    steps = [np.linalg.norm((rel[k + 1].t - rel[k].t)[:1]) for k in range(19)]
    assert np.allclose(steps, 1.5, atol=0.1)
    assert isinstance(origin, PoseSE3)


def test_rigid_sequence_views_one_point_set():
    poses = [PoseSE3.identity(), PoseSE3.from_rotvec([0, 0, 0.02], [0.5, 0, 0]),
             PoseSE3.from_rotvec([0, 0, 0.04], [1.0, 0.1, 0])]
    scans = rigid_sequence(courtyard_scene(3), poses, SMALL)
    n = len(scans[0])
    assert n > 1000
    for pose, scan in zip(poses, scans):
        assert len(scan) == n and project(scan, SMALL).valid_count == n
        np.testing.assert_allclose(pose.apply(scan.points), poses[0].apply(scans[0].points), atol=1e-9)


def test_render_sequence_matches_render_scan():
    scene = courtyard_scene(4)
    poses = [PoseSE3.identity(), PoseSE3(t=[0.5, 0.0, 0.0]), PoseSE3(t=[1.0, 0.1, 0.0])]
    still = render_sequence(scene, poses, SMALL)
    swept = render_sequence(scene, poses, SMALL, swept=True)
    for k, pose in enumerate(poses):
        np.testing.assert_array_equal(still[k].points, render_scan(scene, pose, SMALL).points)
        assert still[k].sequence_index == k
    np.testing.assert_array_equal(swept[2].points, render_scan(scene, poses[2], SMALL, sweep_from=poses[1]).points)
    np.testing.assert_array_equal(swept[0].points,
                                  render_scan(scene, poses[0], SMALL, sweep_from=PoseSE3(t=[-0.5, 0, 0])).points)
