"""Shared synthetic fixtures for the test modules."""

import numpy as np

from rangeodom.mapping import PipelineConfig, prepare_matrix
from rangeodom.pose import PoseSE3
from rangeodom.projection import ProjectionConfig
from rangeodom.synthetic import render_scan, three_plane_scene

FULL = ProjectionConfig()


def matrix(scene, pose=PoseSE3.identity(), cfg=FULL, rng=None, point_noise=0.0, jitter=0.0, **kw):
    scan = render_scan(scene, pose, cfg, rng=rng, point_noise=point_noise, jitter=jitter, **kw)
    return prepare_matrix(scan, PipelineConfig(projection=cfg))


def three_plane_pair(seed, motion, cfg=FULL, point_noise=0.003, jitter=0.5):
    """Scans at the identity and at ``motion`` (world-from-sensor) in one scene."""
    rng = np.random.default_rng(seed)
    scene = three_plane_scene(rng)
    prev = matrix(scene, PoseSE3.identity(), cfg, rng, point_noise, jitter)
    cur = matrix(scene, motion, cfg, rng, point_noise, jitter)
    return prev, cur
