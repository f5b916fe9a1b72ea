import math

import numpy as np
import pytest
from hypothesis import strategies as st

from rangeodom.pose import PoseSE3
from rangeodom.projection import ProjectionConfig

SMALL = ProjectionConfig(H=16, W=360, delta_beta=math.radians(26.9) / 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return SMALL


def random_pose(rng, max_angle=math.pi, max_t=10.0) -> PoseSE3:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0, max_angle)
    return PoseSE3.from_rotvec(axis * angle, rng.uniform(-max_t, max_t, 3))


finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
unit_component = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def poses(draw, max_angle=math.pi, max_t=10.0):
    q = np.array([draw(unit_component) for _ in range(4)])
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    t = [draw(st.floats(-max_t, max_t, allow_nan=False)) for _ in range(3)]
    pose = PoseSE3(q, t)
    if pose.angle() > max_angle:
        pose = PoseSE3.from_rotvec(pose.rotvec() / pose.angle() * max_angle, t)
    return pose


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
