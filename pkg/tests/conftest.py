import numpy as np
import pytest
from hypothesis import strategies as st

from captrack.geometry import Rot3, Sim3

finite = st.floats(allow_nan=False, allow_infinity=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def rot3_strategy(draw):
    axis = np.array([draw(st.floats(-1.0, 1.0, allow_nan=False)) for _ in range(3)])
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([1.0, 0.0, 0.0])
    angle = draw(st.floats(-np.pi, np.pi, allow_nan=False))
    return Rot3.from_axis_angle(axis, angle)


@st.composite
def sim3_strategy(draw):
    rot = draw(rot3_strategy())
    s = draw(st.floats(0.05, 20.0, allow_nan=False))
    t = np.array([draw(st.floats(-5.0, 5.0, allow_nan=False)) for _ in range(3)])
    return Sim3(s, rot, t)
