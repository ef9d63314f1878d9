import os

import numpy as np
import pytest

from drivesim import expert, ingest
from drivesim import roadway as rd

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURE_DIR, name)


@pytest.fixture(scope="session")
def fixture_roadway():
    return rd.load_centerlines(fixture_path("centerlines.csv"))


@pytest.fixture(scope="session")
def fixture_scene():
    raw = ingest.load_trajectories(fixture_path("trajectories.csv"))
    smoothed = [ingest.ekf_smooth(t) for t in ingest.filter_cars(raw)]
    return ingest.build_scene_index(smoothed)


@pytest.fixture(scope="session")
def fixture_expert(fixture_scene, fixture_roadway):
    return expert.extract(fixture_scene, fixture_roadway)


def directional_grad_check(f, grad, theta, rng, n_dirs=5, h=1e-5):
    """Max relative error between analytic and central-difference directional
    derivatives along random unit directions."""
    worst = 0.0
    for _ in range(n_dirs):
        v = rng.standard_normal(theta.size)
        v /= np.linalg.norm(v)
        fd = (f(theta + h * v) - f(theta - h * v)) / (2.0 * h)
        an = float(grad @ v)
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst
