import numpy as np
import pytest

from pointcore.geometry import PointCloud, estimate_normals
from pointcore.synthetic import composite_scene, generate_shape


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blob_cloud():
    return estimate_normals(generate_shape("blended-blob", 1500, 0.0, seed=4))


@pytest.fixture(scope="session")
def scene_cloud():
    return estimate_normals(composite_scene(1500, 0.0, seed=9))


def random_cloud(seed, n=300, scale=1.0):
    return PointCloud(np.random.default_rng(seed).uniform(-scale, scale, (n, 3)))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
