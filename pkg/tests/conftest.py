import numpy as np
import pytest

from slamctl import arm, scenario, sim
from slamctl.lie import RigidPose, SlamElement, project_to_so3
from slamctl.observer import LandmarkMap, ObserverGains

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def params():
    return arm.ArmParameters()


@pytest.fixture
def cube_map():
    c = np.array([0.85, 0.0, 1.4])
    pts = np.array([c + 1.5 * np.array([sx, sy, sz]) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    return LandmarkMap(pts.T)


@pytest.fixture
def gains8():
    return ObserverGains(k_i=np.full(8, 1.0 / 8))


def random_rotation(rng):
    return project_to_so3(rng.standard_normal((3, 3)))


def random_pose(rng, scale=1.0):
    return RigidPose(random_rotation(rng), scale * rng.standard_normal(3))


def random_slam(rng, n, scale=1.0):
    return SlamElement(random_rotation(rng), scale * rng.standard_normal(3), scale * rng.standard_normal((3, n)))


def _full_run(path):
    cfg = scenario.load_config(path)
    config = scenario.build_simulation(cfg)
    trace, report = sim.run(config, side=scenario.square_side(cfg))
    return cfg, config, trace, report


@pytest.fixture(scope="session")
def truth_run():
    """Full 40 s square with truth feedback (shared by several tests)."""
    return _full_run(CONFIGS / "square_truth.cfg")


@pytest.fixture(scope="session")
def estimate_run():
    """Full 40 s square with estimated-pose feedback."""
    return _full_run(CONFIGS / "square.cfg")
