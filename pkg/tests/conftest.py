import numpy as np
import pytest

from viewplan.synth import ShotSpec, generate_dataset, make_sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(14, seed=3)


@pytest.fixture(scope="session")
def orbit_sample():
    return make_sample(ShotSpec("orbit", "side", "eye-level", "medium", seed=5), fps=8.0)


@pytest.fixture(scope="session")
def static_sample():
    return make_sample(ShotSpec("static", "front", "eye-level", "medium", seed=2), fps=8.0)


def random_rotations(rng, n):
    """Uniform rotations from normalized quaternions."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    setattr(item, f"rep_{rep.when}", rep)
    return rep
