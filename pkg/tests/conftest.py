import numpy as np
import pytest

from kuramoto_kinetic import analysis as an
from kuramoto_kinetic.kinetic import near_uniform, simulate_kinetic, two_bump, vonmises_bump
from kuramoto_kinetic.model import FrequencyGrid, ModelParams

K, W = 10.0, 0.1
N_THETA, N_OMEGA = 256, 17
DT, T_END, STRIDE = 1e-3, 4.0, 10


def canonical_initial(name, grid=None, n_theta=N_THETA):
    grid = FrequencyGrid.from_density(W, N_OMEGA) if grid is None else grid
    if name == "bump":
        return vonmises_bump(grid, n_theta, 1.0, 1.0)
    if name == "two_bump":
        return two_bump(grid, n_theta, [1.0, 1.0 + 0.9 * np.pi], [0.6, 0.4], [4.0, 4.0])
    if name == "near_uniform":
        return near_uniform(grid, n_theta, 0.2, 1, 1.0)
    raise KeyError(name)


class Canonical:
    """Lazily simulated canonical runs shared over the session."""

    def __init__(self):
        self._cache = {}

    def run(self, name):
        if name not in self._cache:
            p = ModelParams(K, W)
            traj = simulate_kinetic(canonical_initial(name), p, DT, T_END, stride=STRIDE)
            self._cache[name] = (traj, an.compute_diagnostics(traj))
        return self._cache[name]


@pytest.fixture(scope="session")
def canonical():
    return Canonical()


@pytest.fixture(scope="session")
def bump_run(canonical):
    return canonical.run("bump")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
