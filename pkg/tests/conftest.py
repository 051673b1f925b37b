import numpy as np
import pytest

import romkit


@pytest.fixture(scope="session")
def b1_small():
    """One-block thermal problem, n=8: exact 1-D solution manifold."""
    return romkit.make_thermal_block(8, 1, 0.1, 10.0)


@pytest.fixture(scope="session")
def b2_small():
    """Four-block thermal problem, n=8, wide parameter range."""
    return romkit.make_thermal_block(8, 2, 0.1, 10.0)


@pytest.fixture(scope="session")
def b2_snaps(b2_small):
    points = romkit.sample_parameters(b2_small.domain, 16, "grid")
    return romkit.collect_snapshots(b2_small, points)


@pytest.fixture(scope="session")
def b2_pod_basis(b2_snaps):
    return romkit.pod_basis(b2_snaps, energy_tol=1e-10)


@pytest.fixture(scope="session")
def b2_rom(b2_small, b2_pod_basis):
    model = romkit.project(b2_small, b2_pod_basis)
    data = romkit.riesz_offline(b2_small, b2_pod_basis)
    return model, data


@pytest.fixture(scope="session")
def b2_narrow():
    """Four-block problem on the narrower greedy benchmark range."""
    return romkit.make_thermal_block(8, 2, 0.5, 2.0)


@pytest.fixture(scope="session")
def b2_greedy(b2_narrow):
    training = romkit.sample_parameters(b2_narrow.domain, 100, "random", seed=7)
    basis, history, model, data = romkit.greedy_build(
        b2_narrow, training, tol=1e-6, n_max=30)
    return basis, history, model, data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
