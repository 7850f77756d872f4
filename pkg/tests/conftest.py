import numpy as np
import pytest

from confgame import fixtures, game, sieve


@pytest.fixture(scope="session")
def t1():
    return fixtures.t1_spec()


@pytest.fixture(scope="session")
def t2():
    return fixtures.t2_spec()


@pytest.fixture(scope="session")
def t1_basis(t1):
    return sieve.build_basis("saturated", t1.n_states, t1.n_u)


@pytest.fixture(scope="session")
def t2_basis(t2):
    return sieve.build_basis("saturated", t2.n_states, t2.n_u)


@pytest.fixture(scope="session")
def t1_big(t1):
    """One large T1 dataset shared by the slow statistical tests."""
    return game.simulate_dataset(t1, n=100_000, seed=7)


@pytest.fixture(scope="session")
def t2_big(t2):
    return game.simulate_dataset(t2, n=100_000, seed=12)


def alice_truth(spec):
    from confgame import oracle

    tr = oracle.true_coefficients(spec)["alice_reward"]
    return np.stack([tr.theta_a, tr.theta_z, tr.theta_az], axis=-1)
