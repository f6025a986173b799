import numpy as np
import pytest

from surcmm.estimation import JointData
from surcmm.simulator import GeneratorConfig, generate_portfolio


@pytest.fixture(scope="session")
def small_sim():
    """Six simulated companies with the reference coefficients."""
    return generate_portfolio(GeneratorConfig(n_companies=6, seed=5))


@pytest.fixture(scope="session")
def small_portfolio(small_sim):
    return small_sim[0]


@pytest.fixture(scope="session")
def small_data(small_portfolio):
    return JointData.from_portfolio(small_portfolio)


@pytest.fixture(scope="session")
def surcmm_fit(small_portfolio):
    from surcmm.estimation import fit_surcmm

    return fit_surcmm(small_portfolio)


@pytest.fixture(scope="session")
def sparse_fit(small_portfolio):
    from surcmm.estimation import fit_sparse_surcmm

    return fit_sparse_surcmm(small_portfolio)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
