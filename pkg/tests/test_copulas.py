import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from surcmm.copulas import (
    CopulaFamily,
    CopulaSpec,
    DependenceParams,
    ThetaScope,
    copula_log_density,
    copula_pseudo_loglik,
    fit_copula,
    sample_copula,
)
from surcmm.errors import DomainError, ValidationError

GAUSS = CopulaSpec()
unit = st.floats(1e-6, 1 - 1e-6)
rho = st.floats(-0.99, 0.99)


def _mvn_oracle(theta, u, v):
    x, y = stats.norm.ppf(u), stats.norm.ppf(v)
    joint = stats.multivariate_normal([0, 0], [[1, theta], [theta, 1]]).logpdf([x, y])
    return joint - stats.norm.logpdf(x) - stats.norm.logpdf(y)


def test_density_at_centre():
    for t in (-0.7, 0.2, 0.9):
        assert copula_log_density(GAUSS, t, 0.5, 0.5) == pytest.approx(-0.5 * math.log(1 - t * t), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(rho, unit, unit)
def test_density_matches_bivariate_normal(theta, u, v):
    assert copula_log_density(GAUSS, theta, u, v) == pytest.approx(_mvn_oracle(theta, u, v), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(rho, unit, unit)
def test_density_symmetries(theta, u, v):
    c = copula_log_density(GAUSS, theta, u, v)
    assert c == pytest.approx(copula_log_density(GAUSS, theta, v, u), abs=1e-12)
    assert c == pytest.approx(copula_log_density(GAUSS, -theta, u, 1 - v), abs=1e-8)
    assert copula_log_density(GAUSS, 0.0, u, v) == 0.0


def test_density_integrates_to_one(rng):
    u = rng.uniform(size=(200_000, 2))
    m = np.exp(copula_log_density(GAUSS, 0.4, u[:, 0], u[:, 1])).mean()
    assert m == pytest.approx(1.0, abs=0.02)


def test_density_rejects_boundary():
    with pytest.raises(DomainError):
        copula_log_density(GAUSS, 0.1, 0.0, 0.5)
    with pytest.raises(DomainError):
        copula_log_density(GAUSS, 1.0, 0.3, 0.5)


def test_independence_density_is_zero():
    assert copula_log_density(CopulaSpec("independence"), 0.9, 0.1, 0.8) == 0.0


def test_pseudo_loglik_matches_loop(rng):
    pairs = [rng.uniform(0.01, 0.99, size=(10, 2)) for _ in range(3)]
    dep = DependenceParams({"a": 0.1, "b": -0.4, "c": 0.6})
    naive = 0.0
    for p, t in zip(pairs, (0.1, -0.4, 0.6)):
        for u, v in p:
            naive += _mvn_oracle(t, u, v)
    got = copula_pseudo_loglik(GAUSS, dep, pairs, ("a", "b", "c"))
    assert got == pytest.approx(naive, abs=1e-9)
    shared = copula_pseudo_loglik(GAUSS, 0.3, pairs)
    loop = sum(copula_log_density(GAUSS, 0.3, u, v) for p in pairs for u, v in p)
    assert shared == pytest.approx(loop, abs=1e-12)


def _ranks(x):
    return stats.rankdata(x, method="max") / (len(x) + 1)


def _ranked_sample(theta, n, seed):
    z = sample_copula(GAUSS, theta, n, np.random.default_rng(seed))
    return np.column_stack([_ranks(z[:, 0]), _ranks(z[:, 1])])


def test_fit_recovers_independence():
    dep = fit_copula(GAUSS, [_ranked_sample(0.0, 10_000, 1)])
    assert abs(dep.theta) <= 0.05


def test_fit_recovers_negative_dependence():
    dep = fit_copula(GAUSS, [_ranked_sample(-0.3, 100_000, 2)])
    assert abs(dep.theta + 0.3) <= 0.02


def test_fit_is_profile_maximum(rng):
    p = _ranked_sample(0.5, 500, 3)
    dep = fit_copula(GAUSS, [p])
    grid = np.linspace(-0.99, 0.99, 1981)
    best = grid[np.argmax([copula_pseudo_loglik(GAUSS, t, [p]) for t in grid])]
    assert abs(dep.theta - best) <= 1e-3
    assert dep.pseudo_loglik == pytest.approx(copula_pseudo_loglik(GAUSS, dep.theta, [p]), abs=1e-9)


def test_per_company_fit():
    pairs = [_ranked_sample(t, 3000, k) for k, t in enumerate((-0.5, 0.0, 0.5))]
    dep = fit_copula(CopulaSpec(scope=ThetaScope.PER_COMPANY), pairs, ("x", "y", "z"))
    assert dep.n_params == 3
    for cid, t in zip("xyz", (-0.5, 0.0, 0.5)):
        assert abs(dep.theta[cid] - t) < 0.06


def test_fit_needs_three_pairs():
    with pytest.raises(ValidationError):
        fit_copula(GAUSS, [np.array([[0.3, 0.4], [0.6, 0.5]])])


def test_boundary_is_flagged():
    u = np.linspace(0.05, 0.95, 50)
    dep = fit_copula(GAUSS, [np.column_stack([u, u])])
    assert dep.boundary == ("shared",)
    assert abs(dep.theta) < 1


def test_independence_fit_is_zero():
    dep = fit_copula(CopulaSpec(CopulaFamily.INDEPENDENCE), [np.full((4, 2), 0.5)])
    assert dep.theta == 0.0 and CopulaSpec("independence").n_params == 0


def test_sampler_dependence_and_marginals():
    z = sample_copula(GAUSS, 0.5, 100_000, np.random.default_rng(7))
    assert np.all((z > 0) & (z < 1))
    x = stats.norm.ppf(z)
    r = np.corrcoef(x.T)[0, 1]
    assert 0.48 <= r <= 0.52
    for k in range(2):
        assert stats.kstest(z[:, k], "uniform").pvalue > 0.01


def test_sampler_is_deterministic():
    a = sample_copula(GAUSS, -0.2, 50, np.random.default_rng(9))
    b = sample_copula(GAUSS, -0.2, 50, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.95, 0.95), st.integers(0, 1000))
def test_sampler_spearman_matches_theory(theta, seed):
    z = sample_copula(GAUSS, theta, 20_000, np.random.default_rng(seed))
    rs = stats.spearmanr(z[:, 0], z[:, 1]).statistic
    assert rs == pytest.approx(6 / math.pi * math.asin(theta / 2), abs=0.04)
