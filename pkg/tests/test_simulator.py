import math
from dataclasses import fields

import numpy as np
import pytest
from scipy import stats

from surcmm.errors import ValidationError
from surcmm.marginals import eta_matrix
from surcmm.simulator import (
    GeneratorConfig,
    SparsityScenario,
    actual_reserve,
    default_appendix_e_config,
    generate_portfolio,
    quantile,
    realized_lower_triangle,
    simulate_future_reserves,
)
from surcmm.triangles import load_portfolio, observed_mask, write_portfolio


def test_reference_values():
    cfg = default_appendix_e_config()
    assert cfg.development_1[7] == -4.91
    assert cfg.accident_2[7] == 0.17
    assert cfg.theta == -0.3
    assert (cfg.tau_1, cfg.tau_2) == (0.2, 0.3)
    assert cfg.premiums_1[0] == 4711333 and cfg.premiums_2[0] == 267666
    assert cfg.family_1.value == "gamma" and cfg.family_2.value == "gamma"


def test_noise_free_limit():
    cfg = GeneratorConfig(n_companies=2, tau_1=0.0, tau_2=0.0, theta=0.0, sigma_1=1e7, sigma_2=1e7)
    pf, truth = generate_portfolio(cfg)
    for lob in (1, 2):
        expect = np.exp(eta_matrix(cfg.params(lob).beta, 10)) * cfg.premiums(lob)[:, None]
        for tri in pf.triangles(lob):
            m = observed_mask(10)
            np.testing.assert_allclose(tri.values[m], expect[m], rtol=0.01)
    act = actual_reserve(truth, seed=0, company=0)
    assert act.total == pytest.approx(truth.expected_reserve(0).total, rel=0.01)


def test_generation_is_deterministic():
    a, ta = generate_portfolio(GeneratorConfig(n_companies=3, seed=11))
    b, tb = generate_portfolio(GeneratorConfig(n_companies=3, seed=11))
    for x, y in zip(a.companies, b.companies):
        assert x.triangle_1 == y.triangle_1 and x.triangle_2 == y.triangle_2
    np.testing.assert_array_equal(ta.b_1, tb.b_1)
    c, _ = generate_portfolio(GeneratorConfig(n_companies=3, seed=12))
    assert not c.companies[0].triangle_1 == a.companies[0].triangle_1


def test_company_stream_does_not_depend_on_portfolio_size():
    a, _ = generate_portfolio(GeneratorConfig(n_companies=3, seed=4))
    b, _ = generate_portfolio(GeneratorConfig(n_companies=9, seed=4))
    assert a.companies[1].triangle_2 == b.companies[1].triangle_2


def test_negative_rank_correlation_between_lobs():
    pf, _ = generate_portfolio(default_appendix_e_config(seed=1))
    x = np.concatenate([c.triangle_1.observed() / np.repeat(c.triangle_1.premiums, np.arange(10, 0, -1)) for c in pf.companies])
    y = np.concatenate([c.triangle_2.observed() / np.repeat(c.triangle_2.premiums, np.arange(10, 0, -1)) for c in pf.companies])
    # remove the cell means so the statistic reflects the copula, not the design
    n = x.size
    assert n == 30 * 55
    xr = (x.reshape(30, 55) / np.median(x.reshape(30, 55), axis=0)).ravel()
    yr = (y.reshape(30, 55) / np.median(y.reshape(30, 55), axis=0)).ravel()
    assert stats.spearmanr(xr, yr).statistic < 0


def test_fixed_cell_marginal_passes_ks():
    cfg = GeneratorConfig(n_companies=10_000, tau_1=0.0, tau_2=0.0, theta=0.0, seed=3)
    pf, _ = generate_portfolio(cfg)
    y1 = np.array([c.triangle_1.values[2, 3] / c.triangle_1.premiums[2] for c in pf.companies])
    mu = math.exp(eta_matrix(cfg.params(1).beta, 10)[2, 3])
    p = stats.kstest(y1, stats.gamma(cfg.sigma_1, scale=mu / cfg.sigma_1).cdf).pvalue
    assert p > 0.01


def test_dependence_recovered_from_normal_scores():
    cfg = GeneratorConfig(n_companies=2000, seed=8)
    pf, truth = generate_portfolio(cfg)
    m = observed_mask(10)
    z1, z2 = [], []
    for c, pair in enumerate(pf.companies):
        for lob, out in ((1, z1), (2, z2)):
            tri = pair.triangle(lob)
            mu = np.exp(eta_matrix(cfg.params(lob).beta, 10) + truth.b(lob)[c])[m]
            y = tri.values[m] / tri.premiums[np.nonzero(m)[0]]
            s = cfg.sigma_1 if lob == 1 else cfg.sigma_2
            out.append(stats.norm.ppf(stats.gamma.cdf(y, s, scale=mu / s)))
    r = np.corrcoef(np.concatenate(z1), np.concatenate(z2))[0, 1]
    assert abs(r - cfg.theta) <= 0.02


def test_quantile_inverts_cdf():
    u = np.array([0.01, 0.3, 0.9])
    g = quantile(GeneratorConfig().family_1, u, 0.2, 2.0)
    np.testing.assert_allclose(stats.gamma.cdf(g, 2.0, scale=math.exp(0.2) / 2.0), u, rtol=1e-10)


def _diff(a, b):
    return {f.name for f in fields(a) if getattr(a, f.name) != getattr(b, f.name)}


@pytest.mark.parametrize(
    "scenario,count",
    [(SparsityScenario.ZERO_ONE_ACCIDENT, 1), (SparsityScenario.ZERO_ONE_DEVELOPMENT, 1), (SparsityScenario.ZERO_BOTH, 2)],
)
def test_sparsity_scenarios_zero_only_named_coefficients(scenario, count):
    base = GeneratorConfig()
    cfg = GeneratorConfig(sparsity=scenario)
    assert _diff(base, cfg) == {"sparsity"}
    changed = sum(int(np.sum(base.params(lob).beta != cfg.params(lob).beta)) for lob in (1, 2))
    assert changed == count
    for lob in (1, 2):
        assert np.all((cfg.params(lob).beta == base.params(lob).beta) | (cfg.params(lob).beta == 0))


def test_smallest_coefficients_are_zeroed():
    cfg = GeneratorConfig(sparsity="zero-both")
    assert cfg.zeroed() == [("accident", 1, 0), ("development", 2, 1)]
    assert cfg.params(1).accident_effects[0] == 0.0
    assert cfg.params(2).development_effects[1] == 0.0


def test_config_validation():
    with pytest.raises(ValidationError):
        GeneratorConfig(theta=1.0)
    with pytest.raises(ValidationError):
        GeneratorConfig(size=5)
    with pytest.raises(ValidationError):
        GeneratorConfig.from_dict({"n_companies": 2, "bogus": 1})
    cfg = GeneratorConfig(n_companies=4, sparsity="zero-accident")
    assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg


def test_generated_csv_loads_back(tmp_path):
    pf, _ = generate_portfolio(GeneratorConfig(n_companies=3, seed=2))
    write_portfolio(pf, tmp_path / "p.csv")
    back = load_portfolio(tmp_path / "p.csv")
    assert back.company_ids == pf.company_ids
    for x, y in zip(back.companies, pf.companies):
        assert x.triangle_1 == y.triangle_1 and x.triangle_2 == y.triangle_2


def test_actual_reserves_center_on_expected():
    pf, truth = generate_portfolio(GeneratorConfig(n_companies=1, seed=0))
    draws = np.array([actual_reserve(truth, seed=s, company=0).total for s in range(100)])
    se = draws.std(ddof=1) / 10
    assert abs(draws.mean() - truth.expected_reserve(0).total) <= 3 * se


def test_reference_reserve_magnitude():
    _, truth = generate_portfolio(default_appendix_e_config(seed=0))
    total = actual_reserve(truth, seed=0, company=0).total
    assert 1e6 < total < 1e8


def test_realized_lower_triangle_sums_to_actual():
    _, truth = generate_portfolio(GeneratorConfig(n_companies=2, seed=6))
    l1, l2 = realized_lower_triangle(truth, 6, 1)
    act = actual_reserve(truth, seed=6, company=1)
    assert np.nansum(l1) == pytest.approx(act.lob_1, rel=1e-12)
    assert np.nansum(l2) == pytest.approx(act.lob_2, rel=1e-12)
    assert np.all(np.isnan(l1[observed_mask(10)]))
    assert np.all(np.isnan(l1[0]))
    assert np.isfinite(l1[9, 9])


def test_future_draws_mean():
    _, truth = generate_portfolio(GeneratorConfig(n_companies=2, seed=6))
    d = simulate_future_reserves(truth, 1, 20_000, np.random.default_rng(0))
    exp = truth.expected_reserve(1)
    se = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0])
    assert abs(d[:, 0].mean() - exp.lob_1) <= 4 * se[0]
    assert abs(d[:, 1].mean() - exp.lob_2) <= 4 * se[1]
