import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from surcmm import kernels


def _quad_oracle(c1, c2, q):
    h = lambda b: c1 * b + c2 * math.exp(-b) + q * b * b
    # locate the peak so the integral is taken on a shifted scale
    grid = np.linspace(-30, 30, 60001)
    b0 = grid[np.argmax([h(b) for b in grid])]
    val, _ = integrate.quad(lambda b: math.exp(h(b) - h(b0)), b0 - 15, b0 + 15, epsabs=0, epsrel=1e-13, limit=400)
    return h(b0) + math.log(val)


@pytest.mark.parametrize(
    "c1,c2,q",
    [(-110.0, -105.0, -12.5), (-2.0, -1.5, -0.5), (3.0, 0.0, -2.0), (-55.0, -70.0, -5.6)],
)
def test_quadrature_matches_adaptive_integral(c1, c2, q):
    nodes, logw = kernels.gauss_hermite(40)
    for impl in (kernels.company_quadrature_nb, kernels.company_quadrature_np):
        logint, *_ = impl(np.array([c1]), np.array([c2]), np.array([q]), nodes, logw)
        assert logint[0] == pytest.approx(_quad_oracle(c1, c2, q), abs=1e-8)


coefs = st.tuples(
    st.floats(-200.0, 5.0),
    st.floats(-200.0, 0.0),
    st.floats(-50.0, -0.05),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(coefs, min_size=1, max_size=6), st.integers(5, 30))
def test_quadrature_backends_agree(rows, n_nodes):
    c1, c2, q = (np.array(v) for v in zip(*rows))
    nodes, logw = kernels.gauss_hermite(n_nodes)
    a = kernels.company_quadrature_nb(c1, c2, q, nodes, logw)
    b = kernels.company_quadrature_np(c1, c2, q, nodes, logw)
    np.testing.assert_array_equal(a[4], b[4])
    for x, y in zip(a[:4], b[:4]):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-10)


def test_mode_is_stationary_point():
    c1, c2, q = np.array([-40.0]), np.array([-33.0]), np.array([-3.0])
    nodes, logw = kernels.gauss_hermite(20)
    _, mode, *_ = kernels.company_quadrature(c1, c2, q, nodes, logw)
    b = mode[0]
    assert abs(c1[0] - c2[0] * math.exp(-b) + 2 * q[0] * b) < 1e-9


def test_coordinate_descent_diagonal_is_soft_threshold():
    H = np.diag([2.0, 4.0, 1.0])
    g = np.array([-3.0, 0.5, 0.2])
    p = np.zeros(3)
    lam = np.array([1.0, 1.0, 0.0])
    lo, hi = np.full(3, -np.inf), np.full(3, np.inf)
    expect = np.sign(-g) * np.maximum(np.abs(g) - lam, 0) / np.diag(H)
    for impl in (kernels.coordinate_descent_nb, kernels.coordinate_descent_np):
        np.testing.assert_allclose(impl(H, g, p, lam, lo, hi, 100, 1e-14), expect, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_coordinate_descent_backends_agree_and_are_optimal(n, seed, lam_scale):
    r = np.random.default_rng(seed)
    A = r.standard_normal((n, n))
    H = A @ A.T + n * np.eye(n)
    g = r.standard_normal(n)
    p = r.standard_normal(n) * 0.3
    lam = np.abs(r.standard_normal(n)) * lam_scale
    lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    d1 = kernels.coordinate_descent_nb(H, g, p, lam, lo, hi, 5000, 1e-13)
    d2 = kernels.coordinate_descent_np(H, g, p, lam, lo, hi, 5000, 1e-13)
    np.testing.assert_allclose(d1, d2, atol=1e-10)
    # subgradient optimality of the lasso subproblem at z = p + d
    z = p + d1
    grad = g + H @ d1
    for j in range(n):
        if z[j] != 0:
            assert grad[j] + lam[j] * np.sign(z[j]) == pytest.approx(0, abs=1e-8)
        else:
            assert abs(grad[j]) <= lam[j] + 1e-8


def test_row_ranks_examples():
    for impl in (kernels.row_ranks_nb, kernels.row_ranks_np):
        assert impl(np.array([[3.0]]))[0, 0] == 0.5
        np.testing.assert_allclose(impl(np.array([[-1.0, 0.0, 2.0]]))[0], [0.25, 0.5, 0.75])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(-5, 5), min_size=4, max_size=4), min_size=1, max_size=5))
def test_row_ranks_match_rankdata(rows):
    x = np.array(rows, dtype=float)
    expect = np.stack([stats.rankdata(r, method="max") for r in x]) / (x.shape[1] + 1)
    np.testing.assert_array_equal(kernels.row_ranks_nb(x), expect)
    np.testing.assert_array_equal(kernels.row_ranks_np(x), expect)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_row_quantiles_order_statistic(n, seed):
    r = np.random.default_rng(seed)
    srt = np.sort(r.standard_normal((3, n)), axis=1)
    u = r.uniform(size=(3, 7))
    expect = np.empty_like(u)
    for i in range(3):
        for k in range(7):
            expect[i, k] = srt[i, max(math.ceil(u[i, k] * n), 1) - 1]
    np.testing.assert_array_equal(kernels.row_quantiles_nb(srt, u), expect)
    np.testing.assert_array_equal(kernels.row_quantiles_np(srt, u), expect)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, SURCMM_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from surcmm import _backend, kernels; print(_backend.BACKEND, kernels.row_ranks is kernels.row_ranks_np)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.split() == ["numpy", "True"]
