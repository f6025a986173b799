"""Time the numba kernels against their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is called once first so numba compilation is excluded.  The
end-to-end row times one marginal log-likelihood with Hessian under each
backend in a fresh interpreter (the backend is fixed at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from surcmm import _backend, kernels


def _inputs(rng, n_comp=30, n_cells=55):
    c1 = -rng.uniform(50, 150, n_comp)
    c2 = c1 - rng.uniform(-20, 20, n_comp)
    q = -rng.uniform(5, 20, n_comp)
    nodes, logw = kernels.gauss_hermite(20)
    m = 40
    A = rng.standard_normal((m, m))
    H = A @ A.T + m * np.eye(m)
    g = rng.standard_normal(m)
    p = rng.standard_normal(m) * 0.1
    lam = np.full(m, 0.5)
    lo, hi = np.full(m, -np.inf), np.full(m, np.inf)
    res = rng.standard_normal((n_comp, n_cells))
    srt = np.sort(res, axis=1)
    u = rng.uniform(size=(n_comp, n_cells))
    return {
        "company_quadrature": ((c1, c2, q, nodes, logw),),
        "coordinate_descent": ((H, g, p, lam, lo, hi, 2000, 1e-12),),
        "row_ranks": ((res,),),
        "row_quantiles": ((srt, u),),
    }


def _time(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=10, repeat=repeat)) / 10


_E2E = """
import time, numpy as np
from surcmm.estimation import JointData
from surcmm.marginals import MarginalSpec, marginal_terms
from surcmm.simulator import GeneratorConfig, generate_portfolio
pf, t = generate_portfolio(GeneratorConfig(seed=1))
d = JointData.from_portfolio(pf).lob_1
p = GeneratorConfig().params(1)
marginal_terms(MarginalSpec(), d, p.beta, p.sigma, p.tau, order=2)
best = min(
    (lambda s: (marginal_terms(MarginalSpec(), d, p.beta, p.sigma, p.tau, order=2), time.perf_counter() - s)[1])(time.perf_counter())
    for _ in range({repeat})
)
print(best)
"""


def _end_to_end(disable, repeat):
    env = dict(os.environ, SURCMM_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", _E2E.format(repeat=repeat)], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not _backend.USE_NUMBA:
        print("numba is disabled or unavailable; both columns time the plain Python loops")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba (us)':>14}{'numpy (us)':>14}{'speed-up':>10}")
    for name, (args_,) in _inputs(rng).items():
        t_nb = _time(getattr(kernels, name + "_nb"), args_, args.repeat)
        t_np = _time(getattr(kernels, name + "_np"), args_, args.repeat)
        print(f"{name:<22}{t_nb * 1e6:>14.1f}{t_np * 1e6:>14.1f}{t_np / t_nb:>10.2f}")
    t_nb = _end_to_end(False, args.repeat)
    t_np = _end_to_end(True, args.repeat)
    print(f"{'marginal_terms (e2e)':<22}{t_nb * 1e6:>14.1f}{t_np * 1e6:>14.1f}{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
