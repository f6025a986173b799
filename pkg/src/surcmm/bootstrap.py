"""Copula-coupled residual bootstrap of reserves.

For every replicate the observed upper triangles are rebuilt from the
fitted means and residuals drawn through the empirical quantile function
at copula-dependent probabilities, the model is refitted at the original
penalty weights, and the lower triangles are predicted again.  Replicate
``r`` draws from its own stream ``SeedSequence(seed, spawn_key=(r,))`` so
results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .copulas import sample_copula
from .errors import NumericalError, SurcmmError, ValidationError
from .estimation import (
    JointData,
    ModelKind,
    fit_marginal,
    fit_sparse_surcmm,
    fit_surcmm,
    initial_marginal,
)
from .kernels import row_quantiles
from .marginals import Family, LobData, MarginalSpec, lower_triangle_reserve, observed_design, residual_matrix

log = logging.getLogger(__name__)

CLIP_FRACTION = 1e-8


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, seed and failure budget.

    ``max_failures=None`` allows 1% of the replicates to fail.
    """

    replicates: int = 5000
    seed: int = 0
    refit: bool = True
    max_failures: int = None
    threads: int = 1

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValidationError("replicates must be at least 1")
        if int(self.threads) < 1:
            raise ValidationError("threads must be at least 1")

    @property
    def failure_budget(self):
        if self.max_failures is not None:
            return int(self.max_failures)
        return int(math.floor(0.01 * self.replicates))


@dataclass
class BootstrapDistribution:
    """Successful replicate reserves, shape ``(R, C, 2)``, plus failures."""

    model: str
    company_ids: tuple
    replicate_ids: np.ndarray
    reserves: np.ndarray
    failures: list = field(default_factory=list)
    config: BootstrapConfig = field(default_factory=BootstrapConfig)
    clips: int = 0

    def _rows(self, company):
        if company is None:
            return slice(None)
        if isinstance(company, str):
            return [self.company_ids.index(company)]
        if isinstance(company, (list, tuple)):
            return [self.company_ids.index(c) if isinstance(c, str) else int(c) for c in company]
        return [int(company)]

    def lob_totals(self, lob, company=None):
        return self.reserves[:, self._rows(company), int(lob) - 1].sum(axis=1)

    def totals(self, company=None):
        """Total reserve per replicate for one company (or summed over all)."""
        return self.reserves[:, self._rows(company), :].sum(axis=(1, 2))

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("replicate", "company_id", "reserve_lob1", "reserve_lob2", "total_reserve"))
            for k, rid in enumerate(self.replicate_ids):
                for c, cid in enumerate(self.company_ids):
                    r1, r2 = self.reserves[k, c]
                    w.writerow((int(rid), cid, repr(float(r1)), repr(float(r2)), repr(float(r1 + r2))))
        return path

    def sidecar(self):
        return {
            "model": self.model,
            "seed": int(self.config.seed),
            # worker count does not affect results, so it stays out of the file
            "config": {k: v for k, v in asdict(self.config).items() if k != "threads"},
            "replicates_ok": int(len(self.replicate_ids)),
            "failures": [{"replicate": int(r), "reason": str(m)} for r, m in self.failures],
            "gamma_clips": int(self.clips),
            "company_ids": list(self.company_ids),
        }

    def write(self, csv_path, json_path=None):
        csv_path = self.write_csv(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_path, json_path

    @classmethod
    def read_csv(cls, path, model=""):
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["replicate", "company_id", "reserve_lob1", "reserve_lob2", "total_reserve"]:
                raise ValidationError(f"{path}: not a bootstrap reserve file")
            rows = {}
            ids = []
            for line in reader:
                rid, cid = int(line[0]), line[1]
                if cid not in ids:
                    ids.append(cid)
                rows.setdefault(rid, {})[cid] = (float(line[2]), float(line[3]))
        reps = sorted(rows)
        res = np.array([[rows[r][c] for c in ids] for r in reps], dtype=float)
        side = path.with_suffix(".json")
        config = BootstrapConfig(replicates=max(len(reps), 1))
        failures = []
        if side.exists():
            meta = json.loads(side.read_text(encoding="utf-8"))
            model = model or meta.get("model", "")
            config = BootstrapConfig(**meta["config"])
            failures = [(f["replicate"], f["reason"]) for f in meta.get("failures", [])]
        return cls(model, tuple(ids), np.array(reps), res.reshape(len(reps), len(ids), 2), failures, config)


class BootstrapAbort(NumericalError):
    """Too many replicates failed; ``partial`` holds what completed."""

    def __init__(self, message, partial):
        super().__init__(message, stage="bootstrap")
        self.partial = partial


def empirical_quantile(sample, u):
    """``ceil(u*n)``-th order statistic of ``sample`` (clamped to ``1..n``)."""
    srt = np.sort(np.asarray(sample, dtype=float))
    if srt.size == 0:
        raise ValidationError("empirical quantile of an empty sample")
    u = np.asarray(u, dtype=float)
    out = row_quantiles(srt[None, :], np.atleast_1d(u).reshape(1, -1))[0]
    return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)


# ---------------------------------------------------------------------------
# replicate machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Context:
    fit: object
    data: JointData
    eta: tuple
    sorted_residuals: tuple
    thetas: np.ndarray
    config: BootstrapConfig


def _context(fit, data, config):
    eta, res = [], []
    for k in (1, 2):
        lob = data.lob(k)
        b = fit.effects(k).values(lob.company_ids)
        beta = fit.reserve_beta(k)
        sigma = fit.params(k).sigma
        eta.append(observed_design(data.size) @ beta + b[:, None])
        res.append(np.sort(residual_matrix(fit.spec(k), beta, sigma, b, lob.y), axis=1))
    thetas = fit.dependence.for_companies(data.company_ids)
    return _Context(fit, data, tuple(eta), tuple(res), thetas, config)


def _rebuild(family, eta, sigma, eps):
    if family is Family.GAMMA:
        mu = np.exp(eta)
        y = mu + eps * mu / math.sqrt(sigma)
        floor = CLIP_FRACTION * mu
        clipped = y < floor
        return np.where(clipped, floor, y), int(clipped.sum())
    return np.exp(eta + sigma * eps), 0


def bootstrap_sample(ctx, r):
    """Resampled ratio arrays ``(y1*, y2*)`` and the clip count for replicate ``r``."""
    fit, data = ctx.fit, ctx.data
    rng = np.random.default_rng(np.random.SeedSequence(int(ctx.config.seed), spawn_key=(int(r),)))
    C, n = data.lob_1.y.shape
    u = np.empty((C, n, 2))
    for c in range(C):
        u[c] = sample_copula(fit.copula_spec, float(ctx.thetas[c]), n, rng)
    ys, clips = [], 0
    for k in (1, 2):
        eps = row_quantiles(ctx.sorted_residuals[k - 1], np.ascontiguousarray(u[:, :, k - 1]))
        y, nclip = _rebuild(fit.spec(k).family, ctx.eta[k - 1], fit.params(k).sigma, eps)
        ys.append(y)
        clips += nclip
    return ys[0], ys[1], clips


def refit(fit, data):
    """Refit ``fit``'s model on ``data`` at its penalty weights (warm start)."""
    start = (fit.params_1, fit.params_2)
    if fit.model is ModelKind.SSURCMM:
        return fit_sparse_surcmm(
            data,
            fit.spec_1,
            fit.spec_2,
            fit.copula_spec,
            fit.penalty,
            fit.diagnostics.tolerance,
            start=start,
            fixed_lambdas=True,
            threshold=False,
        )
    return fit_surcmm(
        data,
        fit.spec_1,
        fit.spec_2,
        fit.copula_spec,
        fit.diagnostics.tolerance,
        random_effects=fit.random_effects,
        start=start,
    )


def fit_reserves(fit, data, beta=None):
    """Per-company reserves ``(C, 2)`` from a fit (raw or supplied ``beta``)."""
    out = np.empty((data.n_companies, 2))
    for k in (1, 2):
        b = fit.effects(k).values(data.company_ids)
        bk = fit.params(k).beta if beta is None else beta[k - 1]
        out[:, k - 1] = lower_triangle_reserve(bk, b, data.premiums_1 if k == 1 else data.premiums_2)
    return out


def _one(ctx, r):
    if not ctx.config.refit:
        fit = ctx.fit
        return fit_reserves(fit, ctx.data, (fit.reserve_beta(1), fit.reserve_beta(2))), 0
    y1, y2, clips = bootstrap_sample(ctx, r)
    star = refit(ctx.fit, ctx.data.with_ratios(y1, y2))
    return fit_reserves(star, ctx.data), clips


_WORKER = {}


def _init_worker(ctx):
    _WORKER["ctx"] = ctx


def _run_chunk(ids):
    ctx = _WORKER["ctx"]
    return [_guarded(ctx, r) for r in ids]


def _guarded(ctx, r):
    try:
        res, clips = _one(ctx, r)
        if not np.all(np.isfinite(res)) or np.any(res < 0):
            raise NumericalError("non-finite or negative replicate reserve", stage="bootstrap")
        return r, res, clips, None
    except (SurcmmError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return r, None, 0, f"{type(exc).__name__}: {exc}"


def _run(ctx, ids, threads):
    if threads <= 1 or len(ids) <= 1:
        for r in ids:
            yield _guarded(ctx, r)
        return
    chunks = [ids[k :: threads * 4] for k in range(min(len(ids), threads * 4))]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(ctx,)) as pool:
        for batch in pool.map(_run_chunk, chunks):
            yield from batch


def _assemble(ctx, results, model):
    results = sorted(results, key=lambda t: t[0])
    ok = [t for t in results if t[3] is None]
    failures = [(t[0], t[3]) for t in results if t[3] is not None]
    C = ctx.data.n_companies
    reserves = np.array([t[1] for t in ok]).reshape(len(ok), C, 2)
    return BootstrapDistribution(
        model,
        tuple(ctx.data.company_ids),
        np.array([t[0] for t in ok], dtype=np.int64),
        reserves,
        failures,
        ctx.config,
        int(sum(t[2] for t in ok)),
    )


def bootstrap_reserves(fit, portfolio, config=BootstrapConfig(), model=None):
    """Predictive reserve distribution of a fitted model.

    Parameters
    ----------
    fit : JointModelFit
    portfolio : Portfolio or JointData
        The data the model was fitted on.
    config : BootstrapConfig

    Returns
    -------
    BootstrapDistribution

    Raises
    ------
    BootstrapAbort
        When more than ``config.failure_budget`` replicates fail.
    """
    data = portfolio if isinstance(portfolio, JointData) else JointData.from_portfolio(portfolio)
    if tuple(data.company_ids) != tuple(fit.company_ids):
        raise ValidationError("portfolio companies differ from the fitted model's")
    ctx = _context(fit, data, config)
    ids = list(range(int(config.replicates)))
    results = []
    n_fail = 0
    for item in _run(ctx, ids, int(config.threads)):
        results.append(item)
        if item[3] is not None:
            n_fail += 1
            log.warning("replicate %d failed: %s", item[0], item[3])
            if n_fail > config.failure_budget:
                partial = _assemble(ctx, results, model or fit.model.value)
                raise BootstrapAbort(
                    f"{n_fail} replicate failures exceed the budget of {config.failure_budget}", partial
                )
    dist = _assemble(ctx, results, model or fit.model.value)
    if dist.clips:
        log.info("gamma reconstruction clipped %d cells to the positive floor", dist.clips)
    return dist


# ---------------------------------------------------------------------------
# silo baseline: one fixed-effects GLM per company and LOB
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _SiloContext:
    spec: tuple
    data: JointData
    params: tuple
    eta: tuple
    sorted_residuals: tuple
    config: BootstrapConfig
    company_index: tuple


def _silo_fit(spec, lob, start=None):
    start = start or initial_marginal(spec, lob, random_effects=False)
    return fit_marginal(spec, lob, start, random_effects=False, stage=f"silo {lob.company_ids[0]}").params


def silo_fits(data, specs):
    """Per-company per-LOB fixed-effects fits, ``params[k][c]``."""
    out = []
    for k in (1, 2):
        lob = data.lob(k)
        out.append(tuple(_silo_fit(specs[k - 1], lob.subset([c])) for c in range(lob.n_companies)))
    return tuple(out)


def _silo_context(data, specs, config, company_index):
    params = silo_fits(data, specs)
    eta, res = [], []
    X = observed_design(data.size)
    for k in (1, 2):
        lob = data.lob(k)
        e = np.stack([X @ p.beta for p in params[k - 1]])
        r = np.stack(
            [residual_matrix(specs[k - 1], p.beta, p.sigma, np.zeros(1), lob.y[c : c + 1])[0] for c, p in enumerate(params[k - 1])]
        )
        eta.append(e)
        res.append(np.sort(r, axis=1))
    return _SiloContext(tuple(specs), data, params, tuple(eta), tuple(res), config, tuple(company_index))


def _silo_one(ctx, r):
    data = ctx.data
    C, n = data.lob_1.y.shape
    out = np.empty((C, 2))
    clips = 0
    for c in range(C):
        # own stream per (replicate, company) so a company subset reproduces the full run
        rng = np.random.default_rng(
            np.random.SeedSequence(int(ctx.config.seed), spawn_key=(int(r), int(ctx.company_index[c])))
        )
        for k in (1, 2):
            # LOBs are resampled independently: no dependence between silos
            u = rng.random((1, n))
            u = np.where(u > 0.0, u, np.nextafter(0.0, 1.0))
            p = ctx.params[k - 1][c]
            prem = (data.premiums_1 if k == 1 else data.premiums_2)[c : c + 1]
            if ctx.config.refit:
                eps = row_quantiles(ctx.sorted_residuals[k - 1][c : c + 1], u)
                y, nclip = _rebuild(ctx.spec[k - 1].family, ctx.eta[k - 1][c : c + 1], p.sigma, eps)
                clips += nclip
                p = _silo_fit(ctx.spec[k - 1], LobData(y, data.size, (data.company_ids[c],)), p)
            out[c, k - 1] = lower_triangle_reserve(p.beta, np.zeros(1), prem)[0]
    return out, clips


def _silo_guarded(ctx, r):
    try:
        res, clips = _silo_one(ctx, r)
        if not np.all(np.isfinite(res)):
            raise NumericalError("non-finite silo reserve", stage="silo bootstrap")
        return r, res, clips, None
    except (SurcmmError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return r, None, 0, f"{type(exc).__name__}: {exc}"


def _silo_chunk(ids):
    ctx = _WORKER["ctx"]
    return [_silo_guarded(ctx, r) for r in ids]


def silo_bootstrap(portfolio, specs=None, config=BootstrapConfig(), companies=None):
    """Independent per-LOB bootstrap of company-level fixed-effects GLMs.

    ``companies`` restricts the work to a subset of company ids (each company
    is fitted on its own data, so the subset does not change the results).
    """
    data = portfolio if isinstance(portfolio, JointData) else JointData.from_portfolio(portfolio)
    keep = list(range(data.n_companies))
    if companies is not None:
        keep = [data.company_ids.index(c) for c in companies]
        data = JointData(data.lob_1.subset(keep), data.lob_2.subset(keep), data.premiums_1[keep], data.premiums_2[keep])
    specs = specs or (MarginalSpec(Family.GAMMA), MarginalSpec(Family.GAMMA))
    ctx = _silo_context(data, specs, config, keep)
    ids = list(range(int(config.replicates)))
    results = []
    n_fail = 0
    threads = int(config.threads)
    if threads <= 1 or len(ids) <= 1:
        it = (_silo_guarded(ctx, r) for r in ids)
    else:
        chunks = [ids[k :: threads * 4] for k in range(min(len(ids), threads * 4))]
        pool = ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(ctx,))
        it = (item for batch in pool.map(_silo_chunk, chunks) for item in batch)
    try:
        for item in it:
            results.append(item)
            if item[3] is not None:
                n_fail += 1
                log.warning("silo replicate %d failed: %s", item[0], item[3])
                if n_fail > config.failure_budget:
                    raise BootstrapAbort(
                        f"{n_fail} silo replicate failures exceed the budget of {config.failure_budget}",
                        _assemble(ctx, results, "silo"),
                    )
    finally:
        if threads > 1 and len(ids) > 1:
            pool.shutdown(cancel_futures=True)
    return _assemble(ctx, results, "silo")


@dataclass(frozen=True)
class DistributionSummary:
    mean: float
    std: float
    cv: float
    bias: float
    signed_bias: float
    n: int


def summarize_distribution(dist, point_reserve, company=None):
    """Mean, sample standard deviation, CV and bias (in percent).

    ``bias = |point - mean| / point * 100``; ``signed_bias`` keeps the sign
    of ``mean - point``.  ``dist`` is a :class:`BootstrapDistribution` or a
    plain array of total reserves.
    """
    values = dist.totals(company) if isinstance(dist, BootstrapDistribution) else np.asarray(dist, dtype=float)
    if values.size < 2:
        raise ValidationError("at least two replicates are needed to summarise a distribution")
    point = float(point_reserve.total if hasattr(point_reserve, "total") else point_reserve)
    if point == 0:
        raise ValidationError("point reserve must be nonzero")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    signed = (mean - point) / point * 100.0
    return DistributionSummary(mean, std, std / mean if mean else math.nan, abs(signed), signed, int(values.size))


def default_threads():
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


__all__ = [
    "BootstrapConfig",
    "BootstrapDistribution",
    "BootstrapAbort",
    "bootstrap_reserves",
    "bootstrap_sample",
    "empirical_quantile",
    "fit_reserves",
    "refit",
    "silo_bootstrap",
    "silo_fits",
    "summarize_distribution",
    "default_threads",
]
