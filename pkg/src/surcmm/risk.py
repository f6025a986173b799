"""Point reserves, percentage errors, TVaR ladders and risk capital."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapConfig, fit_reserves, silo_bootstrap
from .errors import DomainError, ValidationError
from .estimation import JointData
from .simulator import GeneratorConfig, future_stream, generate_portfolio, simulate_future_reserves
from .triangles import ReserveEstimate

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.60, 0.80, 0.85, 0.90, 0.95, 0.99)
BASE_LEVEL = 0.60


def _company_rows(company_ids, company):
    if company is None:
        return list(range(len(company_ids)))
    if isinstance(company, (list, tuple)):
        return [r for c in company for r in _company_rows(company_ids, c)]
    if isinstance(company, str):
        if company not in company_ids:
            raise ValidationError(f"unknown company {company!r}")
        return [company_ids.index(company)]
    return [int(company)]


def point_reserve(fit, portfolio, company=None):
    """Predicted lower-triangle reserve of one company, a list, or all.

    Uses the thresholded coefficients for a sparse fit and the predicted
    company effects.
    """
    data = portfolio if isinstance(portfolio, JointData) else JointData.from_portfolio(portfolio)
    per = fit_reserves(fit, data, (fit.reserve_beta(1), fit.reserve_beta(2)))
    rows = _company_rows(tuple(data.company_ids), company)
    tot = per[rows].sum(axis=0)
    return ReserveEstimate(float(tot[0]), float(tot[1]))


def percentage_error(estimated, actual):
    """``(estimated - actual) / actual`` in percent."""
    actual = float(actual)
    if actual == 0:
        raise DomainError("percentage error is undefined for an actual reserve of 0")
    return (float(estimated) - actual) / actual * 100.0


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise DomainError(f"TVaR level must lie in (0, 1), got {level}")


def tvar(sample, level):
    """Empirical tail value at risk.

    Mean of all sample values at or above the ``ceil(level * n)``-th order
    statistic (the quantile point and its ties are part of the tail).
    """
    _check_level(level)
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("TVaR of an empty sample")
    if n * (1.0 - level) < 1.0:
        log.warning("TVaR(%.4g) from %d points: the tail holds fewer than one expected point", level, n)
    # round guards against 0.8 * 10 = 8.000000000000002
    k = min(max(math.ceil(round(level * n, 9)), 1), n)
    q = x[k - 1]
    return float(np.mean(x[np.searchsorted(x, q, side="left") :]))


def tvar_ladder(sample, levels=DEFAULT_LEVELS):
    return {float(k): tvar(sample, k) for k in _checked_levels(levels)}


def _checked_levels(levels):
    levels = tuple(float(k) for k in levels)
    for k in levels:
        _check_level(k)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValidationError("TVaR levels must be strictly increasing")
    return levels


def risk_capital(ladder, baseline=None):
    """``TVaR(k) - TVaR(0.60)`` for every level above 0.60.

    Passing ``baseline`` (e.g. the distribution mean) replaces ``TVaR(0.60)``
    as the subtrahend.
    """
    if baseline is None:
        base = None
        for k, v in ladder.items():
            if math.isclose(k, BASE_LEVEL, abs_tol=1e-12):
                base = v
        if base is None:
            raise ValidationError("the TVaR ladder has no 0.60 level to use as the baseline")
    else:
        base = float(baseline)
    return {k: v - base for k, v in ladder.items() if k > BASE_LEVEL + 1e-12}


def risk_capital_gain(model_rc, silo_rc):
    """Relative reduction of risk capital versus the silo method, in percent."""
    out = {}
    for k, silo in silo_rc.items():
        if not silo > 0:
            raise DomainError(f"silo risk capital at level {k} must be positive, got {silo}")
        if k in model_rc:
            out[k] = (silo - model_rc[k]) / silo * 100.0
    return out


@dataclass
class RiskReport:
    """TVaR ladder, risk capital and (optionally) gains against the silo."""

    model: str
    tvar: dict
    risk_capital: dict
    gains: dict = field(default_factory=dict)
    baseline: str = "tvar60"
    mean: float = float("nan")

    @property
    def levels(self):
        return tuple(sorted(self.tvar))

    def with_gains(self, silo):
        return RiskReport(
            self.model, self.tvar, self.risk_capital, risk_capital_gain(self.risk_capital, silo.risk_capital), self.baseline, self.mean
        )

    def rows(self):
        for k in self.levels:
            yield {
                "model": self.model,
                "level": k,
                "tvar": self.tvar[k],
                "risk_capital": self.risk_capital.get(k, ""),
                "gain_vs_silo": self.gains.get(k, ""),
            }

    def to_dict(self):
        key = lambda d: {f"{k:.4g}": v for k, v in sorted(d.items())}
        return {
            "model": self.model,
            "baseline": self.baseline,
            "mean": self.mean,
            "tvar": key(self.tvar),
            "risk_capital": key(self.risk_capital),
            "gains_vs_silo": key(self.gains),
        }

    @classmethod
    def from_dict(cls, d):
        num = lambda m: {float(k): float(v) for k, v in m.items()}
        return cls(d["model"], num(d["tvar"]), num(d["risk_capital"]), num(d.get("gains_vs_silo", {})), d.get("baseline", "tvar60"), d.get("mean", math.nan))


def report_from_sample(model, sample, levels=DEFAULT_LEVELS, baseline="tvar60", silo=None):
    """Build a :class:`RiskReport` from a sample of total reserves.

    ``baseline="mean"`` measures risk capital from the sample mean instead
    of ``TVaR(0.60)``.
    """
    sample = np.asarray(sample, dtype=float)
    ladder = tvar_ladder(sample, levels)
    mean = float(np.mean(sample))
    if baseline == "tvar60":
        rc = risk_capital(ladder)
    elif baseline == "mean":
        rc = risk_capital(ladder, mean)
    else:
        raise ValidationError(f"unknown risk-capital baseline {baseline!r}")
    rep = RiskReport(model, ladder, rc, {}, baseline, mean)
    return rep.with_gains(silo) if silo is not None else rep


def distribution_report(dist, company=None, levels=DEFAULT_LEVELS, baseline="tvar60", silo=None, model=None):
    """Risk report of a bootstrap distribution's total reserves."""
    return report_from_sample(model or dist.model, dist.totals(_dist_rows(dist, company)), levels, baseline, silo)


def _dist_rows(dist, company):
    return None if company is None else _company_rows(tuple(dist.company_ids), company)


def silo_report(dist, company=None, levels=DEFAULT_LEVELS, baseline="tvar60"):
    """Sum of the per-LOB TVaRs of a silo bootstrap distribution."""
    rows = _dist_rows(dist, company)
    l1, l2 = dist.lob_totals(1, rows), dist.lob_totals(2, rows)
    levels = _checked_levels(levels)
    ladder = {k: tvar(l1, k) + tvar(l2, k) for k in levels}
    mean = float(np.mean(l1) + np.mean(l2))
    rc = risk_capital(ladder, mean if baseline == "mean" else None)
    return RiskReport("silo", ladder, rc, {}, baseline, mean)


def silo_baseline(portfolio, specs=None, config=BootstrapConfig(), company=None, levels=DEFAULT_LEVELS, baseline="tvar60"):
    """Per-company per-LOB fixed-effects GLM bootstrap summed across LOBs.

    Returns
    -------
    report : RiskReport
    distribution : BootstrapDistribution
    """
    data = portfolio if isinstance(portfolio, JointData) else JointData.from_portfolio(portfolio)
    ids = None
    if company is not None:
        ids = [data.company_ids[r] for r in _company_rows(tuple(data.company_ids), company)]
    dist = silo_bootstrap(data, specs, config, ids)
    return silo_report(dist, None, levels, baseline), dist


def true_risk_capital(truth, n=100_000, seed=0, levels=DEFAULT_LEVELS, company=0, baseline="tvar60"):
    """Risk report of simulated future reserves from the generating model.

    ``truth`` is a :class:`~surcmm.simulator.GroundTruth` or a generator
    config (whose portfolio is then generated to obtain company effects).
    """
    if isinstance(truth, GeneratorConfig):
        _, truth = generate_portfolio(truth)
    c = company if isinstance(company, int) else list(truth.company_ids).index(company)
    draws = simulate_future_reserves(truth, c, int(n), future_stream(seed, c))
    return report_from_sample("true", draws.sum(axis=1), levels, baseline)


def write_reports_csv(reports, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ("model", "level", "tvar", "risk_capital", "gain_vs_silo"), lineterminator="\n")
        w.writeheader()
        for rep in reports:
            for row in rep.rows():
                w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def write_reports_json(reports, path):
    path = Path(path)
    path.write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


__all__ = [
    "DEFAULT_LEVELS",
    "RiskReport",
    "distribution_report",
    "percentage_error",
    "point_reserve",
    "report_from_sample",
    "risk_capital",
    "risk_capital_gain",
    "silo_baseline",
    "silo_report",
    "true_risk_capital",
    "tvar",
    "tvar_ladder",
    "write_reports_csv",
    "write_reports_json",
]
