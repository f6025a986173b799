"""Synthetic multi-company portfolios with known ground truth.

Each company draws a random intercept per LOB, then per observed cell a
Gaussian-copula pair ``(u1, u2)`` that is pushed through the marginal
quantile functions at ``eta_ijc``.  Ratios are multiplied by the
accident-year premiums to give incremental paid losses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.special import gammaincinv, ndtr, ndtri

from .errors import ValidationError
from .marginals import Family, MarginalParams, eta_matrix
from .triangles import (
    Lob,
    LossTriangle,
    LossTrianglePair,
    Portfolio,
    ReserveEstimate,
    lower_triangle_cells,
    observed_mask,
)

PERSONAL_ACCIDENT = (-0.03, -0.03, -0.13, -0.17, -0.18, -0.18, -0.24, -0.27, -0.21)
COMMERCIAL_ACCIDENT = (-0.14, -0.15, -0.30, -0.29, -0.27, -0.14, -0.10, 0.17, -0.12)
PERSONAL_DEVELOPMENT = (-0.23, -1.05, -1.65, -2.26, -3.02, -3.68, -4.50, -4.91, -5.92)
COMMERCIAL_DEVELOPMENT = (0.20, -0.02, -0.41, -1.06, -1.47, -2.10, -2.81, -3.12, -4.18)
PERSONAL_PREMIUMS = (4711333, 5335525, 5947504, 6354197, 6738172, 7079444, 7254832, 7739379, 8154065, 8435918)
COMMERCIAL_PREMIUMS = (267666, 274526, 268161, 276821, 270214, 280568, 344915, 371139, 323753, 221448)

# spawn-key tags separating the random streams of one seed
_UPPER, _ACTUAL, _FUTURE = 0, 1, 2


class SparsityScenario(str, enum.Enum):
    NONE = "none"
    ZERO_ONE_ACCIDENT = "zero-accident"
    ZERO_ONE_DEVELOPMENT = "zero-development"
    ZERO_BOTH = "zero-both"


def _smallest(tables):
    """``(lob, index)`` of the smallest absolute entry; first wins on ties."""
    best = None
    for lob, table in enumerate(tables, start=1):
        for k, v in enumerate(table):
            if best is None or abs(v) < best[0]:
                best = (abs(v), lob, k)
    return best[1], best[2]


@dataclass(frozen=True)
class GeneratorConfig:
    """Ground-truth parameters of the simulated portfolio.

    ``zero_accident`` and ``zero_development`` are ``(lob, index)`` pairs
    (index 0 is year/dev 2) naming the coefficient a sparsity scenario sets
    to zero; ``None`` picks the smallest-magnitude entry over both LOBs.
    """

    n_companies: int = 30
    size: int = 10
    family_1: Family = Family.GAMMA
    family_2: Family = Family.GAMMA
    intercept_1: float = -1.0
    intercept_2: float = -1.4
    accident_1: tuple = PERSONAL_ACCIDENT
    accident_2: tuple = COMMERCIAL_ACCIDENT
    development_1: tuple = PERSONAL_DEVELOPMENT
    development_2: tuple = COMMERCIAL_DEVELOPMENT
    tau_1: float = 0.2
    tau_2: float = 0.3
    sigma_1: float = 2.01
    sigma_2: float = 1.10
    theta: float = -0.3
    premiums_1: tuple = PERSONAL_PREMIUMS
    premiums_2: tuple = COMMERCIAL_PREMIUMS
    sparsity: SparsityScenario = SparsityScenario.NONE
    zero_accident: tuple = None
    zero_development: tuple = None
    seed: int = 0

    def __post_init__(self):
        for name in ("family_1", "family_2"):
            object.__setattr__(self, name, Family(getattr(self, name)))
        object.__setattr__(self, "sparsity", SparsityScenario(self.sparsity))
        for name in ("accident_1", "accident_2", "development_1", "development_2", "premiums_1", "premiums_2"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("zero_accident", "zero_development"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, (int(v[0]), int(v[1])))
        I = self.size
        if self.n_companies < 1 or I < 2:
            raise ValidationError("need at least one company and I >= 2")
        for name in ("accident_1", "accident_2", "development_1", "development_2"):
            if len(getattr(self, name)) != I - 1:
                raise ValidationError(f"{name} must have I-1 = {I - 1} entries")
        for name in ("premiums_1", "premiums_2"):
            p = getattr(self, name)
            if len(p) != I or min(p) <= 0:
                raise ValidationError(f"{name} must have I = {I} positive entries")
        if self.tau_1 < 0 or self.tau_2 < 0 or self.sigma_1 <= 0 or self.sigma_2 <= 0:
            raise ValidationError("tau must be nonnegative and sigma positive")
        if not abs(self.theta) < 1:
            raise ValidationError("theta must lie in (-1, 1)")

    def zeroed(self):
        """Coefficients set to zero by the scenario, as ``(kind, lob, index)``."""
        out = []
        if self.sparsity in (SparsityScenario.ZERO_ONE_ACCIDENT, SparsityScenario.ZERO_BOTH):
            lob, k = self.zero_accident or _smallest((self.accident_1, self.accident_2))
            out.append(("accident", lob, k))
        if self.sparsity in (SparsityScenario.ZERO_ONE_DEVELOPMENT, SparsityScenario.ZERO_BOTH):
            lob, k = self.zero_development or _smallest((self.development_1, self.development_2))
            out.append(("development", lob, k))
        return out

    def params(self, lob):
        """True :class:`MarginalParams` of one LOB, scenario applied."""
        lob = int(lob)
        acc = list(self.accident_1 if lob == 1 else self.accident_2)
        dev = list(self.development_1 if lob == 1 else self.development_2)
        for kind, zl, k in self.zeroed():
            if zl == lob:
                (acc if kind == "accident" else dev)[k] = 0.0
        return MarginalParams.from_effects(
            self.intercept_1 if lob == 1 else self.intercept_2,
            acc,
            dev,
            self.sigma_1 if lob == 1 else self.sigma_2,
            self.tau_1 if lob == 1 else self.tau_2,
        )

    def family(self, lob):
        return self.family_1 if int(lob) == 1 else self.family_2

    def premiums(self, lob):
        return np.array(self.premiums_1 if int(lob) == 1 else self.premiums_2)

    def company_ids(self):
        width = max(2, len(str(self.n_companies)))
        return tuple(f"C{c + 1:0{width}d}" for c in range(self.n_companies))

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else (list(v) if isinstance(v, tuple) else v)
        return out

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**d)


def default_appendix_e_config(**overrides):
    """The reference simulation setting; keyword overrides are applied on top."""
    return replace(GeneratorConfig(), **overrides)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    config: GeneratorConfig
    company_ids: tuple
    b_1: np.ndarray
    b_2: np.ndarray
    expected_lower_1: np.ndarray
    expected_lower_2: np.ndarray

    def b(self, lob):
        return self.b_1 if int(lob) == 1 else self.b_2

    def params(self, lob):
        return self.config.params(lob)

    def expected_reserve(self, company=0):
        c = _company_index(self, company)
        return ReserveEstimate(
            float(np.nansum(self.expected_lower_1[c])), float(np.nansum(self.expected_lower_2[c]))
        )

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "company_ids": list(self.company_ids),
            "b_1": self.b_1.tolist(),
            "b_2": self.b_2.tolist(),
            "expected_reserve": {
                cid: {"lob_1": r.lob_1, "lob_2": r.lob_2}
                for cid, r in ((cid, self.expected_reserve(k)) for k, cid in enumerate(self.company_ids))
            },
        }


def _company_index(truth, company):
    if isinstance(company, str):
        try:
            return truth.company_ids.index(company)
        except ValueError:
            raise ValidationError(f"unknown company {company!r}") from None
    return int(company)


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def quantile(family, u, eta, sigma):
    """Marginal quantile function at probability ``u`` and predictor ``eta``."""
    if family is Family.GAMMA:
        return gammaincinv(sigma, u) * np.exp(eta) / sigma
    return np.exp(eta + sigma * ndtri(u))


def _copula_uniforms(rng, theta, shape):
    z = rng.standard_normal(shape + (2,))
    x = z[..., 0]
    y = theta * z[..., 0] + math.sqrt(1.0 - theta * theta) * z[..., 1]
    tiny = np.nextafter(0.0, 1.0)
    top = np.nextafter(1.0, 0.0)
    return np.clip(ndtr(x), tiny, top), np.clip(ndtr(y), tiny, top)


def _ratios(config, eta_1, eta_2, rng):
    u1, u2 = _copula_uniforms(rng, config.theta, eta_1.shape)
    y1 = quantile(config.family_1, u1, eta_1, config.sigma_1)
    y2 = quantile(config.family_2, u2, eta_2, config.sigma_2)
    # gamma quantiles underflow to 0 only for u below ~1e-300
    floor = np.finfo(float).tiny
    return np.maximum(y1, floor), np.maximum(y2, floor)


def generate_portfolio(config):
    """Simulate the observed triangles and return ``(Portfolio, GroundTruth)``.

    Company ``c`` uses its own stream derived from ``(seed, c)``, so the
    result does not depend on generation order.
    """
    I = config.size
    mask = observed_mask(I)
    base_1 = eta_matrix(config.params(1).beta, I)
    base_2 = eta_matrix(config.params(2).beta, I)
    prem_1, prem_2 = config.premiums(1), config.premiums(2)
    lower = ~mask
    lower[0, :] = False
    ids = config.company_ids()
    b1 = np.empty(config.n_companies)
    b2 = np.empty(config.n_companies)
    exp_1 = np.full((config.n_companies, I, I), np.nan)
    exp_2 = np.full((config.n_companies, I, I), np.nan)
    companies = []
    for c, cid in enumerate(ids):
        rng = _stream(config.seed, _UPPER, c)
        b1[c] = config.tau_1 * rng.standard_normal()
        b2[c] = config.tau_2 * rng.standard_normal()
        e1 = base_1[mask] + b1[c]
        e2 = base_2[mask] + b2[c]
        y1, y2 = _ratios(config, e1, e2, rng)
        v1 = np.full((I, I), np.nan)
        v2 = np.full((I, I), np.nan)
        v1[mask] = y1
        v2[mask] = y2
        companies.append(
            LossTrianglePair(
                cid,
                LossTriangle(Lob.LOB1, v1 * prem_1[:, None], prem_1),
                LossTriangle(Lob.LOB2, v2 * prem_2[:, None], prem_2),
            )
        )
        exp_1[c][lower] = (np.exp(base_1 + b1[c]) * prem_1[:, None])[lower]
        exp_2[c][lower] = (np.exp(base_2 + b2[c]) * prem_2[:, None])[lower]
    truth = GroundTruth(config, ids, b1, b2, exp_1, exp_2)
    return Portfolio(tuple(companies), I), truth


def simulate_future_reserves(truth, company, n, rng):
    """``n`` draws of the lower-triangle totals of one company, shape ``(n, 2)``.

    Uses the company's true random intercepts with fresh copula and marginal
    draws per cell.
    """
    config = truth.config
    c = _company_index(truth, company)
    I = config.size
    cells = lower_triangle_cells(I)
    ii = np.array([k.accident_year_index - 1 for k in cells])
    jj = np.array([k.development_year_index - 1 for k in cells])
    e1 = eta_matrix(config.params(1).beta, I)[ii, jj] + truth.b_1[c]
    e2 = eta_matrix(config.params(2).beta, I)[ii, jj] + truth.b_2[c]
    w1 = config.premiums(1)[ii]
    w2 = config.premiums(2)[ii]
    out = np.empty((int(n), 2))
    chunk = 20000
    for start in range(0, int(n), chunk):
        m = min(chunk, int(n) - start)
        y1, y2 = _ratios(config, np.broadcast_to(e1, (m, e1.size)), np.broadcast_to(e2, (m, e2.size)), rng)
        out[start : start + m, 0] = y1 @ w1
        out[start : start + m, 1] = y2 @ w2
    return out


def actual_reserve(truth, config=None, seed=0, company=0):
    """One realised lower-triangle reserve for ``company`` (or all when ``None``)."""
    if config is not None and config != truth.config:
        truth = replace(truth, config=config)
    if company is None:
        parts = [actual_reserve(truth, None, seed, c) for c in range(len(truth.company_ids))]
        return ReserveEstimate(sum(p.lob_1 for p in parts), sum(p.lob_2 for p in parts))
    low_1, low_2 = realized_lower_triangle(truth, seed, company)
    return ReserveEstimate(float(np.nansum(low_1)), float(np.nansum(low_2)))


def realized_lower_triangle(truth, seed=0, company=0):
    """Realised incremental losses of the unobserved cells, one ``(I, I)`` array per LOB.

    Observed cells are NaN.  Totals agree with :func:`actual_reserve`.
    """
    config = truth.config
    c = _company_index(truth, company)
    I = config.size
    cells = lower_triangle_cells(I)
    ii = np.array([k.accident_year_index - 1 for k in cells])
    jj = np.array([k.development_year_index - 1 for k in cells])
    e1 = eta_matrix(config.params(1).beta, I)[ii, jj] + truth.b_1[c]
    e2 = eta_matrix(config.params(2).beta, I)[ii, jj] + truth.b_2[c]
    y1, y2 = _ratios(config, e1[None, :], e2[None, :], _stream(seed, _ACTUAL, c))
    out = []
    for lob, y in ((1, y1[0]), (2, y2[0])):
        m = np.full((I, I), np.nan)
        m[ii, jj] = y * config.premiums(lob)[ii]
        out.append(m)
    return out[0], out[1]


def future_stream(seed, company_index):
    """Random stream for truth draws of one company's future losses."""
    return _stream(seed, _FUTURE, company_index)


def ratio_summary(portfolio, lob):
    """Per-company loss-ratio five-number summary for box plots."""
    rows = []
    for pair in portfolio.companies:
        tri = pair.triangle(lob)
        r = tri.observed() / tri.premiums[np.nonzero(observed_mask(tri.size))[0]]
        q = np.quantile(r, [0.0, 0.25, 0.5, 0.75, 1.0])
        rows.append({"company_id": pair.company_id, "lob": int(lob), **dict(zip(("min", "q1", "median", "q3", "max"), q.tolist()))})
    return rows


__all__ = [
    "SparsityScenario",
    "GeneratorConfig",
    "GroundTruth",
    "default_appendix_e_config",
    "generate_portfolio",
    "actual_reserve",
    "realized_lower_triangle",
    "simulate_future_reserves",
    "future_stream",
    "quantile",
    "ratio_summary",
]
