"""Gaussian copula density, sampler and rank-based pseudo-likelihood fit."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

from .errors import DomainError, NumericalError, ValidationError

log = logging.getLogger(__name__)

THETA_BOUND = 1.0 - 1e-6


class CopulaFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    INDEPENDENCE = "independence"


class ThetaScope(str, enum.Enum):
    SHARED = "shared"
    PER_COMPANY = "per_company"


@dataclass(frozen=True)
class CopulaSpec:
    family: CopulaFamily = CopulaFamily.GAUSSIAN
    scope: ThetaScope = ThetaScope.SHARED

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily(self.family))
        object.__setattr__(self, "scope", ThetaScope(self.scope))

    @property
    def n_params(self):
        return 0 if self.family is CopulaFamily.INDEPENDENCE else 1


@dataclass(frozen=True)
class DependenceParams:
    """Shared ``theta`` (a float) or per-company ``theta`` (a dict by id).

    ``boundary`` lists the entries (``"shared"`` or company ids) whose fit
    hit the clamp at ``+-(1 - 1e-6)``.
    """

    theta: object
    boundary: tuple = ()
    pseudo_loglik: float = float("nan")

    def __post_init__(self):
        if isinstance(self.theta, dict):
            for cid, t in self.theta.items():
                if not abs(t) < 1.0:
                    raise DomainError(f"theta for company {cid} must lie in (-1, 1), got {t}")
        elif not abs(self.theta) < 1.0:
            raise DomainError(f"theta must lie in (-1, 1), got {self.theta}")

    @property
    def shared(self):
        return not isinstance(self.theta, dict)

    @property
    def n_params(self):
        return len(self.theta) if isinstance(self.theta, dict) else 1

    def for_companies(self, company_ids):
        if isinstance(self.theta, dict):
            return np.array([self.theta[c] for c in company_ids], dtype=float)
        return np.full(len(company_ids), float(self.theta))

    def vector(self):
        if isinstance(self.theta, dict):
            return np.array([self.theta[k] for k in sorted(self.theta)], dtype=float)
        return np.array([float(self.theta)])


def _check_unit(u, name):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError(f"{name} must lie strictly inside (0, 1)")
    return u


def _gaussian_logc(theta, x, y):
    t2 = theta * theta
    return -0.5 * math.log1p(-t2) - (t2 * (x * x + y * y) - 2.0 * theta * x * y) / (2.0 * (1.0 - t2))


def copula_log_density(spec, theta, u, v):
    """``log c(u, v; theta)``; vectorised over ``u`` and ``v``."""
    u = _check_unit(u, "u")
    v = _check_unit(v, "v")
    if spec.family is CopulaFamily.INDEPENDENCE:
        out = np.zeros(np.broadcast(u, v).shape)
    else:
        if not abs(theta) < 1.0:
            raise DomainError(f"theta must lie in (-1, 1), got {theta}")
        out = _gaussian_logc(float(theta), ndtri(u), ndtri(v))
    return float(out) if out.ndim == 0 else out


def _as_pairs(pairs):
    """Normalise to a list of ``(n_c, 2)`` arrays, one per company."""
    if isinstance(pairs, np.ndarray) and pairs.ndim == 3:
        return [pairs[c] for c in range(pairs.shape[0])]
    out = []
    for p in pairs:
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            p = p.reshape(-1, 2)
        out.append(p)
    return out


def copula_pseudo_loglik(spec, dependence, pairs, company_ids=None):
    """Sum of copula log densities over all companies' rank pairs."""
    pairs = _as_pairs(pairs)
    if spec.family is CopulaFamily.INDEPENDENCE:
        for p in pairs:
            _check_unit(p, "ranks")
        return 0.0
    if company_ids is None:
        company_ids = tuple(str(c) for c in range(len(pairs)))
    if isinstance(dependence, DependenceParams):
        thetas = dependence.for_companies(company_ids)
    else:
        thetas = np.full(len(pairs), float(dependence))
    total = 0.0
    for p, t in zip(pairs, thetas):
        total += float(np.sum(copula_log_density(spec, t, p[:, 0], p[:, 1])))
    return total


def _suff_stats(p):
    x = ndtri(_check_unit(p[:, 0], "ranks"))
    y = ndtri(_check_unit(p[:, 1], "ranks"))
    return x.size, float(np.sum(x * x + y * y)), float(np.sum(x * y)), x, y


def _profile(theta, n, s, c):
    t2 = theta * theta
    return -0.5 * n * math.log1p(-t2) - (t2 * s - 2.0 * theta * c) / (2.0 * (1.0 - t2))


def _fit_one(p, label):
    n, s, c, x, y = _suff_stats(p)
    if n < 3:
        raise ValidationError(f"at least 3 rank pairs are needed to estimate theta ({label}), got {n}")
    sx, sy = float(np.std(x)), float(np.std(y))
    init = float(np.corrcoef(x, y)[0, 1]) if sx > 0 and sy > 0 else 0.0
    init = min(max(init, -THETA_BOUND), THETA_BOUND)
    res = minimize_scalar(
        lambda t: -_profile(t, n, s, c),
        bounds=(-THETA_BOUND, THETA_BOUND),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    if not np.isfinite(res.fun):
        raise NumericalError("copula pseudo-likelihood is not finite", company_id=label, stage="copula")
    theta, value = float(res.x), -float(res.fun)
    init_value = _profile(init, n, s, c)
    if init_value > value:
        theta, value = init, init_value
    at_bound = abs(theta) >= THETA_BOUND - 1e-9
    return theta, value, at_bound


def fit_copula(spec, pairs, company_ids=None):
    """Maximise the rank pseudo-likelihood; one theta or one per company.

    Parameters
    ----------
    spec : CopulaSpec
    pairs : sequence of (n_c, 2) arrays or (C, n, 2) array
        Rank pairs strictly inside the unit square.
    company_ids : sequence of str, optional
        Keys for the per-company result (defaults to ``"0".."C-1"``).

    Returns
    -------
    DependenceParams
    """
    pairs = _as_pairs(pairs)
    if company_ids is None:
        company_ids = tuple(str(c) for c in range(len(pairs)))
    if spec.family is CopulaFamily.INDEPENDENCE:
        if spec.scope is ThetaScope.PER_COMPANY:
            return DependenceParams({cid: 0.0 for cid in company_ids}, (), 0.0)
        return DependenceParams(0.0, (), 0.0)
    if spec.scope is ThetaScope.SHARED:
        theta, value, at_bound = _fit_one(np.concatenate(pairs, axis=0), "shared")
        if at_bound:
            log.warning("shared copula parameter reached the boundary (%.6f)", theta)
        return DependenceParams(theta, ("shared",) if at_bound else (), value)
    thetas, flagged, total = {}, [], 0.0
    for cid, p in zip(company_ids, pairs):
        theta, value, at_bound = _fit_one(p, cid)
        thetas[cid] = theta
        total += value
        if at_bound:
            log.warning("copula parameter of company %s reached the boundary (%.6f)", cid, theta)
            flagged.append(cid)
    return DependenceParams(thetas, tuple(flagged), total)


def sample_copula(spec, theta, n, rng):
    """Draw ``n`` pairs ``(u, v)`` from the copula using generator ``rng``."""
    if not abs(theta) < 1.0:
        raise DomainError(f"theta must lie in (-1, 1), got {theta}")
    z = rng.standard_normal((int(n), 2))
    if spec.family is CopulaFamily.INDEPENDENCE:
        theta = 0.0
    x = z[:, 0]
    y = theta * z[:, 0] + math.sqrt(1.0 - theta * theta) * z[:, 1]
    u = np.column_stack([ndtr(x), ndtr(y)])
    # ndtr rounds to exactly 0 or 1 only beyond ~8 sd in double precision
    return np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
