"""Marginal mixed-model likelihoods for one line of business.

Each standardised loss ratio ``y_ijc`` follows a lognormal or gamma law
with log-linear predictor

    eta_ijc = xi + alpha_i + lambda_j + b_c,     b_c ~ N(0, tau**2)

under reference-cell coding (accident year 1 and development year 1 sit in
the intercept).  The company random intercept is integrated out by adaptive
Gauss-Hermite quadrature centred at the posterior mode.

Parameter vector layout used by gradients and Hessians: ``beta`` (length
``2I-1``), then ``log(sigma)``, then ``log(tau)`` when tau is free.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, polygamma, psi

from . import kernels
from .errors import DomainError, NumericalError, StructuralError
from .triangles import lower_triangle_cells, observed_cells, observed_mask

LOG_2PI = math.log(2.0 * math.pi)


class Family(str, enum.Enum):
    LOGNORMAL = "lognormal"
    GAMMA = "gamma"


@dataclass(frozen=True)
class MarginalSpec:
    """Marginal family with fixed log link; ``quadrature_nodes >= 5``."""

    family: Family = Family.GAMMA
    quadrature_nodes: int = 20

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.quadrature_nodes) < 5:
            raise DomainError(f"quadrature_nodes must be >= 5, got {self.quadrature_nodes}")
        object.__setattr__(self, "quadrature_nodes", int(self.quadrature_nodes))

    @property
    def link(self):
        return "log"


@dataclass(frozen=True, eq=False)
class MarginalParams:
    beta: np.ndarray
    sigma: float
    tau: float = 0.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1 or beta.size % 2 == 0:
            raise StructuralError(f"beta must have odd length 2I-1, got shape {beta.shape}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise DomainError(f"tau must be nonnegative, got {self.tau}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def size(self):
        return (self.beta.size + 1) // 2

    @property
    def intercept(self):
        return float(self.beta[0])

    @property
    def accident_effects(self):
        """``alpha_2..alpha_I``."""
        return self.beta[1 : self.size]

    @property
    def development_effects(self):
        """``lambda_2..lambda_I``."""
        return self.beta[self.size :]

    @classmethod
    def from_effects(cls, intercept, accident, development, sigma, tau=0.0):
        return cls(np.concatenate([[intercept], accident, development]), sigma, tau)

    def replace(self, **changes):
        fields = {"beta": self.beta, "sigma": self.sigma, "tau": self.tau}
        fields.update(changes)
        return MarginalParams(**fields)

    def __eq__(self, other):
        if not isinstance(other, MarginalParams):
            return NotImplemented
        return (
            np.array_equal(self.beta, other.beta)
            and self.sigma == other.sigma
            and self.tau == other.tau
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignRow:
    x: np.ndarray
    company: int = 0


def design_row(accident_year_index, development_year_index, size, company=0):
    x = np.zeros(2 * size - 1)
    x[0] = 1.0
    if accident_year_index > 1:
        x[accident_year_index - 1] = 1.0
    if development_year_index > 1:
        x[size + development_year_index - 2] = 1.0
    return DesignRow(x, company)


def design_matrix(cells, size):
    """Rows of the reference-cell design for the given ``TriangleIndex`` list."""
    X = np.zeros((len(cells), 2 * size - 1))
    X[:, 0] = 1.0
    for k, idx in enumerate(cells):
        if idx.accident_year_index > 1:
            X[k, idx.accident_year_index - 1] = 1.0
        if idx.development_year_index > 1:
            X[k, size + idx.development_year_index - 2] = 1.0
    return X


@functools.lru_cache(maxsize=32)
def observed_design(size):
    X = design_matrix(observed_cells(size), size)
    X.setflags(write=False)
    return X


def eta_matrix(beta, size):
    """``xi + alpha_i + lambda_j`` as a full ``(I, I)`` array (no company effect)."""
    beta = np.asarray(beta, dtype=float)
    alpha = np.concatenate([[0.0], beta[1:size]])
    lam = np.concatenate([[0.0], beta[size:]])
    return beta[0] + alpha[:, None] + lam[None, :]


def linear_predictor(params, row, b_c=0.0):
    return float(np.dot(row.x, params.beta) + b_c)


def cell_loglik(spec, params, y, eta):
    """Log density of one loss ratio ``y`` at linear predictor ``eta``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("loss ratios must be strictly positive")
    eta = np.asarray(eta, dtype=float)
    s = params.sigma
    if spec.family is Family.GAMMA:
        out = s * math.log(s) - gammaln(s) + (s - 1.0) * np.log(y) - s * eta - s * y * np.exp(-eta)
    else:
        ly = np.log(y)
        out = -ly - 0.5 * LOG_2PI - math.log(s) - (ly - eta) ** 2 / (2.0 * s * s)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# likelihood over companies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LobData:
    """Observed loss ratios of one LOB stacked as ``(C, n)`` in cell order."""

    y: np.ndarray
    size: int
    company_ids: tuple = ()

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 2 or y.shape[1] != self.size * (self.size + 1) // 2:
            raise StructuralError(f"expected (C, {self.size * (self.size + 1) // 2}) ratios, got {y.shape}")
        if np.any(~(y > 0)):
            raise DomainError("loss ratios must be strictly positive")
        y.setflags(write=False)
        log_y = np.log(y)
        log_y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "log_y", log_y)
        ids = tuple(self.company_ids) or tuple(str(c) for c in range(y.shape[0]))
        object.__setattr__(self, "company_ids", ids)

    @classmethod
    def from_triangles(cls, triangles, company_ids=()):
        triangles = list(triangles)
        if not triangles:
            raise StructuralError("no triangles supplied")
        size = triangles[0].size
        return cls(np.stack([t.observed() for t in triangles]), size, tuple(company_ids))

    @property
    def n_companies(self):
        return self.y.shape[0]

    @property
    def n_cells(self):
        return self.y.shape[1]

    @property
    def design(self):
        return observed_design(self.size)

    def subset(self, rows):
        rows = np.asarray(rows)
        return LobData(self.y[rows], self.size, tuple(self.company_ids[r] for r in rows))


@functools.lru_cache(maxsize=16)
def _rule(n_nodes):
    nodes, logw = kernels.gauss_hermite(n_nodes)
    nodes.setflags(write=False)
    logw.setflags(write=False)
    return nodes, logw


@dataclass
class LikelihoodTerms:
    """Per-company pieces shared by the value, gradient and Hessian."""

    value: float
    company_values: np.ndarray
    mode: np.ndarray
    grad: np.ndarray = None
    hess: np.ndarray = None


def _integrand_coefficients(family, data, beta, sigma):
    X = data.design
    eta0 = X @ beta
    n = data.n_cells
    if family is Family.GAMMA:
        w = data.y * np.exp(-eta0)
        A = w.sum(axis=1)
        K = (
            n * (sigma * math.log(sigma) - gammaln(sigma))
            + (sigma - 1.0) * data.log_y.sum(axis=1)
            - sigma * eta0.sum()
        )
        c1 = np.full(data.n_companies, -sigma * n)
        c2 = -sigma * A
        c3 = 0.0
        extra = {"w": w, "A": A}
    else:
        r = data.log_y - eta0
        R1 = r.sum(axis=1)
        R2 = (r * r).sum(axis=1)
        s2 = sigma * sigma
        K = -data.log_y.sum(axis=1) - 0.5 * n * LOG_2PI - n * math.log(sigma) - R2 / (2.0 * s2)
        c1 = R1 / s2
        c2 = np.zeros(data.n_companies)
        c3 = -n / (2.0 * s2)
        extra = {"r": r, "R1": R1, "R2": R2}
    return eta0, K, c1, c2, c3, extra


def marginal_terms(spec, data, beta, sigma, tau, order=0, free_tau=True):
    """Log-likelihood of one LOB with optional gradient and Hessian.

    Parameters
    ----------
    spec : MarginalSpec
    data : LobData
    beta, sigma, tau
        Parameters; ``tau == 0`` removes the random effect (no quadrature).
    order : {0, 1, 2}
        Highest derivative to return.  Derivatives are with respect to
        ``(beta, log sigma[, log tau])``; the log-tau entry is present only
        when ``free_tau`` and ``tau > 0``.

    Returns
    -------
    LikelihoodTerms
    """
    family = spec.family
    beta = np.asarray(beta, dtype=float)
    X = data.design
    C, n = data.y.shape
    P = beta.size
    eta0, K, c1, c2, c3, ex = _integrand_coefficients(family, data, beta, sigma)

    random = tau > 0.0
    if random:
        q = np.full(C, c3 - 1.0 / (2.0 * tau * tau))
        nodes, logw = _rule(spec.quadrature_nodes)
        logint, mode, mom, cov, status = kernels.company_quadrature(c1, c2, q, nodes, logw)
        bad = np.flatnonzero(status != kernels.OK)
        if bad.size:
            c = int(bad[0])
            raise NumericalError(
                "random-effect quadrature failed "
                f"({'mode search did not converge' if status[c] == kernels.MODE_NOT_CONVERGED else 'non-finite integral'})",
                company_id=data.company_ids[c],
                stage="quadrature",
            )
        company = K - math.log(tau) - 0.5 * LOG_2PI + logint
    else:
        mode = np.zeros(C)
        mom = np.zeros((C, 3))
        mom[:, 0] = 1.0
        cov = np.zeros((C, 3, 3))
        company = K + c2
    if not np.all(np.isfinite(company)):
        c = int(np.flatnonzero(~np.isfinite(company))[0])
        raise NumericalError("non-finite marginal log-likelihood", company_id=data.company_ids[c], stage="likelihood")
    out = LikelihoodTerms(float(company.sum()), company, mode)
    if order == 0:
        return out

    with_tau = free_tau and random
    m = P + 1 + int(with_tau)
    grad = np.zeros(m)
    m1, Eb, Eb2 = mom[:, 0], mom[:, 1], mom[:, 2]
    xsum = X.sum(axis=0)
    if family is Family.GAMMA:
        w, A = ex["w"], ex["A"]
        wbar = m1 @ w
        g_beta = sigma * (X.T @ wbar) - sigma * C * xsum
        g_ls_c = sigma * (
            n * (math.log(sigma) + 1.0 - psi(sigma))
            + data.log_y.sum(axis=1)
            - eta0.sum()
            - n * Eb
            - A * m1
        )
        grad[:P] = g_beta
        grad[P] = g_ls_c.sum()
    else:
        r, R1, R2 = ex["r"], ex["R1"], ex["R2"]
        s2 = sigma * sigma
        g_beta = (X.T @ r.sum(axis=0) - Eb.sum() * xsum) / s2
        quad = R2 - 2.0 * Eb * R1 + n * Eb2
        grad[:P] = g_beta
        grad[P] = float(np.sum(-n + quad / s2))
    if with_tau:
        grad[P + 1] = float(np.sum(-1.0 + Eb2 / (tau * tau)))
    out.grad = grad
    if order == 1:
        return out

    H = np.zeros((m, m))
    if family is Family.GAMMA:
        H[:P, :P] = -sigma * (X.T * wbar) @ X
        H[:P, P] = H[P, :P] = g_beta
        H[P, P] = grad[P] + C * sigma * sigma * n * (1.0 / sigma - float(polygamma(1, sigma)))
    else:
        H[:P, :P] = -C * (X.T @ X) / s2
        H[:P, P] = H[P, :P] = -2.0 * g_beta
        H[P, P] = -2.0 * float(np.sum(quad)) / s2
    if with_tau:
        H[P + 1, P + 1] = float(np.sum(-2.0 * Eb2 / (tau * tau)))
    if random:
        # Louis identity: add sum_c J_c Cov(phi_c) J_c' with phi = (e^-b, b, b^2)
        J = np.zeros((C, m, 3))
        if family is Family.GAMMA:
            J[:, :P, 0] = sigma * (w @ X)
            J[:, P, 0] = -sigma * A
            J[:, P, 1] = -sigma * n
        else:
            J[:, :P, 1] = -xsum / s2
            J[:, P, 1] = -2.0 * R1 / s2
            J[:, P, 2] = n / s2
        if with_tau:
            J[:, P + 1, 2] = 1.0 / (tau * tau)
        H += np.einsum("cia,cab,cjb->ij", J, cov, J)
    out.hess = H
    return out


def company_marginal_loglik(spec, params, company, company_id=None):
    """Marginal log-likelihood of one company's standardised triangle."""
    data = LobData(company.observed()[None, :], company.size, (company_id,) if company_id else ())
    return marginal_terms(spec, data, params.beta, params.sigma, params.tau).value


def portfolio_marginal_loglik(spec, params, triangles, company_ids=()):
    data = LobData.from_triangles(triangles, company_ids)
    return marginal_terms(spec, data, params.beta, params.sigma, params.tau).value


# ---------------------------------------------------------------------------
# company effects, residuals and ranks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompanyEffects:
    b_hat: dict

    def values(self, company_ids):
        return np.array([self.b_hat[c] for c in company_ids])


def posterior_modes(spec, params, data):
    if params.tau == 0.0:
        return np.zeros(data.n_companies)
    return marginal_terms(spec, data, params.beta, params.sigma, params.tau).mode


def predict_company_effects(spec, params, triangles, company_ids=()):
    """Posterior-mode random intercept per company (all zero when tau = 0)."""
    data = triangles if isinstance(triangles, LobData) else LobData.from_triangles(triangles, company_ids)
    modes = posterior_modes(spec, params, data)
    return CompanyEffects(dict(zip(data.company_ids, (float(b) for b in modes))))


@dataclass(frozen=True, eq=False)
class ResidualTriangle:
    """Residuals (and optionally ranks) in observed-cell order."""

    residuals: np.ndarray
    size: int
    ranks: np.ndarray = None

    def as_matrix(self, which="residuals"):
        out = np.full((self.size, self.size), np.nan)
        out[observed_mask(self.size)] = getattr(self, which)
        return out


def residual_matrix(spec, beta, sigma, b, y):
    """Pseudo-residuals for stacked companies: ``y`` is ``(C, n)``, ``b`` is ``(C,)``."""
    size = int(round((math.sqrt(8 * y.shape[1] + 1) - 1) / 2))
    eta = observed_design(size) @ beta + np.asarray(b, dtype=float)[:, None]
    if spec.family is Family.GAMMA:
        mu = np.exp(eta)
        return (y - mu) * math.sqrt(sigma) / mu
    return (np.log(y) - eta) / sigma


def pseudo_residuals(spec, params, effects, company, company_id=None):
    """Residuals of one company at ``b_hat`` taken from ``effects``.

    ``effects`` is a :class:`CompanyEffects` (looked up by ``company_id``)
    or a plain number.
    """
    b = effects.b_hat[company_id] if isinstance(effects, CompanyEffects) else float(effects)
    y = company.observed()
    if np.any(~(y > 0)):
        raise DomainError("loss ratios must be strictly positive")
    res = residual_matrix(spec, params.beta, params.sigma, np.array([b]), y[None, :])[0]
    return ResidualTriangle(res, company.size)


def residual_ranks(residuals):
    """Within-company empirical CDF ranks ``#{e <= x} / (n + 1)``.

    Accepts a 1-D array, a ``(C, n)`` array (one row per company) or a
    :class:`ResidualTriangle`, for which a copy with ``ranks`` filled in is
    returned.
    """
    if isinstance(residuals, ResidualTriangle):
        ranks = residual_ranks(residuals.residuals)
        return ResidualTriangle(residuals.residuals, residuals.size, ranks)
    arr = np.asarray(residuals, dtype=float)
    if arr.ndim == 1:
        return kernels.row_ranks(arr[None, :])[0]
    return kernels.row_ranks(np.ascontiguousarray(arr))


@functools.lru_cache(maxsize=32)
def _lower_layout(size):
    cells = lower_triangle_cells(size)
    X = design_matrix(cells, size)
    rows = np.array([c.accident_year_index - 1 for c in cells])
    X.setflags(write=False)
    rows.setflags(write=False)
    return X, rows


def lower_triangle_reserve(beta, b, premiums):
    """Sum over to-be-predicted cells of ``premium_i * exp(x beta + b_c)``.

    ``b`` has one entry per company and ``premiums`` is ``(C, I)``; returns
    one reserve per company.
    """
    premiums = np.atleast_2d(np.asarray(premiums, dtype=float))
    size = premiums.shape[1]
    X, rows = _lower_layout(size)
    cell = np.exp(X @ np.asarray(beta, dtype=float))
    return np.exp(np.asarray(b, dtype=float)) * (premiums[:, rows] @ cell)
