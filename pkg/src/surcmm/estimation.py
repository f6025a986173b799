"""Two-stage estimation of the SUR copula mixed model and its sparse variant.

Stage one fits the marginal mixed models of both lines of business; stage
two fits the copula to within-company ranks of the pseudo-residuals.  The
copula term depends on the marginal parameters only through those ranks, so
it is piecewise constant in them: the marginal update maximises the marginal
likelihoods (plus the L1 penalty in the sparse model) and the copula update
maximises the rank pseudo-likelihood, repeated until the stacked parameter
vector stops moving.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .copulas import (
    CopulaFamily,
    CopulaSpec,
    DependenceParams,
    ThetaScope,
    copula_pseudo_loglik,
    fit_copula,
)
from .errors import ConvergenceError, NumericalError, ValidationError
from .marginals import (
    CompanyEffects,
    Family,
    LobData,
    MarginalParams,
    MarginalSpec,
    marginal_terms,
    residual_matrix,
    residual_ranks,
)
from .optim import prox_newton

log = logging.getLogger(__name__)

LOG_SIGMA_BOUNDS = (math.log(1e-3), math.log(1e4))
LOG_TAU_BOUNDS = (math.log(1e-5), math.log(10.0))
TAU_FLOOR = 0.01


class PenaltyScope(str, enum.Enum):
    ACCIDENT_ONLY = "accident"
    DEVELOPMENT_ONLY = "development"
    BOTH = "both"
    NONE = "none"


class ModelKind(str, enum.Enum):
    SUR_COPULA = "sur-copula"
    SURCMM = "surcmm"
    SSURCMM = "ssurcmm"


def penalty_mask(scope, size):
    """Boolean mask over ``beta`` of the coefficients the L1 term acts on."""
    scope = PenaltyScope(scope)
    mask = np.zeros(2 * size - 1, dtype=bool)
    if scope in (PenaltyScope.ACCIDENT_ONLY, PenaltyScope.BOTH):
        mask[1:size] = True
    if scope in (PenaltyScope.DEVELOPMENT_ONLY, PenaltyScope.BOTH):
        mask[size:] = True
    return mask


@dataclass(frozen=True)
class PenaltyConfig:
    """L1 weights per LOB and the candidate grid.

    ``grid=None`` requests the default grid: ``grid_points`` values per LOB,
    log-spaced over ``grid_span`` times the largest absolute score of the
    penalized coefficients at the null model.
    """

    lambda_1: float = 0.0
    lambda_2: float = 0.0
    scope: PenaltyScope = PenaltyScope.BOTH
    grid: tuple = None
    grid_points: int = 7
    grid_span: tuple = (1e-3, 1e1)
    criterion: str = "aic"

    def __post_init__(self):
        object.__setattr__(self, "scope", PenaltyScope(self.scope))
        if self.lambda_1 < 0 or self.lambda_2 < 0:
            raise ValidationError("penalty weights must be nonnegative")
        if self.criterion not in ("aic", "bic"):
            raise ValidationError(f"criterion must be 'aic' or 'bic', got {self.criterion!r}")
        if self.grid is not None:
            grid = tuple((float(a), float(b)) for a, b in self.grid)
            if any(a < 0 or b < 0 for a, b in grid):
                raise ValidationError("grid penalties must be nonnegative")
            object.__setattr__(self, "grid", grid)
        if self.scope is PenaltyScope.NONE:
            if self.lambda_1 or self.lambda_2 or (self.grid and any(a or b for a, b in self.grid)):
                raise ValidationError("penalty scope 'none' admits only zero penalties")
            object.__setattr__(self, "grid", ())

    def lam_vector(self, lob, size):
        lam = self.lambda_1 if lob == 1 else self.lambda_2
        return np.where(penalty_mask(self.scope, size), lam, 0.0)

    def penalty_value(self, beta_1, beta_2):
        size = (len(beta_1) + 1) // 2
        m = penalty_mask(self.scope, size)
        return float(
            self.lambda_1 * np.abs(np.asarray(beta_1)[m]).sum()
            + self.lambda_2 * np.abs(np.asarray(beta_2)[m]).sum()
        )


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointData:
    """Both LOBs of a portfolio in stacked array form (companies in order)."""

    lob_1: LobData
    lob_2: LobData
    premiums_1: np.ndarray
    premiums_2: np.ndarray

    @classmethod
    def from_portfolio(cls, portfolio):
        ids = portfolio.company_ids
        return cls(
            LobData.from_triangles(portfolio.standardized(1), ids),
            LobData.from_triangles(portfolio.standardized(2), ids),
            np.stack([c.triangle_1.premiums for c in portfolio.companies]),
            np.stack([c.triangle_2.premiums for c in portfolio.companies]),
        )

    @property
    def company_ids(self):
        return self.lob_1.company_ids

    @property
    def size(self):
        return self.lob_1.size

    @property
    def n_companies(self):
        return self.lob_1.n_companies

    @property
    def n_obs(self):
        return self.lob_1.y.size + self.lob_2.y.size

    def lob(self, k):
        return self.lob_1 if k == 1 else self.lob_2

    def with_ratios(self, y_1, y_2):
        return JointData(
            LobData(y_1, self.size, self.company_ids),
            LobData(y_2, self.size, self.company_ids),
            self.premiums_1,
            self.premiums_2,
        )


def _as_joint(data):
    return data if isinstance(data, JointData) else JointData.from_portfolio(data)


# ---------------------------------------------------------------------------
# single-LOB fits
# ---------------------------------------------------------------------------


@dataclass
class MarginalFit:
    params: MarginalParams
    loglik: float
    modes: np.ndarray
    converged: bool
    n_iter: int


def _unpack(p, base, free, random_effects):
    full = base.copy()
    full[free] = p
    P = base.size - 1 - int(random_effects)
    beta = full[:P]
    sigma = math.exp(full[P])
    tau = math.exp(full[P + 1]) if random_effects else 0.0
    return beta, sigma, tau


def fit_marginal(
    spec,
    data,
    start,
    lam=None,
    free=None,
    random_effects=True,
    tol=1e-10,
    max_iter=200,
    stage="marginal",
):
    """Maximise one LOB's marginal log-likelihood minus ``sum(lam*|beta|)``.

    Parameters
    ----------
    spec : MarginalSpec
    data : LobData
    start : MarginalParams
        Starting point; also supplies the values of parameters held fixed.
    lam : array_like, optional
        L1 weight per ``beta`` coordinate.
    free : array_like of bool, optional
        Mask over ``(beta, log sigma[, log tau])`` of the parameters to
        optimise; default all.
    random_effects : bool
        ``False`` pins ``tau`` to 0 (no log-tau coordinate).
    """
    P = start.beta.size
    m = P + 1 + int(random_effects)
    tau0 = max(start.tau, math.exp(LOG_TAU_BOUNDS[0])) if random_effects else 0.0
    base = np.concatenate([start.beta, [math.log(start.sigma)], [math.log(tau0)] if random_effects else []])
    free = np.ones(m, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    lam_full = np.zeros(m)
    if lam is not None:
        lam_full[:P] = lam
    lower = np.full(m, -np.inf)
    upper = np.full(m, np.inf)
    lower[P], upper[P] = LOG_SIGMA_BOUNDS
    if random_effects:
        lower[P + 1], upper[P + 1] = LOG_TAU_BOUNDS
    base[P:] = np.clip(base[P:], lower[P:], upper[P:])

    def fun(p, order):
        beta, sigma, tau = _unpack(p, base, free, random_effects)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            try:
                t = marginal_terms(spec, data, beta, sigma, tau, order=order, free_tau=random_effects)
            except NumericalError:
                if order == 0:
                    return math.inf
                raise
        if order == 0:
            return -t.value
        return -t.value, -t.grad[free], -t.hess[np.ix_(free, free)]

    try:
        res = prox_newton(
            fun, base[free], lam_full[free], lower[free], upper[free], tol=tol, max_iter=max_iter
        )
    except FloatingPointError as exc:
        raise NumericalError(str(exc), stage=stage) from exc
    if not res.converged:
        beta, sigma, tau = _unpack(res.x, base, free, random_effects)
        raise ConvergenceError(
            "marginal optimiser did not converge",
            last_iterate=MarginalParams(beta, sigma, tau),
            change_norm=res.step_norm,
            stage=stage,
        )
    beta, sigma, tau = _unpack(res.x, base, free, random_effects)
    terms = marginal_terms(spec, data, beta, sigma, tau)
    return MarginalFit(MarginalParams(beta, sigma, tau), terms.value, terms.mode, True, res.n_iter)


def initial_marginal(spec, data, random_effects=True):
    """Pooled fixed-effects ML for ``beta``, moment ``sigma`` and ``tau``.

    ``beta`` maximises the likelihood with ``tau = 0`` (the maximiser does
    not depend on ``sigma`` for either family).  ``sigma`` comes from the
    Pearson (gamma) or log-scale (lognormal) residual moments, and
    ``tau`` is the standard deviation of per-company mean log-residuals,
    floored at 0.01.
    """
    size = data.size
    P = 2 * size - 1
    beta0 = np.zeros(P)
    if spec.family is Family.GAMMA:
        beta0[0] = math.log(float(np.mean(data.y)))
    else:
        beta0[0] = float(np.mean(data.log_y))
    free = np.zeros(P + 1, dtype=bool)
    free[:P] = True
    fit = fit_marginal(
        spec, data, MarginalParams(beta0, 1.0, 0.0), free=free, random_effects=False, stage="initial"
    )
    beta = fit.params.beta
    eta = data.design @ beta
    dof = max(data.y.size - P, 1)
    log_resid = data.log_y - eta
    if spec.family is Family.GAMMA:
        mu = np.exp(eta)
        sigma = dof / float(np.sum(((data.y - mu) / mu) ** 2))
    else:
        sigma = math.sqrt(float(np.sum(log_resid**2)) / dof)
    sigma = float(np.clip(sigma, math.exp(LOG_SIGMA_BOUNDS[0]), math.exp(LOG_SIGMA_BOUNDS[1])))
    tau = 0.0
    if random_effects:
        means = log_resid.mean(axis=1)
        tau = float(np.std(means, ddof=1)) if means.size > 1 else 0.0
        tau = max(tau, TAU_FLOOR)
    return MarginalParams(beta, sigma, tau)


# ---------------------------------------------------------------------------
# ranks and likelihood assembly
# ---------------------------------------------------------------------------


def lob_ranks(spec, data, params, modes=None):
    """Within-company residual ranks at ``params`` (``b`` at posterior modes)."""
    if modes is None:
        if params.tau > 0:
            modes = marginal_terms(spec, data, params.beta, params.sigma, params.tau).mode
        else:
            modes = np.zeros(data.n_companies)
    res = residual_matrix(spec, params.beta, params.sigma, modes, data.y)
    return residual_ranks(res)


def _pairs(r1, r2):
    return np.stack([r1, r2], axis=2)


def n_dependence_params(copula_spec, n_companies):
    if copula_spec.family is CopulaFamily.INDEPENDENCE:
        return 0
    return n_companies if copula_spec.scope is ThetaScope.PER_COMPANY else 1


def degrees_of_freedom(beta_1, beta_2, n_tau, n_theta):
    """Nonzero coefficients, two dispersions, free variances and copula parameters."""
    return int(np.count_nonzero(beta_1) + np.count_nonzero(beta_2)) + 2 + n_tau + n_theta


def information_criterion(loglik, df, criterion="aic", n_obs=None):
    if criterion == "aic":
        return -2.0 * loglik + 2.0 * df
    if n_obs is None:
        raise ValidationError("BIC needs the number of observations")
    return -2.0 * loglik + math.log(n_obs) * df


def penalized_marginal_objective(
    params_1,
    params_2,
    theta,
    penalty,
    data,
    spec_1=MarginalSpec(),
    spec_2=MarginalSpec(),
    copula_spec=CopulaSpec(),
):
    """Negative joint log-likelihood plus the L1 penalty.

    The copula term is evaluated at the residual ranks implied by the
    marginal parameters; ``theta`` is a float or :class:`DependenceParams`.
    """
    data = _as_joint(data)
    L1 = marginal_terms(spec_1, data.lob_1, params_1.beta, params_1.sigma, params_1.tau)
    L2 = marginal_terms(spec_2, data.lob_2, params_2.beta, params_2.sigma, params_2.tau)
    r1 = lob_ranks(spec_1, data.lob_1, params_1, L1.mode)
    r2 = lob_ranks(spec_2, data.lob_2, params_2, L2.mode)
    Lc = copula_pseudo_loglik(copula_spec, theta, _pairs(r1, r2), data.company_ids)
    return -L1.value - L2.value - Lc + penalty.penalty_value(params_1.beta, params_2.beta)


# ---------------------------------------------------------------------------
# fit container
# ---------------------------------------------------------------------------


@dataclass
class FitDiagnostics:
    iterations: int = 0
    change_norm: float = float("nan")
    converged: bool = False
    tolerance: float = 1e-4
    loglik_1: float = float("nan")
    loglik_2: float = float("nan")
    loglik_copula: float = float("nan")
    df: int = 0
    aic: float = float("nan")
    bic: float = float("nan")
    criterion_table: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    threshold_table: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def loglik(self):
        return self.loglik_1 + self.loglik_2 + self.loglik_copula


@dataclass
class JointModelFit:
    model: ModelKind
    spec_1: MarginalSpec
    spec_2: MarginalSpec
    copula_spec: CopulaSpec
    params_1: MarginalParams
    params_2: MarginalParams
    effects_1: CompanyEffects
    effects_2: CompanyEffects
    dependence: DependenceParams
    penalty: PenaltyConfig
    thresholded_beta_1: np.ndarray
    thresholded_beta_2: np.ndarray
    company_ids: tuple
    size: int
    random_effects: bool = True
    thresholds: tuple = (0.0, 0.0)
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)

    def params(self, lob):
        return self.params_1 if lob == 1 else self.params_2

    def spec(self, lob):
        return self.spec_1 if lob == 1 else self.spec_2

    def effects(self, lob):
        return self.effects_1 if lob == 1 else self.effects_2

    def thresholded_beta(self, lob):
        return self.thresholded_beta_1 if lob == 1 else self.thresholded_beta_2

    def lambda_for(self, lob):
        return self.penalty.lambda_1 if lob == 1 else self.penalty.lambda_2

    @property
    def sparse(self):
        return self.model is ModelKind.SSURCMM

    def reserve_beta(self, lob):
        """Coefficients used for point prediction (thresholded when sparse)."""
        return self.thresholded_beta(lob) if self.sparse else self.params(lob).beta


def aic(fit):
    """``-2 log L + 2 df`` of a fitted model."""
    d = fit.diagnostics
    return information_criterion(d.loglik, d.df, "aic")


# ---------------------------------------------------------------------------
# outer iterations
# ---------------------------------------------------------------------------


@dataclass
class _LobState:
    params: MarginalParams
    loglik: float
    modes: np.ndarray


def _state(spec, data, params):
    t = marginal_terms(spec, data, params.beta, params.sigma, params.tau)
    return _LobState(params, t.value, t.mode)


def _stack(theta_vec, states, lambdas=()):
    parts = [np.asarray(theta_vec, dtype=float), np.asarray(lambdas, dtype=float)]
    for s in states:
        parts.append(s.params.beta)
        parts.append([s.params.sigma, s.params.tau])
    return np.concatenate(parts)


def _copula_step(copula_spec, data, specs, states):
    r1 = lob_ranks(specs[0], data.lob_1, states[0].params, states[0].modes)
    r2 = lob_ranks(specs[1], data.lob_2, states[1].params, states[1].modes)
    dep = fit_copula(copula_spec, _pairs(r1, r2), data.company_ids)
    return dep, (r1, r2)


def _effects(data, state):
    return CompanyEffects(dict(zip(data.company_ids, (float(b) for b in state.modes))))


def _marginal_step(specs, data, states, random_effects, lams=(None, None)):
    out = []
    for k, (spec, state, lam) in enumerate(zip(specs, states, lams), start=1):
        fit = fit_marginal(
            spec, data.lob(k), state.params, lam=lam, random_effects=random_effects, stage=f"marginal LOB{k}"
        )
        out.append(_LobState(fit.params, fit.loglik, fit.modes))
    return out


def _finish(
    model,
    data,
    specs,
    copula_spec,
    states,
    dep,
    penalty,
    random_effects,
    diag,
):
    r1 = lob_ranks(specs[0], data.lob_1, states[0].params, states[0].modes)
    r2 = lob_ranks(specs[1], data.lob_2, states[1].params, states[1].modes)
    diag.loglik_1 = states[0].loglik
    diag.loglik_2 = states[1].loglik
    diag.loglik_copula = copula_pseudo_loglik(copula_spec, dep, _pairs(r1, r2), data.company_ids)
    n_tau = 2 if random_effects else 0
    diag.df = degrees_of_freedom(
        states[0].params.beta, states[1].params.beta, n_tau, n_dependence_params(copula_spec, data.n_companies)
    )
    diag.aic = information_criterion(diag.loglik, diag.df, "aic")
    diag.bic = information_criterion(diag.loglik, diag.df, "bic", data.n_obs)
    return JointModelFit(
        model=model,
        spec_1=specs[0],
        spec_2=specs[1],
        copula_spec=copula_spec,
        params_1=states[0].params,
        params_2=states[1].params,
        effects_1=_effects(data, states[0]),
        effects_2=_effects(data, states[1]),
        dependence=dep,
        penalty=penalty,
        thresholded_beta_1=np.array(states[0].params.beta),
        thresholded_beta_2=np.array(states[1].params.beta),
        company_ids=tuple(data.company_ids),
        size=data.size,
        random_effects=random_effects,
        diagnostics=diag,
    )


def _objective(specs, data, states, dep, copula_spec, penalty):
    r1 = lob_ranks(specs[0], data.lob_1, states[0].params, states[0].modes)
    r2 = lob_ranks(specs[1], data.lob_2, states[1].params, states[1].modes)
    Lc = copula_pseudo_loglik(copula_spec, dep, _pairs(r1, r2), data.company_ids)
    return -states[0].loglik - states[1].loglik - Lc + penalty.penalty_value(
        states[0].params.beta, states[1].params.beta
    )


def _initial_states(specs, data, random_effects, start):
    if start is not None:
        return [_state(specs[k], data.lob(k + 1), start[k]) for k in range(2)]
    return [_state(specs[k], data.lob(k + 1), initial_marginal(specs[k], data.lob(k + 1), random_effects)) for k in range(2)]


def fit_surcmm(
    portfolio,
    spec_1=MarginalSpec(),
    spec_2=MarginalSpec(),
    copula_spec=CopulaSpec(),
    tolerance=1e-4,
    max_outer=50,
    random_effects=True,
    start=None,
):
    """Unpenalised two-stage fit.

    Parameters
    ----------
    portfolio : Portfolio or JointData
    spec_1, spec_2 : MarginalSpec
    copula_spec : CopulaSpec
    tolerance : float
        Stop when the L2 change of the stacked ``(theta, beta, sigma, tau)``
        vector between outer iterations is at most this.
    max_outer : int
    random_effects : bool
        ``False`` fits pooled fixed effects with ``tau = 0`` (the plain SUR
        copula model).
    start : pair of MarginalParams, optional
        Warm start replacing the pooled-GLM initialiser.

    Returns
    -------
    JointModelFit
    """
    if not tolerance > 0:
        raise ValidationError("tolerance must be positive")
    data = _as_joint(portfolio)
    specs = (spec_1, spec_2)
    states = _initial_states(specs, data, random_effects, start)
    dep = None
    w_prev = None
    diag = FitDiagnostics(tolerance=tolerance)
    for k in range(1, max_outer + 1):
        dep, _ = _copula_step(copula_spec, data, specs, states)
        states = _marginal_step(specs, data, states, random_effects)
        diag.objective_history.append(_objective(specs, data, states, dep, copula_spec, PenaltyConfig(scope="none")))
        w = _stack(dep.vector(), states)
        change = math.inf if w_prev is None else float(np.linalg.norm(w - w_prev))
        log.info("outer %d: change %.3g theta %s", k, change, np.round(dep.vector()[:3], 4))
        diag.iterations, diag.change_norm = k, change
        w_prev = w
        if change <= tolerance:
            diag.converged = True
            break
    model = ModelKind.SURCMM if random_effects else ModelKind.SUR_COPULA
    fit = _finish(model, data, specs, copula_spec, states, dep, PenaltyConfig(scope="none"), random_effects, diag)
    if not diag.converged:
        raise ConvergenceError(
            f"outer iteration did not converge in {max_outer} steps",
            last_iterate=fit,
            change_norm=diag.change_norm,
            stage="outer",
        )
    return fit


def _null_scores(spec, data, state, mask, random_effects):
    """Largest absolute score of penalized coefficients with them fixed at 0."""
    if not mask.any():
        return 0.0
    beta = np.where(mask, 0.0, state.params.beta)
    P = beta.size
    m = P + 1 + int(random_effects)
    free = np.zeros(m, dtype=bool)
    free[:P] = ~mask
    fit = fit_marginal(spec, data, state.params.replace(beta=beta), free=free, random_effects=random_effects, stage="null model")
    p = fit.params
    t = marginal_terms(spec, data, p.beta, p.sigma, p.tau, order=1, free_tau=random_effects)
    return float(np.max(np.abs(t.grad[:P][mask])))


def default_grid(penalty, lam_max_1, lam_max_2):
    lo, hi = penalty.grid_span
    scale = np.logspace(math.log10(lo), math.log10(hi), int(penalty.grid_points))
    g1 = lam_max_1 * scale
    g2 = lam_max_2 * scale
    return tuple((float(a), float(b)) for a in g1 for b in g2)


def _select_penalty(specs, data, states, dep, copula_spec, penalty, grid, random_effects, criterion):
    """Beta-only fits per candidate weight and criterion over grid pairs."""
    size = data.size
    mask = penalty_mask(penalty.scope, size)
    P = 2 * size - 1
    m = P + 1 + int(random_effects)
    free = np.zeros(m, dtype=bool)
    free[:P] = True
    per_lob = []
    for k in (1, 2):
        cands = sorted({pair[k - 1] for pair in grid})
        fits = {}
        start = states[k - 1].params
        for lam in cands:
            fit = fit_marginal(
                specs[k - 1],
                data.lob(k),
                start,
                lam=np.where(mask, lam, 0.0),
                free=free,
                random_effects=random_effects,
                stage=f"penalty grid LOB{k}",
            )
            ranks = lob_ranks(specs[k - 1], data.lob(k), fit.params, fit.modes)
            fits[lam] = (fit, ranks)
        per_lob.append(fits)
    n_tau = 2 if random_effects else 0
    n_theta = n_dependence_params(copula_spec, data.n_companies)
    table = []
    best = None
    for l1, l2 in grid:
        f1, r1 = per_lob[0][l1]
        f2, r2 = per_lob[1][l2]
        Lc = copula_pseudo_loglik(copula_spec, dep, _pairs(r1, r2), data.company_ids)
        loglik = f1.loglik + f2.loglik + Lc
        df = degrees_of_freedom(f1.params.beta, f2.params.beta, n_tau, n_theta)
        score = information_criterion(loglik, df, criterion, data.n_obs)
        table.append({"lambda_1": l1, "lambda_2": l2, "loglik": loglik, "df": df, criterion: score})
        key = (score, -(l1 + l2))
        if best is None or key < best[0]:
            best = (key, l1, l2)
    _, l1, l2 = best
    sel = [per_lob[0][l1][0], per_lob[1][l2][0]]
    return l1, l2, [_LobState(f.params, f.loglik, f.modes) for f in sel], table


def fit_sparse_surcmm(
    portfolio,
    spec_1=MarginalSpec(),
    spec_2=MarginalSpec(),
    copula_spec=CopulaSpec(),
    penalty=PenaltyConfig(),
    tolerance=1e-4,
    max_outer=50,
    random_effects=True,
    start=None,
    fixed_lambdas=False,
    threshold=True,
    threshold_points=11,
):
    """LASSO-penalised two-stage fit with penalty selection.

    Each outer iteration fits the copula on the current ranks, fits ``beta``
    at fixed ``(sigma, tau)`` for every candidate penalty, selects the pair
    minimising the information criterion, then refits ``(beta, sigma, tau)``
    jointly at the selected pair.  Iteration stops when the stacked
    ``(theta, lambda_1, lambda_2, beta, sigma, tau)`` vector changes by at
    most ``tolerance``.

    With ``fixed_lambdas=True`` the grid search is skipped and
    ``(penalty.lambda_1, penalty.lambda_2)`` are used throughout, which is
    how bootstrap replicates are refitted.
    """
    if not tolerance > 0:
        raise ValidationError("tolerance must be positive")
    data = _as_joint(portfolio)
    specs = (spec_1, spec_2)
    size = data.size
    mask = penalty_mask(penalty.scope, size)
    states = _initial_states(specs, data, random_effects, start)
    criterion = penalty.criterion

    if fixed_lambdas or penalty.scope is PenaltyScope.NONE:
        grid = ((penalty.lambda_1, penalty.lambda_2),) if penalty.scope is not PenaltyScope.NONE else ((0.0, 0.0),)
    elif penalty.grid is None:
        lm1 = _null_scores(specs[0], data.lob_1, states[0], mask, random_effects)
        lm2 = _null_scores(specs[1], data.lob_2, states[1], mask, random_effects)
        grid = default_grid(penalty, lm1, lm2)
    else:
        grid = penalty.grid
    if not grid:
        raise ValidationError("the penalty grid is empty")

    diag = FitDiagnostics(tolerance=tolerance)
    w_prev = None
    dep = None
    sel = grid[0]
    for k in range(1, max_outer + 1):
        dep, _ = _copula_step(copula_spec, data, specs, states)
        if len(grid) > 1:
            l1, l2, states, table = _select_penalty(
                specs, data, states, dep, copula_spec, penalty, grid, random_effects, criterion
            )
            diag.criterion_table = table
        else:
            l1, l2 = grid[0]
        sel = (l1, l2)
        current = replace(penalty, lambda_1=l1, lambda_2=l2)
        lams = (current.lam_vector(1, size), current.lam_vector(2, size))
        states = _marginal_step(specs, data, states, random_effects, lams)
        diag.objective_history.append(_objective(specs, data, states, dep, copula_spec, current))
        w = _stack(dep.vector(), states, sel)
        change = math.inf if w_prev is None else float(np.linalg.norm(w - w_prev))
        log.info("outer %d: change %.3g lambda (%.4g, %.4g)", k, change, l1, l2)
        diag.iterations, diag.change_norm = k, change
        w_prev = w
        if change <= tolerance:
            diag.converged = True
            break
    selected = replace(penalty, lambda_1=sel[0], lambda_2=sel[1], grid=tuple(grid))
    model = ModelKind.SSURCMM
    fit = _finish(model, data, specs, copula_spec, states, dep, selected, random_effects, diag)
    if not diag.converged:
        raise ConvergenceError(
            f"outer iteration did not converge in {max_outer} steps",
            last_iterate=fit,
            change_norm=diag.change_norm,
            stage="outer",
        )
    if threshold:
        b1, b2, thr, table = threshold_coefficients(fit, data, threshold_points)
        fit.thresholded_beta_1, fit.thresholded_beta_2 = b1, b2
        fit.thresholds = thr
        fit.diagnostics.threshold_table = table
    return fit


# ---------------------------------------------------------------------------
# thresholding and family selection
# ---------------------------------------------------------------------------


def _threshold_candidates(beta, mask, n_points):
    pen = np.abs(beta[mask])
    nz = pen[pen > 0]
    if nz.size == 0:
        return np.array([0.0])
    return np.linspace(0.0, 2.0 * float(nz.min()), int(n_points))


def threshold_coefficients(fit, data, n_points=11):
    """Zero small penalized coefficients, choosing the cut-off by AIC.

    For each LOB, candidate thresholds ``t`` span ``[0, 2*m]`` where ``m``
    is the smallest nonzero absolute penalized coefficient.  Penalized
    coefficients with ``|beta| < t`` are set to zero and each pair of
    candidates is scored by AIC with ``sigma``, ``tau`` and ``theta`` held
    at their fitted values (company effects re-predicted, no refit).  Ties
    go to the larger threshold.

    Returns
    -------
    beta_1, beta_2 : ndarray
    thresholds : tuple of float
    table : list of dict
    """
    data = _as_joint(data)
    size = fit.size
    mask = penalty_mask(fit.penalty.scope, size)
    if not mask.any():
        return np.array(fit.params_1.beta), np.array(fit.params_2.beta), (0.0, 0.0), []
    n_tau = 2 if fit.random_effects else 0
    n_theta = n_dependence_params(fit.copula_spec, len(fit.company_ids))
    per_lob = []
    for k in (1, 2):
        params = fit.params(k)
        cands = {}
        for t in _threshold_candidates(params.beta, mask, n_points):
            beta = np.where(mask & (np.abs(params.beta) < t), 0.0, params.beta)
            p = params.replace(beta=beta)
            state = _state(fit.spec(k), data.lob(k), p)
            cands[float(t)] = (beta, state.loglik, lob_ranks(fit.spec(k), data.lob(k), p, state.modes))
        per_lob.append(cands)
    table = []
    best = None
    for t1, (b1, ll1, r1) in per_lob[0].items():
        for t2, (b2, ll2, r2) in per_lob[1].items():
            Lc = copula_pseudo_loglik(fit.copula_spec, fit.dependence, _pairs(r1, r2), data.company_ids)
            df = degrees_of_freedom(b1, b2, n_tau, n_theta)
            score = information_criterion(ll1 + ll2 + Lc, df, "aic")
            table.append({"threshold_1": t1, "threshold_2": t2, "aic": score, "df": df})
            key = (score, -(t1 + t2))
            if best is None or key < best[0]:
                best = (key, t1, t2, b1, b2)
    _, t1, t2, b1, b2 = best
    return np.array(b1), np.array(b2), (t1, t2), table


@dataclass
class FamilySelection:
    spec_1: MarginalSpec
    spec_2: MarginalSpec
    table: list

    def spec(self, lob):
        return self.spec_1 if lob == 1 else self.spec_2


def select_marginal_family(
    portfolio,
    candidates=(MarginalSpec(Family.GAMMA), MarginalSpec(Family.LOGNORMAL)),
    random_effects=True,
):
    """Per-LOB family with the smallest marginal AIC (independence copula).

    Ties resolve to the earlier candidate.
    """
    candidates = tuple(candidates)
    if len(candidates) < 2:
        raise ValidationError("at least two candidate families are required")
    data = _as_joint(portfolio)
    table = []
    chosen = []
    for k in (1, 2):
        best = None
        for spec in candidates:
            lob = data.lob(k)
            start = initial_marginal(spec, lob, random_effects)
            fit = fit_marginal(spec, lob, start, random_effects=random_effects, stage=f"family {spec.family.value} LOB{k}")
            df = fit.params.beta.size + 1 + int(random_effects)
            score = information_criterion(fit.loglik, df, "aic")
            table.append({"lob": k, "family": spec.family.value, "loglik": fit.loglik, "df": df, "aic": score})
            if best is not None and score == best[0]:
                log.info("LOB%d: AIC tie between %s and %s; keeping %s", k, best[1].family.value, spec.family.value, best[1].family.value)
            if best is None or score < best[0]:
                best = (score, spec)
        chosen.append(best[1])
    return FamilySelection(chosen[0], chosen[1], table)


def fit_model(
    kind,
    portfolio,
    spec_1=MarginalSpec(),
    spec_2=MarginalSpec(),
    copula_spec=CopulaSpec(),
    penalty=PenaltyConfig(),
    tolerance=1e-4,
    max_outer=50,
    start=None,
):
    """Fit one of the three model variants by name."""
    kind = ModelKind(kind)
    if kind is ModelKind.SUR_COPULA:
        return fit_surcmm(portfolio, spec_1, spec_2, copula_spec, tolerance, max_outer, random_effects=False, start=start)
    if kind is ModelKind.SURCMM:
        return fit_surcmm(portfolio, spec_1, spec_2, copula_spec, tolerance, max_outer, start=start)
    return fit_sparse_surcmm(portfolio, spec_1, spec_2, copula_spec, penalty, tolerance, max_outer, start=start)
