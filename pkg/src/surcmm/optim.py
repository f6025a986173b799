"""Proximal Newton minimiser for smooth objectives plus a weighted L1 term.

Minimises ``F(p) = f(p) + sum(lam * |p|)`` subject to box bounds.  Each
iteration solves the L1-regularised quadratic model by coordinate descent
(soft-thresholding per coordinate) and backtracks along the resulting
direction.  With ``lam == 0`` this is a damped Newton method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernels import coordinate_descent

log = logging.getLogger(__name__)


@dataclass
class ProxNewtonResult:
    x: np.ndarray
    fun: float
    smooth: float
    grad: np.ndarray
    hess: np.ndarray
    n_iter: int
    converged: bool
    step_norm: float


def _positive_definite(H, floor):
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    top = max(float(np.abs(w).max()), 1.0)
    w = np.maximum(np.abs(w), floor * top)
    return (V * w) @ V.T


def prox_newton(
    fun,
    x0,
    lam=None,
    lower=None,
    upper=None,
    tol=1e-9,
    max_iter=200,
    cd_sweeps=2000,
    eig_floor=1e-10,
):
    """Minimise ``fun(x)[0] + sum(lam*|x|)`` within ``[lower, upper]``.

    Parameters
    ----------
    fun : callable
        ``fun(x, order)`` returns ``f`` when ``order == 0`` and
        ``(f, grad, hess)`` when ``order == 2``.  ``f`` may be ``inf``
        outside the domain; the line search then shrinks the step.
    x0 : array_like
        Starting point; clipped into the bounds.
    lam : array_like, optional
        Non-negative per-coordinate L1 weights (default all zero).
    tol : float
        Convergence when the accepted step has max-norm below ``tol`` or
        the predicted decrease is below ``tol * (1 + |F|)``.

    Returns
    -------
    ProxNewtonResult
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lam = np.zeros(n) if lam is None else np.asarray(lam, dtype=float)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)

    def penalty(z):
        return float(np.sum(lam * np.abs(z)))

    f, g, H = fun(x, 2)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    F = f + penalty(x)
    step_norm = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Hp = _positive_definite(H, eig_floor)
        d = coordinate_descent(Hp, g, x, lam, lower, upper, cd_sweeps, 1e-14)
        step_norm = float(np.max(np.abs(d))) if n else 0.0
        pen_x = penalty(x)
        delta = float(g @ d) + penalty(x + d) - pen_x
        if step_norm <= tol or delta > -tol * 1e-3 * (1.0 + abs(F)):
            converged = True
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            x_new = np.clip(x + t * d, lower, upper)
            f_new = fun(x_new, 0)
            F_new = f_new + penalty(x_new)
            if np.isfinite(F_new) and F_new <= F + 1e-4 * t * delta:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no descent along the model direction: already at numerical optimum
            converged = step_norm <= 1e3 * tol
            break
        x = x_new
        f, g, H = fun(x, 2)
        F_prev, F = F, f + penalty(x)
        step_norm = t * step_norm
        if step_norm <= tol or abs(F_prev - F) <= 1e-15 * (1.0 + abs(F)):
            converged = True
            break
    return ProxNewtonResult(x, F, f, g, H, it, converged, step_norm)
