"""Hot numeric kernels with interchangeable numba / numpy implementations.

Every public kernel has a ``*_nb`` loop version (compiled with numba when it
is enabled) and a ``*_np`` vectorised version.  The name without suffix is
bound to the active backend, see :mod:`surcmm._backend`.

Random-effect integrand
-----------------------
For one company the integrand of the marginal likelihood collapses, for both
supported families, to ``exp(h(b))`` with

    h(b) = c1*b + c2*exp(-b) + q*b**2,   c2 <= 0, q < 0

plus a company constant handled by the caller.  ``h`` is strictly concave,
and ``h'`` is convex and decreasing, so Newton iterations started to the
left of the root increase monotonically to the mode.
"""

import math

import numpy as np

from ._backend import njit, pick

SQRT2 = math.sqrt(2.0)

OK = 0
MODE_NOT_CONVERGED = 1
NON_FINITE = 2

_MODE_MAX_ITER = 200
_MODE_TOL = 1e-13


def gauss_hermite(n_nodes):
    """Physicists' Gauss-Hermite rule; returns nodes and ``log(w) + x**2``."""
    x, w = np.polynomial.hermite.hermgauss(int(n_nodes))
    return x, np.log(w) + x * x


# ---------------------------------------------------------------------------
# company quadrature
# ---------------------------------------------------------------------------


@njit
def _mode_scalar(c1, c2, q):
    if c2 == 0.0:
        return -c1 / (2.0 * q), True
    if c1 - c2 >= 0.0:
        b = 0.0
    else:
        # h'(0) < 0 forces c1 < c2 < 0; this start has h' = 2*q*b > 0
        b = math.log(c2 / c1)
    for _ in range(_MODE_MAX_ITER):
        e = math.exp(-b)
        step = (c1 - c2 * e + 2.0 * q * b) / (c2 * e + 2.0 * q)
        b -= step
        if abs(step) <= _MODE_TOL * (1.0 + abs(b)):
            return b, True
    return b, False


@njit
def company_quadrature_nb(c1, c2, q, nodes, logw):
    n_comp = c1.shape[0]
    n_nodes = nodes.shape[0]
    logint = np.empty(n_comp)
    mode = np.empty(n_comp)
    mom = np.empty((n_comp, 3))
    cov = np.zeros((n_comp, 3, 3))
    status = np.zeros(n_comp, dtype=np.int64)
    lw = np.empty(n_nodes)
    phi = np.empty((n_nodes, 3))
    for c in range(n_comp):
        b0, ok = _mode_scalar(c1[c], c2[c], q[c])
        if not ok:
            status[c] = MODE_NOT_CONVERGED
        e0 = math.exp(-b0)
        curv = -(c2[c] * e0 + 2.0 * q[c])
        s = 1.0 / math.sqrt(curv)
        h0 = c1[c] * b0 + c2[c] * e0 + q[c] * b0 * b0
        top = -np.inf
        for k in range(n_nodes):
            bk = b0 + SQRT2 * s * nodes[k]
            ek = math.exp(-bk)
            dh = c1[c] * (bk - b0) + c2[c] * (ek - e0) + q[c] * (bk * bk - b0 * b0)
            lw[k] = logw[k] + dh
            phi[k, 0] = ek
            phi[k, 1] = bk
            phi[k, 2] = bk * bk
            if lw[k] > top:
                top = lw[k]
        tot = 0.0
        for k in range(n_nodes):
            lw[k] = math.exp(lw[k] - top)
            tot += lw[k]
        logint[c] = h0 + math.log(SQRT2 * s) + top + math.log(tot)
        mode[c] = b0
        for a in range(3):
            acc = 0.0
            for k in range(n_nodes):
                acc += lw[k] * phi[k, a]
            mom[c, a] = acc / tot
        for a in range(3):
            for d in range(a, 3):
                acc = 0.0
                for k in range(n_nodes):
                    acc += lw[k] * (phi[k, a] - mom[c, a]) * (phi[k, d] - mom[c, d])
                cov[c, a, d] = acc / tot
                cov[c, d, a] = cov[c, a, d]
        if not math.isfinite(logint[c]) and status[c] == OK:
            status[c] = NON_FINITE
    return logint, mode, mom, cov, status


def company_quadrature_np(c1, c2, q, nodes, logw):
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    q = np.asarray(q, dtype=float)
    status = np.zeros(c1.shape[0], dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        closed = c2 == 0.0
        b = np.where(closed, -c1 / (2.0 * q), 0.0)
        left = ~closed & (c1 - c2 < 0.0)
        b[left] = np.log(c2[left] / c1[left])
        active = ~closed
        for _ in range(_MODE_MAX_ITER):
            if not active.any():
                break
            ba = b[active]
            e = np.exp(-ba)
            step = (c1[active] - c2[active] * e + 2.0 * q[active] * ba) / (
                c2[active] * e + 2.0 * q[active]
            )
            ba = ba - step
            b[active] = ba
            done = np.abs(step) <= _MODE_TOL * (1.0 + np.abs(ba))
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        status[active] = MODE_NOT_CONVERGED

        e0 = np.exp(-b)
        s = 1.0 / np.sqrt(-(c2 * e0 + 2.0 * q))
        h0 = c1 * b + c2 * e0 + q * b * b
        bk = b[:, None] + SQRT2 * s[:, None] * nodes[None, :]
        ek = np.exp(-bk)
        dh = (
            c1[:, None] * (bk - b[:, None])
            + c2[:, None] * (ek - e0[:, None])
            + q[:, None] * (bk * bk - (b * b)[:, None])
        )
        lw = logw[None, :] + dh
        top = lw.max(axis=1)
        wts = np.exp(lw - top[:, None])
        tot = wts.sum(axis=1)
        logint = h0 + np.log(SQRT2 * s) + top + np.log(tot)
        p = wts / tot[:, None]
        phi = np.stack([ek, bk, bk * bk], axis=2)
        mom = np.einsum("ck,cka->ca", p, phi)
        centred = phi - mom[:, None, :]
        cov = np.einsum("ck,cka,ckd->cad", p, centred, centred)
    status[(status == OK) & ~np.isfinite(logint)] = NON_FINITE
    return logint, b, mom, cov, status


company_quadrature = pick(company_quadrature_nb, company_quadrature_np)


# ---------------------------------------------------------------------------
# proximal Newton subproblem
# ---------------------------------------------------------------------------


@njit
def coordinate_descent_nb(H, g, p, lam, lo, hi, max_sweeps, tol):
    """Minimise ``g.d + d.H.d/2 + sum(lam*|p+d|)`` subject to ``lo <= p+d <= hi``."""
    n = g.shape[0]
    d = np.zeros(n)
    Hd = np.zeros(n)
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(n):
            a = H[j, j]
            lin = g[j] + Hd[j] - a * d[j]
            z = p[j] - lin / a
            if lam[j] > 0.0:
                thr = lam[j] / a
                if z > thr:
                    z -= thr
                elif z < -thr:
                    z += thr
                else:
                    z = 0.0
            if z < lo[j]:
                z = lo[j]
            elif z > hi[j]:
                z = hi[j]
            delta = (z - p[j]) - d[j]
            if delta != 0.0:
                for i in range(n):
                    Hd[i] += H[i, j] * delta
                d[j] += delta
                if abs(delta) > biggest:
                    biggest = abs(delta)
        if biggest <= tol:
            break
    return d


def coordinate_descent_np(H, g, p, lam, lo, hi, max_sweeps, tol):
    # coordinate descent is inherently sequential; only the column update
    # is vectorised here
    n = g.shape[0]
    d = np.zeros(n)
    Hd = np.zeros(n)
    diag = np.diag(H).copy()
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(n):
            a = diag[j]
            z = p[j] - (g[j] + Hd[j] - a * d[j]) / a
            if lam[j] > 0.0:
                z = math.copysign(max(abs(z) - lam[j] / a, 0.0), z)
            z = min(max(z, lo[j]), hi[j])
            delta = (z - p[j]) - d[j]
            if delta != 0.0:
                Hd += H[:, j] * delta
                d[j] += delta
                biggest = max(biggest, abs(delta))
        if biggest <= tol:
            break
    return d


coordinate_descent = pick(coordinate_descent_nb, coordinate_descent_np)


# ---------------------------------------------------------------------------
# ranks and empirical quantiles (row-wise, one row per company)
# ---------------------------------------------------------------------------


@njit
def row_ranks_nb(values):
    n_rows, n = values.shape
    out = np.empty((n_rows, n))
    for r in range(n_rows):
        srt = np.sort(values[r])
        for k in range(n):
            out[r, k] = np.searchsorted(srt, values[r, k], side="right") / (n + 1.0)
    return out


def row_ranks_np(values):
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    counts = (values[:, None, :] <= values[:, :, None]).sum(axis=2)
    return counts / (n + 1.0)


row_ranks = pick(row_ranks_nb, row_ranks_np)


@njit
def row_quantiles_nb(sorted_values, u):
    n_rows, n = sorted_values.shape
    m = u.shape[1]
    out = np.empty((n_rows, m))
    for r in range(n_rows):
        for k in range(m):
            idx = int(math.ceil(u[r, k] * n)) - 1
            if idx < 0:
                idx = 0
            elif idx > n - 1:
                idx = n - 1
            out[r, k] = sorted_values[r, idx]
    return out


def row_quantiles_np(sorted_values, u):
    n = sorted_values.shape[1]
    idx = np.clip(np.ceil(u * n).astype(np.int64) - 1, 0, n - 1)
    return np.take_along_axis(sorted_values, idx, axis=1)


row_quantiles = pick(row_quantiles_nb, row_quantiles_np)
