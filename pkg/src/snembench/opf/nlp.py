"""Primal-dual interior point method for smooth nonlinear programs.

Solves ``min f(x)  s.t.  g(x) = 0,  h(x) <= 0,  xmin <= x <= xmax`` using a
log-barrier Newton iteration on the perturbed KKT system with inequality
slacks ``z > 0``. Variable bounds are folded into ``h`` (equal bounds become
equalities).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

STEP_TO_BOUNDARY = 0.995
CENTERING = 0.1

ObjFn = Callable[[np.ndarray], tuple[float, np.ndarray]]
# returns h, g, dh (nh x n), dg (ng x n)
ConsFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, sp.spmatrix, sp.spmatrix]]
# Hessian of the Lagrangian given (x, lam_eq, mu_ineq)
HessFn = Callable[[np.ndarray, np.ndarray, np.ndarray], sp.spmatrix]


@dataclass
class NLPResult:
    x: np.ndarray
    f: float
    converged: bool
    iterations: int
    lam: np.ndarray  # multipliers of the user equalities
    mu: np.ndarray  # multipliers of the user inequalities
    feascond: float
    gradcond: float
    compcond: float
    costcond: float
    message: str


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def nlp_ipm(f_fcn: ObjFn, cons_fcn: ConsFn, hess_fcn: HessFn, x0: np.ndarray,
            xmin: np.ndarray, xmax: np.ndarray, tol: float = 1e-6, max_iter: int = 150,
            verbose: bool = False) -> NLPResult:
    n = len(x0)
    x = np.asarray(x0, dtype=float).copy()
    xmin = np.asarray(xmin, dtype=float)
    xmax = np.asarray(xmax, dtype=float)

    # bound rows: equal bounds become equalities, finite ones inequalities
    fixed = np.flatnonzero(np.isfinite(xmin) & (xmin == xmax))
    lo = np.flatnonzero(np.isfinite(xmin) & (xmin != xmax))
    hi = np.flatnonzero(np.isfinite(xmax) & (xmin != xmax))
    Afix = sp.csr_matrix((np.ones(len(fixed)), (np.arange(len(fixed)), fixed)), shape=(len(fixed), n))
    Blo = sp.csr_matrix((-np.ones(len(lo)), (np.arange(len(lo)), lo)), shape=(len(lo), n))
    Bhi = sp.csr_matrix((np.ones(len(hi)), (np.arange(len(hi)), hi)), shape=(len(hi), n))
    Bdh = sp.vstack([Blo, Bhi]).tocsr()

    def evaluate(x):
        f, df = f_fcn(x)
        h_u, g_u, dh_u, dg_u = cons_fcn(x)
        h = np.r_[h_u, xmin[lo] - x[lo], x[hi] - xmax[hi]]
        g = np.r_[g_u, x[fixed] - xmin[fixed]]
        dh = sp.vstack([sp.csr_matrix(dh_u), Bdh]).tocsr()
        dg = sp.vstack([sp.csr_matrix(dg_u), Afix]).tocsr()
        return f, df, h, g, dh, dg, len(h_u), len(g_u)

    f, df, h, g, dh, dg, nh_u, ng_u = evaluate(x)
    neq, niq = len(g), len(h)
    gamma = 1.0
    z = np.ones(niq)
    big = h < -1.0
    z[big] = -h[big]
    mu = np.ones(niq)
    k = gamma / z > 1.0
    mu[k] = gamma / z[k]
    lam = np.zeros(neq)

    def conditions(x, f, f_prev, df, h, g, dh, dg, lam, mu, z):
        Lx = df + dg.T @ lam + dh.T @ mu
        maxh = float(np.max(h, initial=0.0))
        feas = max(_inf_norm(g), maxh) / (1.0 + max(_inf_norm(x), _inf_norm(z)))
        grad = _inf_norm(Lx) / (1.0 + max(_inf_norm(lam), _inf_norm(mu)))
        comp = float(z @ mu) / (1.0 + _inf_norm(x))
        cost = abs(f - f_prev) / (1.0 + abs(f_prev))
        return Lx, feas, grad, comp, cost

    Lx, feas, grad, comp, cost = conditions(x, f, f, df, h, g, dh, dg, lam, mu, z)
    message = "iteration limit"
    converged = False
    it = 0
    if feas < tol and grad < tol and comp < tol:
        converged, message = True, "converged"
    while not converged and it < max_iter:
        it += 1
        Lxx = sp.csr_matrix(hess_fcn(x, lam[:ng_u], mu[:nh_u]))
        dh_zinv = dh.T @ sp.diags(1.0 / z)
        M = Lxx + dh_zinv @ sp.diags(mu) @ dh
        N = Lx + dh_zinv @ (mu * h + gamma)
        K = sp.bmat([[M, dg.T], [dg, None]], format="csc") if neq else sp.csc_matrix(M)
        rhs = np.r_[-N, -g]
        try:
            sol = splu(K).solve(rhs)
        except RuntimeError:
            # regularize a singular KKT matrix once before giving up
            reg = sp.block_diag([1e-8 * sp.eye(n), -1e-8 * sp.eye(neq)]) if neq else 1e-8 * sp.eye(n)
            try:
                sol = splu((K + reg).tocsc()).solve(rhs)
            except RuntimeError:
                message = "singular KKT system"
                break
        if not np.all(np.isfinite(sol)):
            message = "non-finite Newton step"
            break
        dx = sol[:n]
        dlam = sol[n:]
        dz = -h - z - dh @ dx
        dmu = -mu + (gamma - mu * dz) / z
        neg = dz < 0
        ap = min(STEP_TO_BOUNDARY * float(np.min(z[neg] / -dz[neg])), 1.0) if np.any(neg) else 1.0
        neg = dmu < 0
        ad = min(STEP_TO_BOUNDARY * float(np.min(mu[neg] / -dmu[neg])), 1.0) if np.any(neg) else 1.0
        x = x + ap * dx
        z = z + ap * dz
        lam = lam + ad * dlam
        mu = mu + ad * dmu
        if niq:
            gamma = CENTERING * float(z @ mu) / niq
        f_prev = f
        f, df, h, g, dh, dg, _, _ = evaluate(x)
        Lx, feas, grad, comp, cost = conditions(x, f, f_prev, df, h, g, dh, dg, lam, mu, z)
        if verbose:
            print(f"{it:4d} f={f:.8g} feas={feas:.2e} grad={grad:.2e} comp={comp:.2e} "
                  f"cost={cost:.2e} ap={ap:.3f} ad={ad:.3f}")
        if not np.all(np.isfinite(x)) or ap < 1e-8 or ad < 1e-8 or not (1e-300 < gamma < 1e300):
            message = "numerically failed"
            break
        if feas < tol and grad < tol and comp < tol and cost < tol:
            converged, message = True, "converged"

    return NLPResult(x=x, f=float(f), converged=converged, iterations=it, lam=lam[:ng_u],
                     mu=mu[:nh_u], feascond=feas, gradcond=grad, compcond=comp, costcond=cost,
                     message=message)
