"""Mehrotra predictor-corrector interior point method for bounded QPs/LPs.

Solves ``min 1/2 x'Qx + c'x  s.t.  A x = b,  lb <= x <= ub`` with ``Q``
diagonal and nonnegative. Bounds may be infinite on either side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

STEP_TO_BOUNDARY = 0.995


@dataclass
class QPResult:
    x: np.ndarray
    y: np.ndarray  # equality multipliers
    zl: np.ndarray
    zu: np.ndarray
    objective: float
    status: str  # "optimal", "infeasible" or "iter_limit"
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(c: np.ndarray, A: sp.spmatrix, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
             q: np.ndarray | None = None, tol: float = 1e-8, max_iter: int = 200,
             obj_scale: float | None = None) -> QPResult:
    """Solve the bounded QP; ``obj_scale`` divides the objective internally."""
    n = len(c)
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
    # work on a unit-scale objective; multipliers are scaled back on return
    if obj_scale is None:
        obj_scale = max(1.0, float(np.max(np.abs(c), initial=0.0)), float(np.max(q, initial=0.0)))
    c = np.asarray(c, dtype=float) / obj_scale
    q = q / obj_scale
    A = sp.csr_matrix(A)
    m = A.shape[0]
    has_l = np.isfinite(lb)
    has_u = np.isfinite(ub)
    if np.any(lb[has_l & has_u] > ub[has_l & has_u]):
        raise ValueError("inconsistent variable bounds")
    L = np.flatnonzero(has_l)
    U = np.flatnonzero(has_u)

    # start strictly inside the bounds
    x = np.zeros(n)
    both = has_l & has_u
    width = np.where(both, ub - lb, 0.0)
    x[both] = lb[both] + 0.5 * width[both]
    only_l = has_l & ~has_u
    only_u = has_u & ~has_l
    x[only_l] = lb[only_l] + 1.0
    x[only_u] = ub[only_u] - 1.0
    # bound multipliers chosen so the initial dual residual vanishes
    g = c + q * x
    zl_full = np.where(has_l, 1.0 + np.maximum(g, 0.0), 0.0)
    zu_full = np.where(has_u, 1.0 + np.maximum(-g, 0.0), 0.0)
    zl = zl_full[L]
    zu = zu_full[U]
    y = np.zeros(m)

    scale_b = 1.0 + np.max(np.abs(b), initial=0.0)
    scale_c = 1.0 + np.max(np.abs(c), initial=0.0)
    ncomp = max(len(L) + len(U), 1)
    reg_p, reg_d = 1e-10, 1e-10
    status = "iter_limit"
    rp_n = rd_n = gap = np.inf
    it = 0
    for it in range(max_iter + 1):
        sl = x[L] - lb[L]
        su = ub[U] - x[U]
        if np.any(sl <= 0) or np.any(su <= 0):
            break  # iterate lost strict interiority, numerically stuck
        rp = A @ x - b
        rd = q * x + c - A.T @ y
        rd[L] -= zl
        rd[U] += zu
        mu = (sl @ zl + su @ zu) / ncomp
        rp_n = np.max(np.abs(rp), initial=0.0) / scale_b
        rd_n = np.max(np.abs(rd), initial=0.0) / scale_c
        gap = mu
        if rp_n < tol and rd_n < tol and gap < tol:
            status = "optimal"
            break
        if it == max_iter:
            break

        d = q.copy()
        d[L] += zl / sl
        d[U] += zu / su
        K = sp.bmat([[sp.diags(d + reg_p), A.T], [A, -reg_d * sp.eye(m)]], format="csc")
        try:
            lu = splu(K)
        except RuntimeError:
            reg_p *= 100
            reg_d *= 100
            continue

        def direction(rcl, rcu):
            r1 = -rd.copy()
            r1[L] -= rcl / sl
            r1[U] += rcu / su
            sol = lu.solve(np.r_[r1, -rp])
            dx = sol[:n]
            dy = -sol[n:]
            dzl = (-rcl - zl * dx[L]) / sl
            dzu = (-rcu + zu * dx[U]) / su
            return dx, dy, dzl, dzu

        # predictor
        dx, dy, dzl, dzu = direction(sl * zl, su * zu)
        ap = min(_max_step(sl, dx[L]), _max_step(su, -dx[U]))
        ad = min(_max_step(zl, dzl), _max_step(zu, dzu))
        mu_aff = ((sl + ap * dx[L]) @ (zl + ad * dzl) + (su - ap * dx[U]) @ (zu + ad * dzu)) / ncomp
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, dy, dzl, dzu = direction(sl * zl - sigma * mu + dx[L] * dzl,
                                     su * zu - sigma * mu - dx[U] * dzu)
        ap = STEP_TO_BOUNDARY * min(_max_step(sl, dx[L]), _max_step(su, -dx[U]))
        ad = STEP_TO_BOUNDARY * min(_max_step(zl, dzl), _max_step(zu, dzu))
        x = x + ap * dx
        y = y + ad * dy
        zl = zl + ad * dzl
        zu = zu + ad * dzu
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e12:
            status = "infeasible"
            break

    if status == "iter_limit" and rp_n > 1e3 * tol and gap < tol:
        status = "infeasible"
    zl_full = np.zeros(n)
    zu_full = np.zeros(n)
    zl_full[L] = zl * obj_scale
    zu_full[U] = zu * obj_scale
    return QPResult(x=x, y=y * obj_scale, zl=zl_full, zu=zu_full,
                    objective=float(obj_scale * (0.5 * x @ (q * x) + c @ x)),
                    status=status, iterations=it, primal_residual=float(rp_n),
                    dual_residual=float(rd_n), gap=float(gap))
