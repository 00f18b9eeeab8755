"""DC optimal power flow with optional L1 nodal slack, solved by the in-repo IPM."""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from snembench.compiled import compile_model
from snembench.netmodel import NetworkModel
from snembench.opf.lp import solve_qp
from snembench.opf.result import OPFError, OPFResult, OPFStatus, cost_terms, default_penalty
from snembench.powerflow import dc_b_matrices

ANGLE_BOX = 100.0  # rad, keeps every variable boxed for the IPM start
FLOW_BOX = 1e4  # pu, used when a branch has neither rating nor angle bound
FULL_CIRCLE = 2 * np.pi - 1e-9
# flow curvature of the slack-placement pass, relative to a unit L1 slack price
PLACEMENT_WEIGHT = 1e-2


def _flow_bounds(c, b: np.ndarray, shift: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.full(c.nl, -FLOW_BOX)
    hi = np.full(c.nl, FLOW_BOX)
    rated = c.rate_a > 0
    lo[rated] = -c.rate_a[rated]
    hi[rated] = c.rate_a[rated]
    # flow = b (dtheta - shift), so an angle window maps to a flow window
    ang = (c.angmin > -FULL_CIRCLE) | (c.angmax < FULL_CIRCLE)
    amin = np.maximum(c.angmin, -FULL_CIRCLE)
    amax = np.minimum(c.angmax, FULL_CIRCLE)
    f1 = b * (amin - shift)
    f2 = b * (amax - shift)
    lo = np.where(ang, np.maximum(lo, np.minimum(f1, f2)), lo)
    hi = np.where(ang, np.minimum(hi, np.maximum(f1, f2)), hi)
    return lo, hi


def dc_opf(model: NetworkModel, slack: bool = True, penalty: float | None = None,
           tol: float = 1e-8, max_iter: int = 200) -> OPFResult:
    """Linearized OPF minimizing generation cost plus ``penalty`` times L1 slack.

    ``penalty`` is in $/MWh (default 1e4 times the largest linear cost). With
    ``slack`` disabled an infeasible model returns status INFEASIBLE.
    """
    t0 = time.perf_counter()
    c = compile_model(model)
    base = model.base_mva
    c2, c1, c0 = cost_terms(c)
    M = default_penalty(c) if penalty is None else float(penalty)
    if slack and M * base <= np.max(np.abs(c1), initial=0.0):
        raise OPFError("slack penalty must exceed the largest marginal cost")

    Bbus, Bf, pbus_shift, pf_shift = dc_b_matrices(c)
    bvec = 1.0 / (np.array([model.branches[int(k)].x for k in c.branch_ids]) * np.abs(c.tap))
    shift = np.angle(c.tap)
    ng, nb, nl = c.ng, c.nb, c.nl
    ns = nb if slack else 0
    # x = [pg, va, flow, s+, s-]
    ipg = slice(0, ng)
    iva = slice(ng, ng + nb)
    ifl = slice(ng + nb, ng + nb + nl)
    isp = slice(ng + nb + nl, ng + nb + nl + ns)
    isn = slice(ng + nb + nl + ns, ng + nb + nl + 2 * ns)
    n = ng + nb + nl + 2 * ns

    rows = np.arange(nl)
    Cft = sp.csr_matrix((np.r_[np.ones(nl), -np.ones(nl)], (np.r_[c.f, c.t], np.r_[rows, rows])),
                        shape=(nb, nl))
    # flow definition: flow - Bf va = pf_shift
    flow_def = sp.hstack([sp.csr_matrix((nl, ng)), -Bf, sp.eye(nl), sp.csr_matrix((nl, 2 * ns))])
    # balance: Cft flow - Cg pg - s+ + s- = -Pd - Gs
    bal_blocks = [-c.Cg, sp.csr_matrix((nb, nb)), Cft]
    if slack:
        bal_blocks += [-sp.eye(nb), sp.eye(nb)]
    balance = sp.hstack(bal_blocks)
    ref = c.ref
    ref_rows = sp.csr_matrix((np.ones(len(ref)), (np.arange(len(ref)), ng + ref)), shape=(len(ref), n))
    A = sp.vstack([flow_def, balance, ref_rows]).tocsr()
    b = np.r_[pf_shift, -c.sd.real - c.ysh.real, c.va0[ref]]

    lb = np.empty(n)
    ub = np.empty(n)
    lb[ipg], ub[ipg] = c.gen_attr("pmin"), c.gen_attr("pmax")
    lb[iva], ub[iva] = -ANGLE_BOX, ANGLE_BOX
    lb[ifl], ub[ifl] = _flow_bounds(c, bvec, shift)
    lb[isp], ub[isp] = 0.0, np.inf
    lb[isn], ub[isn] = 0.0, np.inf
    if np.any(lb > ub):
        raise OPFError("inconsistent bounds (pmin > pmax or empty angle window)")

    cvec = np.zeros(n)
    cvec[ipg] = c1
    cvec[isp] = M * base
    cvec[isn] = M * base
    q = np.zeros(n)
    q[ipg] = 2.0 * c2

    scale = max(1e-6, float(np.max(np.abs(c1), initial=0.0)), float(np.max(q, initial=0.0)))
    res = solve_qp(cvec, A, b, lb, ub, q=q, tol=tol, max_iter=max_iter, obj_scale=scale)
    status = {"optimal": OPFStatus.OPTIMAL, "infeasible": OPFStatus.INFEASIBLE}.get(
        res.status, OPFStatus.ITER_LIMIT)
    x = res.x
    message = res.status
    if not slack and status != OPFStatus.OPTIMAL:
        # certify infeasibility with the slack-relaxed problem
        probe = dc_opf(model, slack=True, penalty=penalty, tol=tol, max_iter=max_iter)
        if probe.ok and probe.total_slack() > 1e-6:
            status = OPFStatus.INFEASIBLE
            message = f"balance needs {probe.total_slack():.6g} pu of slack"

    pg = x[ipg]
    if slack and status == OPFStatus.OPTIMAL and np.sum(x[isp] + x[isn]) > 1e-9:
        x = _place_slack(x, A, b, lb, ub, ipg, ifl, slice(isp.start, isn.stop), tol, max_iter)
    sp_ = x[isp] - x[isn] if slack else np.zeros(nb)
    flows = x[ifl]
    objective = float(pg @ (c2 * pg) + c1 @ pg + c0.sum())
    binding = []
    if status == OPFStatus.OPTIMAL:
        scale = 1e-6 * max(1.0, float(np.max(np.abs(x), initial=0.0)))
        for j in range(ng):
            if pg[j] >= ub[j] - scale and ub[j] > lb[j]:
                binding.append(f"gen {int(c.gen_ids[j])} pmax")
            elif pg[j] <= lb[j] + scale and ub[j] > lb[j]:
                binding.append(f"gen {int(c.gen_ids[j])} pmin")
        flo, fhi = lb[ifl], ub[ifl]
        for k in range(nl):
            if flows[k] >= fhi[k] - scale or flows[k] <= flo[k] + scale:
                binding.append(f"branch {int(c.branch_ids[k])} flow")
    return OPFResult(
        kind="dc", status=status, objective=objective,
        penalty=float(M * base * np.sum(np.abs(sp_))), bus_ids=c.bus_ids, vm=np.ones(nb),
        va=x[iva], gen_ids=c.gen_ids, pg=pg, qg=np.zeros(ng), branch_ids=c.branch_ids,
        sf=flows.astype(complex), st=-flows.astype(complex), sp=sp_, sq=np.zeros(nb),
        solve_time=time.perf_counter() - t0, iterations=res.iterations, base_mva=base,
        message=message, binding=binding,
    )



def _place_slack(x: np.ndarray, A, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 ipg: slice, ifl: slice, islack: slice, tol: float, max_iter: int) -> np.ndarray:
    """Resolve ties in slack location with the dispatch held fixed.

    Moving slack between buses can leave the L1 total unchanged, so the LP
    optimum need not be unique. With ``pg`` fixed, minimize the L1 slack plus
    a small quadratic flow term: among equal-total placements the one moving
    the least power wins, which puts slack at the bus whose balance fails.
    """
    A = sp.csr_matrix(A)
    rest = np.arange(ipg.stop, len(x))
    off = ipg.stop
    cvec = np.zeros(len(rest))
    q = np.zeros(len(rest))
    cvec[islack.start - off:islack.stop - off] = 1.0
    q[ifl.start - off:ifl.stop - off] = PLACEMENT_WEIGHT
    res = solve_qp(cvec, A[:, rest], b - A[:, ipg] @ x[ipg], lb[rest], ub[rest], q=q,
                   tol=tol, max_iter=max_iter, obj_scale=1.0)
    if res.status != "optimal":
        return x
    out = x.copy()
    out[rest] = res.x
    return out
