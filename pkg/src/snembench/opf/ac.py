"""AC optimal power flow in polar coordinates with optional nodal slack."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from snembench.compiled import Compiled, compile_model, dsbus_dv
from snembench.netmodel import NetworkModel
from snembench.opf.derivs import d2asbr_dv2, d2sbus_dv2, dsbr_dv
from snembench.opf.nlp import NLPResult, nlp_ipm
from snembench.opf.result import OPFResult, OPFStatus, cost_terms, default_penalty

FULL_CIRCLE = 2 * np.pi - 1e-9
# penalty reductions tried when the slack problem stalls; never below 10x the top marginal cost
PENALTY_BACKOFF = (1e-1, 1e-2, 1e-3)


@dataclass
class ACProblem:
    """Callbacks for the NLP solver over ``x = [va, vm, pg, qg, sp+, sp-, sq+, sq-]``."""

    c: Compiled
    slack: bool
    penalty: float  # $/h per pu of slack
    cost_mult: float
    second_order: bool = True

    def __post_init__(self):
        c = self.c
        nb, ng, nl = c.nb, c.ng, c.nl
        self.c2, self.c1, self.c0 = cost_terms(c)
        self.ns = nb if self.slack else 0
        sizes = [nb, nb, ng, ng] + [self.ns] * 4
        off = np.cumsum([0] + sizes)
        self.sl = [slice(off[i], off[i + 1]) for i in range(len(sizes))]
        self.n = int(off[-1])
        rows = np.arange(nl)
        self.Cf = sp.csr_matrix((np.ones(nl), (rows, c.f)), shape=(nl, nb))
        self.Ct = sp.csr_matrix((np.ones(nl), (rows, c.t)), shape=(nl, nb))
        self.rated = np.flatnonzero(c.rate_a > 0)
        self.ang_hi = np.flatnonzero(c.angmax < FULL_CIRCLE)
        self.ang_lo = np.flatnonzero(c.angmin > -FULL_CIRCLE)
        self.ref = c.ref

    # unpacking
    def voltage(self, x: np.ndarray) -> np.ndarray:
        return x[self.sl[1]] * np.exp(1j * x[self.sl[0]])

    def slack_of(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.slack:
            z = np.zeros(self.c.nb)
            return z, z.copy()
        return x[self.sl[4]] - x[self.sl[5]], x[self.sl[6]] - x[self.sl[7]]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.c
        xmin = np.full(self.n, -np.inf)
        xmax = np.full(self.n, np.inf)
        xmin[self.sl[1]], xmax[self.sl[1]] = c.vmin, c.vmax
        xmin[self.sl[2]], xmax[self.sl[2]] = c.gen_attr("pmin"), c.gen_attr("pmax")
        xmin[self.sl[3]], xmax[self.sl[3]] = c.gen_attr("qmin"), c.gen_attr("qmax")
        for k in range(4, 8):
            xmin[self.sl[k]] = 0.0
        return xmin, xmax

    def x0(self) -> np.ndarray:
        xmin, xmax = self.bounds()
        lo = np.where(np.isfinite(xmin), xmin, -1e10)
        hi = np.where(np.isfinite(xmax), xmax, 1e10)
        x = (lo + hi) / 2
        x[self.sl[0]] = self.c.va0[self.ref[0]] if len(self.ref) else 0.0
        k = ~np.isfinite(xmin) & np.isfinite(xmax)
        x[k] = xmax[k] - 1
        # one-sided bounds start one unit inside so the bound rows begin feasible
        k = np.isfinite(xmin) & ~np.isfinite(xmax)
        x[k] = xmin[k] + 1
        return x

    # objective
    def generation_cost(self, x: np.ndarray) -> float:
        pg = x[self.sl[2]]
        return float(pg @ (self.c2 * pg) + self.c1 @ pg + self.c0.sum())

    def objective(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        pg = x[self.sl[2]]
        f = self.generation_cost(x)
        df = np.zeros(self.n)
        df[self.sl[2]] = 2 * self.c2 * pg + self.c1
        if self.slack:
            s = slice(self.sl[4].start, self.n)
            f += self.penalty * float(np.sum(x[s]))
            df[s] = self.penalty
        return self.cost_mult * f, self.cost_mult * df

    # constraints
    def constraints(self, x: np.ndarray):
        c = self.c
        nb, ng = c.nb, c.ng
        V = self.voltage(x)
        pg, qg = x[self.sl[2]], x[self.sl[3]]
        sp_, sq_ = self.slack_of(x)
        mis = V * np.conj(c.Ybus @ V) + c.sd - c.Cg @ (pg + 1j * qg) - (sp_ + 1j * sq_)
        dVm, dVa = dsbus_dv(c.Ybus, V)
        blocks_p = [dVa.real, dVm.real, -c.Cg, sp.csr_matrix((nb, ng))]
        blocks_q = [dVa.imag, dVm.imag, sp.csr_matrix((nb, ng)), -c.Cg]
        if self.slack:
            I, Z = sp.eye(nb), sp.csr_matrix((nb, nb))
            blocks_p += [-I, I, Z, Z]
            blocks_q += [Z, Z, -I, I]
        nref = len(self.ref)
        ref_rows = sp.csr_matrix((np.ones(nref), (np.arange(nref), self.ref)), shape=(nref, self.n))
        g = np.r_[mis.real, mis.imag, x[self.ref] - c.va0[self.ref]]
        dg = sp.vstack([sp.hstack(blocks_p), sp.hstack(blocks_q), ref_rows]).tocsr()

        h_parts, dh_parts = [], []
        r = self.rated
        pad = sp.csr_matrix((len(r), self.n - 2 * nb))
        for Ybr, end in ((c.Yf, c.f), (c.Yt, c.t)):
            dSa, dSm, S = dsbr_dv(Ybr[r], end[r], V)
            h_parts.append(np.abs(S) ** 2 - c.rate_a[r] ** 2)
            dA = sp.diags(np.conj(S))
            dh_parts.append(sp.hstack([2 * (dA @ dSa).real, 2 * (dA @ dSm).real, pad]))
        va = x[self.sl[0]]
        for idx, sign, bound in ((self.ang_hi, 1.0, c.angmax), (self.ang_lo, -1.0, c.angmin)):
            k = len(idx)
            h_parts.append(sign * (va[c.f[idx]] - va[c.t[idx]] - bound[idx]))
            rows = np.r_[np.arange(k), np.arange(k)]
            cols = np.r_[c.f[idx], c.t[idx]]
            vals = np.r_[np.full(k, sign), np.full(k, -sign)]
            dh_parts.append(sp.csr_matrix((vals, (rows, cols)), shape=(k, self.n)))
        h = np.concatenate(h_parts)
        dh = sp.vstack(dh_parts).tocsr()
        return h, g, dh, dg

    def hessian(self, x: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> sp.csr_matrix:
        c = self.c
        nb = c.nb
        V = self.voltage(x)
        H = sp.lil_matrix((self.n, self.n))
        H = sp.csr_matrix(sp.diags(np.r_[np.zeros(2 * nb), 2 * self.c2 * self.cost_mult,
                                         np.zeros(self.n - 2 * nb - c.ng)]))
        lp, lq = lam[:nb], lam[nb:2 * nb]
        blocks = np.zeros((2, 2), dtype=object)
        if self.second_order:
            P = d2sbus_dv2(c.Ybus, V, lp)
            Q = d2sbus_dv2(c.Ybus, V, lq)
            blocks[0, 0] = P[0].real + Q[0].imag
            blocks[0, 1] = P[1].real + Q[1].imag
            blocks[1, 0] = P[2].real + Q[2].imag
            blocks[1, 1] = P[3].real + Q[3].imag
        else:
            for i in range(2):
                for j in range(2):
                    blocks[i, j] = sp.csr_matrix((nb, nb))
        r = self.rated
        nr = len(r)
        for k, (Ybr, end, Cbr) in enumerate(((c.Yf, c.f, self.Cf), (c.Yt, c.t, self.Ct))):
            m = mu[k * nr:(k + 1) * nr]
            dSa, dSm, S = dsbr_dv(Ybr[r], end[r], V)
            F = d2asbr_dv2(dSa, dSm, S, Cbr[r], Ybr[r], V, m, self.second_order)
            blocks[0, 0] = blocks[0, 0] + F[0]
            blocks[0, 1] = blocks[0, 1] + F[1]
            blocks[1, 0] = blocks[1, 0] + F[2]
            blocks[1, 1] = blocks[1, 1] + F[3]
        HV = sp.bmat([[blocks[0, 0], blocks[0, 1]], [blocks[1, 0], blocks[1, 1]]])
        HV = sp.block_diag([HV, sp.csr_matrix((self.n - 2 * nb, self.n - 2 * nb))])
        return (H + HV).tocsr()


def _cost_mult(problem: ACProblem) -> float:
    """Scale so that the objective at full output is of order one thousand or less."""
    pmax = problem.c.gen_attr("pmax")
    scale = float(np.sum(np.abs(problem.c2) * pmax ** 2 + np.abs(problem.c1) * np.abs(pmax)))
    return 1.0 / max(1.0, 1e-3 * scale)


def ac_opf(model: NetworkModel, slack: bool = False, penalty: float | None = None,
           tol: float = 1e-6, max_iter: int = 150, hessian: str = "exact",
           verbose: bool = False) -> OPFResult:
    """Nonlinear AC-OPF by the primal-dual interior point method.

    ``penalty`` is in $/MWh per unit of L1 slack (default 1e4 times the
    largest linear cost). ``hessian="gauss_newton"`` drops the second-order
    terms of the network equations for robustness on hard cases.
    """
    if hessian not in ("exact", "gauss_newton"):
        raise ValueError(f"unknown hessian mode {hessian!r}")
    t0 = time.perf_counter()
    c = compile_model(model)
    base = model.base_mva
    M = default_penalty(c) if penalty is None else float(penalty)
    prob = ACProblem(c, slack=slack, penalty=M * base, cost_mult=1.0,
                     second_order=hessian == "exact")
    prob.cost_mult = _cost_mult(prob)
    xmin, xmax = prob.bounds()
    res: NLPResult = nlp_ipm(prob.objective, prob.constraints, prob.hessian, prob.x0(), xmin, xmax,
                             tol=tol, max_iter=max_iter, verbose=verbose)
    message = res.message
    if slack and not res.converged:
        # a very large penalty can stall the barrier; retry with smaller ones that still dominate cost
        floor = 10.0 * float(np.max(np.abs(prob.c1), initial=0.0))
        for factor in PENALTY_BACKOFF:
            trial = ACProblem(c, slack=True, penalty=M * base * factor, cost_mult=prob.cost_mult,
                              second_order=prob.second_order)
            if trial.penalty < floor:
                break
            retry = nlp_ipm(trial.objective, trial.constraints, trial.hessian, trial.x0(), xmin, xmax,
                            tol=tol, max_iter=max_iter, verbose=verbose)
            if retry.converged:
                prob, res = trial, retry
                message = f"converged with penalty reduced to {trial.penalty / base:.6g} $/MWh"
                break
    x = res.x
    if res.converged:
        status = OPFStatus.OPTIMAL
    else:
        status = OPFStatus.ITER_LIMIT
    if not slack and not res.converged:
        probe = ac_opf(model, slack=True, penalty=penalty, tol=tol, max_iter=max_iter, hessian=hessian)
        if probe.ok and probe.total_slack() > 1e-6:
            status = OPFStatus.INFEASIBLE
            message = f"{res.message}; balance needs {probe.total_slack():.6g} pu of slack"
        elif not probe.ok:
            message = f"{res.message}; restoration with slack also failed ({probe.message})"
    V = prob.voltage(x)
    sf = V[c.f] * np.conj(c.Yf @ V)
    st = V[c.t] * np.conj(c.Yt @ V)
    sp_, sq_ = prob.slack_of(x)
    binding = []
    if status == OPFStatus.OPTIMAL:
        binding = _binding(prob, x, sf, st, xmin, xmax)
    return OPFResult(
        kind="ac", status=status, objective=prob.generation_cost(x),
        penalty=float(prob.penalty * (np.sum(np.abs(sp_)) + np.sum(np.abs(sq_)))),
        bus_ids=c.bus_ids, vm=np.abs(V), va=np.angle(V), gen_ids=c.gen_ids, pg=x[prob.sl[2]],
        qg=x[prob.sl[3]], branch_ids=c.branch_ids, sf=sf, st=st, sp=sp_, sq=sq_,
        solve_time=time.perf_counter() - t0, iterations=res.iterations, base_mva=base,
        message=message, binding=binding,
    )


def _binding(prob: ACProblem, x, sf, st, xmin, xmax, rtol: float = 1e-5) -> list[str]:
    c = prob.c
    out = []
    names = [("bus", "vm", c.bus_ids, prob.sl[1]), ("gen", "pg", c.gen_ids, prob.sl[2]),
             ("gen", "qg", c.gen_ids, prob.sl[3])]
    for kind, what, ids, s in names:
        v, lo, hi = x[s], xmin[s], xmax[s]
        for i in range(len(v)):
            if lo[i] == hi[i]:
                continue
            if v[i] >= hi[i] - rtol * max(1.0, abs(hi[i])):
                out.append(f"{kind} {int(ids[i])} {what} max")
            elif v[i] <= lo[i] + rtol * max(1.0, abs(lo[i])):
                out.append(f"{kind} {int(ids[i])} {what} min")
    for k in prob.rated:
        if max(abs(sf[k]), abs(st[k])) >= c.rate_a[k] * (1 - rtol):
            out.append(f"branch {int(c.branch_ids[k])} flow")
    return out


def check_feasibility(model: NetworkModel, result: OPFResult) -> dict[str, float]:
    """Independent constraint violations of an OPF point (pu, rad).

    Recomputes balance and flows from the model's admittances without
    reusing the solver's formulation.
    """
    out: dict[str, float] = {}
    bus_pos = {int(b): i for i, b in enumerate(result.bus_ids)}
    V = {int(b): result.vm[i] * np.exp(1j * result.va[i]) for i, b in enumerate(result.bus_ids)}
    inj = {b: 0j for b in V}
    for k in result.branch_ids:
        br = model.branches[int(k)]
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * np.exp(1j * br.shift)
        vf, vt = V[br.f_bus], V[br.t_bus]
        i_f = (ys + complex(br.g_fr, br.b_fr)) / abs(tap) ** 2 * vf - ys / np.conj(tap) * vt
        i_t = -ys / tap * vf + (ys + complex(br.g_to, br.b_to)) * vt
        sf, st = vf * np.conj(i_f), vt * np.conj(i_t)
        inj[br.f_bus] += sf
        inj[br.t_bus] += st
        if br.rate_a > 0:
            lim = br.rate_a / model.base_mva
            out[f"flow {int(k)}"] = max(abs(sf) - lim, abs(st) - lim, 0.0)
        dth = np.angle(vf) - np.angle(vt)
        out[f"angle {int(k)}"] = max(dth - br.angmax, br.angmin - dth, 0.0)
    for sh in model.shunts.values():
        if sh.status and sh.bus in V:
            inj[sh.bus] += abs(V[sh.bus]) ** 2 * np.conj(complex(sh.gs, sh.bs))
    for ld in model.loads.values():
        if ld.status and ld.bus in V:
            inj[ld.bus] += complex(ld.pd, ld.qd)
    for j, g in enumerate(result.gen_ids):
        gen = model.gens[int(g)]
        inj[gen.bus] -= complex(result.pg[j], result.qg[j])
        out[f"pg {int(g)}"] = max(result.pg[j] - gen.pmax, gen.pmin - result.pg[j], 0.0)
        out[f"qg {int(g)}"] = max(result.qg[j] - gen.qmax, gen.qmin - result.qg[j], 0.0)
    for b, i in bus_pos.items():
        s = complex(result.sp[i], result.sq[i])
        out[f"balance {b}"] = abs(inj[b] - s)
        bus = model.buses[b]
        out[f"vm {b}"] = max(result.vm[i] - bus.vmax, bus.vmin - result.vm[i], 0.0)
    return out
