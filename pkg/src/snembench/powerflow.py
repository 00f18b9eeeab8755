"""AC (Newton-Raphson, polar) and DC power flow, plus the slack-augmented AC variant."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares
from scipy.sparse.linalg import splu

from snembench.compiled import Compiled, compile_model, dsbus_dv
from snembench.netmodel import BusType, NetworkModel

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    pass


@dataclass
class PFSolution:
    """Power flow result, arrays aligned with the id tuples."""

    bus_ids: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    gen_ids: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    branch_ids: np.ndarray
    sf: np.ndarray  # complex flow into the branch at the from end, pu
    st: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    base_mva: float = 100.0
    message: str = ""

    def vm_of(self) -> dict[int, float]:
        return dict(zip(self.bus_ids.tolist(), self.vm.tolist()))

    def va_of(self) -> dict[int, float]:
        return dict(zip(self.bus_ids.tolist(), self.va.tolist()))

    def flow_mva(self) -> dict[int, float]:
        """Largest end apparent-power flow per branch, MVA."""
        s = np.maximum(np.abs(self.sf), np.abs(self.st)) * self.base_mva
        return dict(zip(self.branch_ids.tolist(), s.tolist()))

    @property
    def losses(self) -> complex:
        return complex(np.sum(self.sf + self.st))


@dataclass
class SlackPF:
    solution: PFSolution
    sp: dict[int, float] = field(default_factory=dict)
    sq: dict[int, float] = field(default_factory=dict)

    def max_slack(self) -> float:
        vals = [abs(v) for v in self.sp.values()] + [abs(v) for v in self.sq.values()]
        return max(vals, default=0.0)

    def ranked(self) -> list[tuple[int, float]]:
        mag = {b: float(np.hypot(self.sp.get(b, 0.0), self.sq.get(b, 0.0))) for b in self.sp}
        return sorted(mag.items(), key=lambda kv: (-kv[1], kv[0]))


class ACSystem:
    """Polar mismatch equations for a fixed PV/PQ/REF partition.

    Unknowns ``x = [va[pvpq], vm[pq]]``; residual ``F = [dP[pvpq], dQ[pq]]``
    with ``dS = V conj(Ybus V) - Sbus``.
    """

    def __init__(self, c: Compiled, sbus: np.ndarray, vm: np.ndarray, va: np.ndarray,
                 bus_type: np.ndarray | None = None):
        self.c = c
        self.sbus = sbus
        bt = c.bus_type if bus_type is None else bus_type
        self.ref = np.flatnonzero(bt == BusType.REF)
        self.pv = np.flatnonzero(bt == BusType.PV)
        self.pq = np.flatnonzero(bt == BusType.PQ)
        self.pvpq = np.r_[self.pv, self.pq]
        self.vm = vm.astype(float).copy()
        self.va = va.astype(float).copy()

    @property
    def n_ang(self) -> int:
        return len(self.pvpq)

    def x0(self) -> np.ndarray:
        return np.r_[self.va[self.pvpq], self.vm[self.pq]]

    def voltage(self, x: np.ndarray) -> np.ndarray:
        va = self.va.copy()
        vm = self.vm.copy()
        va[self.pvpq] = x[:self.n_ang]
        vm[self.pq] = x[self.n_ang:]
        return vm * np.exp(1j * va)

    def bus_mismatch(self, V: np.ndarray) -> np.ndarray:
        return V * np.conj(self.c.Ybus @ V) - self.sbus

    def mismatch(self, x: np.ndarray) -> np.ndarray:
        mis = self.bus_mismatch(self.voltage(x))
        return np.r_[mis[self.pvpq].real, mis[self.pq].imag]

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        dVm, dVa = dsbus_dv(self.c.Ybus, self.voltage(x))
        j11 = dVa[self.pvpq][:, self.pvpq].real
        j12 = dVm[self.pvpq][:, self.pq].real
        j21 = dVa[self.pq][:, self.pvpq].imag
        j22 = dVm[self.pq][:, self.pq].imag
        return sp.vstack([sp.hstack([j11, j12]), sp.hstack([j21, j22])], format="csc")


def _branch_flows(c: Compiled, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sf = V[c.f] * np.conj(c.Yf @ V)
    st = V[c.t] * np.conj(c.Yt @ V)
    return sf, st


def _gen_output(c: Compiled, V: np.ndarray, pg: np.ndarray, qg: np.ndarray,
                bus_type: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assign slack active power and reactive output to generators."""
    s_inj = V * np.conj(c.Ybus @ V) + c.sd
    pg = pg.copy()
    qg = qg.copy()
    for i in np.unique(c.gen_bus):
        at = np.flatnonzero(c.gen_bus == i)
        if bus_type[i] in (BusType.PV, BusType.REF):
            qg[at] = s_inj[i].imag / len(at)
        if bus_type[i] == BusType.REF:
            first = at[0]
            pg[first] = s_inj[i].real - (pg[at].sum() - pg[first])
    return pg, qg


def _newton(system: ACSystem, tol: float, max_iter: int) -> tuple[np.ndarray, bool, int, float, str]:
    x = system.x0()
    F = system.mismatch(x)
    err = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    while err >= tol:
        if it >= max_iter:
            return x, False, it, err, "iteration limit"
        J = system.jacobian(x)
        try:
            dx = splu(J).solve(-F)
        except RuntimeError:
            return x, False, it, err, "singular Jacobian"
        if not np.all(np.isfinite(dx)):
            return x, False, it, err, "non-finite Newton step"
        x = x + dx
        it += 1
        F = system.mismatch(x)
        err = float(np.max(np.abs(F)))
        if not np.isfinite(err):
            return x, False, it, err, "diverged"
    return x, True, it, err, ""


def ac_pf(model: NetworkModel, tol: float = 1e-8, max_iter: int = 20, *,
          enforce_q_limits: bool = True, warm_start: bool = False) -> PFSolution:
    """Full Newton-Raphson AC power flow.

    With ``enforce_q_limits`` a PV bus whose generators exceed their reactive
    limits is fixed at the violated limit, switched to PQ and the flow is
    re-solved. Failure is reported through ``converged``/``message`` rather
    than raised.
    """
    c = compile_model(model)
    if c.nb == 0:
        raise PowerFlowError("model has no in-service buses")
    bus_type = c.bus_type.copy()
    pg, qg = c.gen_attr("pg"), c.gen_attr("qg")
    vm = c.vm0.copy()
    va = c.va0.copy() if warm_start else np.where(bus_type == BusType.REF, c.va0, 0.0)
    if not warm_start:
        vm[bus_type == BusType.PQ] = 1.0
    qmin, qmax = c.gen_attr("qmin"), c.gen_attr("qmax")
    fixed = np.zeros(c.ng, dtype=bool)
    total_it = 0
    while True:
        system = ACSystem(c, c.sbus(pg, qg), vm, va, bus_type)
        x, ok, it, err, msg = _newton(system, tol, max_iter)
        total_it += it
        V = system.voltage(x)
        if not ok or not enforce_q_limits:
            break
        pg_out, qg_out = _gen_output(c, V, pg, qg, bus_type)
        viol = np.flatnonzero(~fixed & np.isin(bus_type[c.gen_bus], [BusType.PV])
                              & ((qg_out > qmax + tol) | (qg_out < qmin - tol)))
        if viol.size == 0:
            break
        for g in viol:
            qg[g] = qmax[g] if qg_out[g] > qmax[g] else qmin[g]
            fixed[g] = True
            bus_type[c.gen_bus[g]] = BusType.PQ
        # other generators at a switched bus keep their current output
        for g in np.flatnonzero(np.isin(c.gen_bus, c.gen_bus[viol]) & ~fixed):
            qg[g] = qg_out[g]
            fixed[g] = True
        vm, va = np.abs(V), np.angle(V)
        log.debug("PV->PQ switch at buses %s", c.bus_ids[c.gen_bus[viol]].tolist())
    pg_out, qg_out = _gen_output(c, V, pg, qg, bus_type)
    qg_out[fixed] = qg[fixed]
    sf, st = _branch_flows(c, V)
    return PFSolution(
        bus_ids=c.bus_ids, vm=np.abs(V), va=np.angle(V), gen_ids=c.gen_ids, pg=pg_out, qg=qg_out,
        branch_ids=c.branch_ids, sf=sf, st=st, converged=ok, iterations=total_it,
        max_mismatch=err, base_mva=model.base_mva, message=msg,
    )


def dc_b_matrices(c: Compiled) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray, np.ndarray]:
    """Susceptance matrices of the linearized network.

    Returns ``(Bbus, Bf, p_shift_bus, p_shift_branch)`` so that branch flows
    are ``Bf @ va + p_shift_branch`` and injections ``Bbus @ va + p_shift_bus``.
    """
    b = 1.0 / (np.array([c.model.branches[int(k)].x for k in c.branch_ids]) * np.abs(c.tap))
    shift = np.angle(c.tap)
    rows = np.arange(c.nl)
    Bf = sp.csr_matrix((np.r_[b, -b], (np.r_[rows, rows], np.r_[c.f, c.t])), shape=(c.nl, c.nb))
    Cft = sp.csr_matrix((np.r_[np.ones(c.nl), -np.ones(c.nl)], (np.r_[c.f, c.t], np.r_[rows, rows])),
                        shape=(c.nb, c.nl))
    Bbus = (Cft @ Bf).tocsr()
    pf_shift = -b * shift
    return Bbus, Bf, Cft @ pf_shift, pf_shift


def dc_pf(model: NetworkModel) -> PFSolution:
    """Linearized DC power flow: unit magnitudes, lossless, ``B va = P``."""
    c = compile_model(model)
    Bbus, Bf, pbus_shift, pf_shift = dc_b_matrices(c)
    ref = c.ref
    pg = c.gen_attr("pg")
    p = (c.Cg @ pg - c.sd.real) - c.ysh.real - pbus_shift
    va = c.va0.copy()
    nonref = np.setdiff1d(np.arange(c.nb), ref)
    if nonref.size:
        A = Bbus[nonref][:, nonref].tocsc()
        rhs = p[nonref] - Bbus[nonref][:, ref] @ va[ref]
        try:
            va[nonref] = splu(A).solve(rhs)
        except RuntimeError:
            raise PowerFlowError("singular B matrix (island without reference bus?)") from None
    flows = Bf @ va + pf_shift
    inj = Bbus @ va + pbus_shift + c.ysh.real
    pg_out = pg.copy()
    for i in ref:
        at = np.flatnonzero(c.gen_bus == i)
        if at.size:
            pg_out[at[0]] = inj[i] + c.sd[i].real - (pg[at].sum() - pg[at[0]])
    mis = inj - (c.Cg @ pg_out - c.sd.real)
    return PFSolution(
        bus_ids=c.bus_ids, vm=np.ones(c.nb), va=va, gen_ids=c.gen_ids, pg=pg_out,
        qg=np.zeros(c.ng), branch_ids=c.branch_ids, sf=flows.astype(complex),
        st=-flows.astype(complex), converged=True, iterations=1,
        max_mismatch=float(np.max(np.abs(mis), initial=0.0)), base_mva=model.base_mva,
    )


def ac_pf_slack(model: NetworkModel, tol: float = 1e-8, max_iter: int = 20, *,
                enforce_q_limits: bool = True, max_nfev: int = 200) -> SlackPF:
    """AC power flow that always returns, expressing infeasibility as nodal slack.

    A converged Newton solve yields zero slack. Otherwise the squared mismatch
    is minimized by a bounded trust-region least-squares solve with PQ
    magnitudes kept within their limits, and the residual mismatch at each
    bus is reported as the slack injection that would balance it.
    """
    sol = ac_pf(model, tol, max_iter, enforce_q_limits=enforce_q_limits)
    if sol.converged:
        ids = sol.bus_ids.tolist()
        return SlackPF(sol, dict.fromkeys(ids, 0.0), dict.fromkeys(ids, 0.0))

    c = compile_model(model)
    vm = c.vm0.copy()
    vm[c.pq] = np.clip(1.0, c.vmin[c.pq], c.vmax[c.pq])
    va = np.where(c.bus_type == BusType.REF, c.va0, 0.0)
    system = ACSystem(c, c.sbus(), vm, va)
    n_ang = system.n_ang
    lb = np.r_[np.full(n_ang, -np.inf), c.vmin[system.pq]]
    ub = np.r_[np.full(n_ang, np.inf), c.vmax[system.pq]]
    x0 = np.clip(system.x0(), lb, ub)
    res = least_squares(system.mismatch, x0, jac=lambda x: system.jacobian(x).tocsr(),
                        bounds=(lb, ub), method="trf", x_scale="jac", max_nfev=max_nfev,
                        ftol=1e-12, xtol=1e-12, gtol=1e-12)
    V = system.voltage(res.x)
    mis = system.bus_mismatch(V)
    sp_ = np.zeros(c.nb)
    sq_ = np.zeros(c.nb)
    sp_[system.pvpq] = mis[system.pvpq].real
    sq_[system.pq] = mis[system.pq].imag
    pg, qg = _gen_output(c, V, c.gen_attr("pg"), c.gen_attr("qg"), c.bus_type)
    sf, st = _branch_flows(c, V)
    err = float(np.max(np.abs(np.r_[sp_, sq_]), initial=0.0))
    out = PFSolution(
        bus_ids=c.bus_ids, vm=np.abs(V), va=np.angle(V), gen_ids=c.gen_ids, pg=pg, qg=qg,
        branch_ids=c.branch_ids, sf=sf, st=st, converged=err < tol, iterations=int(res.nfev),
        max_mismatch=err, base_mva=model.base_mva, message="least-squares slack solve",
    )
    ids = c.bus_ids.tolist()
    return SlackPF(out, dict(zip(ids, sp_.tolist())), dict(zip(ids, sq_.tolist())))


def power_balance_residual(model: NetworkModel, sol: PFSolution) -> float:
    """|generation - load - losses - shunt consumption| (active and reactive), pu."""
    c = compile_model(model)
    V = sol.vm * np.exp(1j * sol.va)
    gen = complex(np.sum(sol.pg + 1j * sol.qg))
    load = complex(np.sum(c.sd))
    shunt = complex(np.sum(np.abs(V) ** 2 * np.conj(c.ysh)))
    return abs(gen - load - sol.losses - shunt)
