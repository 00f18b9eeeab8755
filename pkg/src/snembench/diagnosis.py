"""Staged feasibility diagnosis with nodal slack, and solution comparison."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares

from snembench.compiled import compile_model, dsbus_dv
from snembench.netmodel import BusType, NetworkModel
from snembench.opf import ac_opf, dc_opf
from snembench.opf.result import OPFResult
from snembench.powerflow import PFSolution, ac_pf, dc_pf


class DiagnosisError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


class Verdict(str, Enum):
    FEASIBLE = "FEASIBLE"
    P_IMBALANCE = "P_IMBALANCE"
    Q_IMBALANCE = "Q_IMBALANCE"
    GEN_SETPOINT_MISMATCH = "GEN_SETPOINT_MISMATCH"


@dataclass(frozen=True)
class Tolerances:
    slack: float = 1e-4  # pu per bus, OPF stages
    setpoint: float = 1e-3  # pu per generator, PF comparison stages


@dataclass
class StageResult:
    name: str
    ran: bool
    passed: bool
    max_slack: float = 0.0
    offenders: list[tuple[int, float]] = field(default_factory=list)
    detail: str = ""


@dataclass
class DiagnosisReport:
    verdict: Verdict
    stages: list[StageResult]
    tolerances: Tolerances

    def stage(self, name: str) -> StageResult:
        return next(s for s in self.stages if s.name == name)

    def top_offender(self) -> int | None:
        """Worst element of the first failing stage."""
        for s in self.stages:
            if s.ran and not s.passed and s.offenders:
                return s.offenders[0][0]
        return None

    def to_text(self, top: int = 5) -> str:
        out = [f"verdict={self.verdict.value}",
               f"tol_slack={self.tolerances.slack:g}", f"tol_setpoint={self.tolerances.setpoint:g}"]
        for s in self.stages:
            out.append(f"[{s.name}] ran={s.ran} passed={s.passed} max={s.max_slack:.6g} {s.detail}".rstrip())
            for ident, val in s.offenders[:top]:
                out.append(f"  {ident},{val:.6g}")
        return "\n".join(out)


@dataclass
class ValidationDelta:
    bus_ids: np.ndarray
    dvm: np.ndarray  # pu
    dva: np.ndarray  # degrees, wrapped to (-180, 180]
    gen_ids: np.ndarray
    dpg: np.ndarray  # pu
    dqg: np.ndarray

    def summary(self) -> dict[str, float]:
        def stats(v):
            a = np.abs(v)
            return (float(a.max()), float(a.mean())) if a.size else (0.0, 0.0)
        out = {}
        for name in ("dvm", "dva", "dpg", "dqg"):
            out[f"max_{name}"], out[f"mean_{name}"] = stats(getattr(self, name))
        return out


def wrap_degrees(d: np.ndarray) -> np.ndarray:
    """Map angles in degrees to (-180, 180]."""
    d = np.asarray(d, dtype=float)
    return d - 360.0 * np.ceil((d - 180.0) / 360.0)


def compare_solutions(a: PFSolution, b: PFSolution) -> ValidationDelta:
    """Per-bus and per-generator differences ``a - b`` over shared ids."""
    common = np.intersect1d(a.bus_ids, b.bus_ids)
    if common.size == 0:
        raise ValueError("solutions share no buses")
    ia = {int(k): i for i, k in enumerate(a.bus_ids)}
    ib = {int(k): i for i, k in enumerate(b.bus_ids)}
    pa = [ia[int(k)] for k in common]
    pb = [ib[int(k)] for k in common]
    gcommon = np.intersect1d(a.gen_ids, b.gen_ids)
    ga = {int(k): i for i, k in enumerate(a.gen_ids)}
    gb = {int(k): i for i, k in enumerate(b.gen_ids)}
    qa = [ga[int(k)] for k in gcommon]
    qb = [gb[int(k)] for k in gcommon]
    return ValidationDelta(
        bus_ids=common, dvm=a.vm[pa] - b.vm[pb],
        dva=wrap_degrees(np.degrees(a.va[pa] - b.va[pb])),
        gen_ids=gcommon, dpg=a.pg[qa] - b.pg[qb], dqg=a.qg[qa] - b.qg[qb],
    )


def _ranked(ids, values) -> list[tuple[int, float]]:
    pairs = [(int(i), float(abs(v))) for i, v in zip(ids, values)]
    return sorted(pairs, key=lambda kv: (-kv[1], kv[0]))


def _with_dispatch(model: NetworkModel, res: OPFResult) -> NetworkModel:
    gens = dict(model.gens)
    for g, p in zip(res.gen_ids, res.pg):
        gens[int(g)] = replace(gens[int(g)], pg=float(p))
    return model.replace(gens=gens)


def gen_slack_pf(model: NetworkModel, weight: float = 1e-3, max_nfev: int = 200
                 ) -> tuple[PFSolution, dict[int, float], float]:
    """AC power flow with generator setpoints fixed and a free active slack per generator.

    Minimizes the squared mismatch plus ``weight``-scaled squared slack, so
    slack appears only where the fixed setpoints cannot balance the network.
    Returns the solution, per-generator slack (pu) and the residual bus
    mismatch (pu).
    """
    c = compile_model(model)
    V0 = c.vm0 * np.exp(1j * np.where(c.bus_type == BusType.REF, c.va0, 0.0))
    nonref = np.flatnonzero(c.bus_type != BusType.REF)
    pq = c.pq
    sbus = c.sbus()
    na, nm = len(nonref), len(pq)

    def unpack(x):
        va = np.angle(V0).copy()
        vm = np.abs(V0).copy()
        va[nonref] = x[:na]
        vm[pq] = x[na:na + nm]
        return vm * np.exp(1j * va), x[na + nm:]

    def fun(x):
        V, ds = unpack(x)
        mis = V * np.conj(c.Ybus @ V) - sbus - c.Cg @ ds
        return np.r_[mis.real, mis.imag[pq], weight * ds]

    def jac(x):
        V, _ = unpack(x)
        dVm, dVa = dsbus_dv(c.Ybus, V)
        top = sp.hstack([dVa[:, nonref].real, dVm[:, pq].real, -c.Cg])
        mid = sp.hstack([dVa[pq][:, nonref].imag, dVm[pq][:, pq].imag, sp.csr_matrix((nm, c.ng))])
        bot = sp.hstack([sp.csr_matrix((c.ng, na + nm)), weight * sp.eye(c.ng)])
        return sp.vstack([top, mid, bot]).tocsr()

    x0 = np.r_[np.angle(V0)[nonref], np.abs(V0)[pq], np.zeros(c.ng)]
    res = least_squares(fun, x0, jac=jac, method="trf", max_nfev=max_nfev,
                        ftol=1e-14, xtol=1e-14, gtol=1e-14)
    V, ds = unpack(res.x)
    mis = V * np.conj(c.Ybus @ V) - sbus - c.Cg @ ds
    resid = float(np.max(np.abs(np.r_[mis.real, mis.imag[pq]]), initial=0.0))
    s_inj = V * np.conj(c.Ybus @ V) + c.sd
    qg = c.gen_attr("qg").copy()
    for i in np.unique(c.gen_bus):
        at = np.flatnonzero(c.gen_bus == i)
        if c.bus_type[i] != BusType.PQ:
            qg[at] = s_inj[i].imag / len(at)
    sf = V[c.f] * np.conj(c.Yf @ V)
    st = V[c.t] * np.conj(c.Yt @ V)
    sol = PFSolution(bus_ids=c.bus_ids, vm=np.abs(V), va=np.angle(V), gen_ids=c.gen_ids,
                     pg=c.gen_attr("pg") + ds, qg=qg, branch_ids=c.branch_ids, sf=sf, st=st,
                     converged=resid < 1e-6, iterations=int(res.nfev), max_mismatch=resid,
                     base_mva=model.base_mva, message="generator-slack least squares")
    return sol, dict(zip(c.gen_ids.tolist(), ds.tolist())), resid


def diagnose(model: NetworkModel, tolerances: Tolerances | None = None) -> DiagnosisReport:
    """Run the staged slack diagnosis, stopping at the first conclusive stage.

    Stages: DC-OPF with active slack, AC-OPF with active and reactive slack,
    AC versus DC power flow at the DC dispatch, and AC power flow with
    per-generator slack anchored on the DC dispatch. The last two run only
    when the AC-OPF stage finds an imbalance.
    """
    tol = tolerances or Tolerances()
    names = ["dc_opf_slack", "ac_opf_slack", "ac_dc_pf_compare", "gen_slack_pf"]
    stages = {n: StageResult(n, ran=False, passed=True) for n in names}

    def finish(verdict):
        return DiagnosisReport(verdict, [stages[n] for n in names], tol)

    try:
        dc = dc_opf(model, slack=True)
    except Exception as exc:
        raise DiagnosisError("dc_opf_slack", exc) from exc
    ranked = _ranked(dc.bus_ids, dc.sp)
    top = ranked[0][1] if ranked else 0.0
    stages["dc_opf_slack"] = StageResult("dc_opf_slack", True, dc.ok and top <= tol.slack, top,
                                         ranked, f"status={dc.status.value}")
    if not stages["dc_opf_slack"].passed:
        return finish(Verdict.P_IMBALANCE)

    try:
        ac = ac_opf(model, slack=True)
    except Exception as exc:
        raise DiagnosisError("ac_opf_slack", exc) from exc
    ranked = ac.ranked_slack()
    top = ranked[0][1] if ranked else 0.0
    stages["ac_opf_slack"] = StageResult(
        "ac_opf_slack", True, ac.ok and top <= tol.slack, top, ranked,
        f"status={ac.status.value} max_sp={np.max(np.abs(ac.sp), initial=0):.6g} "
        f"max_sq={np.max(np.abs(ac.sq), initial=0):.6g}")
    if stages["ac_opf_slack"].passed:
        return finish(Verdict.FEASIBLE)

    anchored = _with_dispatch(model, dc)
    try:
        delta = compare_solutions(ac_pf(anchored), dc_pf(anchored))
    except Exception as exc:
        raise DiagnosisError("ac_dc_pf_compare", exc) from exc
    ranked = _ranked(delta.gen_ids, delta.dpg)
    top = ranked[0][1] if ranked else 0.0
    s = delta.summary()
    stages["ac_dc_pf_compare"] = StageResult(
        "ac_dc_pf_compare", True, top <= tol.setpoint, top, ranked,
        f"max_dvm={s['max_dvm']:.6g} max_dva_deg={s['max_dva']:.6g}")

    try:
        _, gslack, resid = gen_slack_pf(anchored)
    except Exception as exc:
        raise DiagnosisError("gen_slack_pf", exc) from exc
    ranked = _ranked(gslack.keys(), gslack.values())
    top = ranked[0][1] if ranked else 0.0
    stages["gen_slack_pf"] = StageResult("gen_slack_pf", True, top <= tol.setpoint, top, ranked,
                                         f"bus_residual={resid:.6g}")

    p_max = float(np.max(np.abs(ac.sp), initial=0.0))
    q_max = float(np.max(np.abs(ac.sq), initial=0.0))
    if q_max >= p_max:
        return finish(Verdict.Q_IMBALANCE)
    if resid <= tol.slack and not stages["gen_slack_pf"].passed:
        return finish(Verdict.GEN_SETPOINT_MISMATCH)
    return finish(Verdict.P_IMBALANCE)
