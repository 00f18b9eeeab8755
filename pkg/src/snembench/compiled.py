"""Dense indexing and sparse admittance matrices for the solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from snembench.netmodel import BusType, NetworkModel


@dataclass
class Compiled:
    model: NetworkModel
    bus_ids: np.ndarray
    index: dict[int, int]
    bus_type: np.ndarray  # BusType codes after gen-presence fixups
    vmin: np.ndarray
    vmax: np.ndarray
    vm0: np.ndarray  # stored magnitudes with generator setpoints applied
    va0: np.ndarray
    branch_ids: np.ndarray
    f: np.ndarray
    t: np.ndarray
    ys: np.ndarray
    y_fr: np.ndarray
    y_to: np.ndarray
    tap: np.ndarray  # complex ratio tap * exp(j shift)
    rate_a: np.ndarray  # pu on base_mva, 0 = unconstrained
    angmin: np.ndarray
    angmax: np.ndarray
    Ybus: sp.csr_matrix
    Yf: sp.csr_matrix
    Yt: sp.csr_matrix
    ysh: np.ndarray
    sd: np.ndarray  # load per bus
    gen_ids: np.ndarray
    gen_bus: np.ndarray
    Cg: sp.csr_matrix  # bus x gen incidence

    @property
    def nb(self) -> int:
        return len(self.bus_ids)

    @property
    def nl(self) -> int:
        return len(self.branch_ids)

    @property
    def ng(self) -> int:
        return len(self.gen_ids)

    @property
    def ref(self) -> np.ndarray:
        return np.flatnonzero(self.bus_type == BusType.REF)

    @property
    def pv(self) -> np.ndarray:
        return np.flatnonzero(self.bus_type == BusType.PV)

    @property
    def pq(self) -> np.ndarray:
        return np.flatnonzero(self.bus_type == BusType.PQ)

    def gen_attr(self, name: str) -> np.ndarray:
        return np.array([getattr(self.model.gens[g], name) for g in self.gen_ids], dtype=float)

    def sbus(self, pg: np.ndarray | None = None, qg: np.ndarray | None = None) -> np.ndarray:
        """Net scheduled complex injection per bus."""
        pg = self.gen_attr("pg") if pg is None else pg
        qg = self.gen_attr("qg") if qg is None else qg
        return self.Cg @ (pg + 1j * qg) - self.sd


def compile_model(model: NetworkModel) -> Compiled:
    """Index in-service components and build Ybus, Yf, Yt."""
    bus_ids = np.array(sorted(b for b, bus in model.buses.items() if bus.in_service), dtype=int)
    index = {int(b): i for i, b in enumerate(bus_ids)}
    nb = len(bus_ids)
    buses = [model.buses[int(b)] for b in bus_ids]

    gen_ids = np.array(sorted(k for k, g in model.gens.items() if g.status and g.bus in index), dtype=int)
    gen_bus = np.array([index[model.gens[int(k)].bus] for k in gen_ids], dtype=int)
    ng = len(gen_ids)
    Cg = sp.csr_matrix((np.ones(ng), (gen_bus, np.arange(ng))), shape=(nb, ng))

    bus_type = np.array([int(b.bus_type) for b in buses], dtype=int)
    has_gen = np.zeros(nb, dtype=bool)
    has_gen[gen_bus] = True
    bus_type[(bus_type == BusType.PV) & ~has_gen] = BusType.PQ
    vm0 = np.array([b.vm for b in buses], dtype=float)
    va0 = np.array([b.va for b in buses], dtype=float)
    # first in-service generator at a voltage-controlled bus sets its magnitude
    for k, i in zip(gen_ids[::-1], gen_bus[::-1]):
        if bus_type[i] in (BusType.PV, BusType.REF):
            vm0[i] = model.gens[int(k)].vg

    branch_ids = np.array(sorted(k for k, br in model.branches.items()
                                 if br.status and br.f_bus in index and br.t_bus in index), dtype=int)
    brs = [model.branches[int(k)] for k in branch_ids]
    nl = len(brs)
    f = np.array([index[b.f_bus] for b in brs], dtype=int)
    t = np.array([index[b.t_bus] for b in brs], dtype=int)
    ys = np.array([1.0 / complex(b.r, b.x) for b in brs], dtype=complex)
    y_fr = np.array([complex(b.g_fr, b.b_fr) for b in brs], dtype=complex)
    y_to = np.array([complex(b.g_to, b.b_to) for b in brs], dtype=complex)
    tap = np.array([b.tap * np.exp(1j * b.shift) for b in brs], dtype=complex)

    Ytt = ys + y_to
    Yff = (ys + y_fr) / (tap * np.conj(tap))
    Yft = -ys / np.conj(tap)
    Ytf = -ys / tap
    rows = np.arange(nl)
    Yf = sp.csr_matrix((np.r_[Yff, Yft], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, nb))
    Yt = sp.csr_matrix((np.r_[Ytf, Ytt], (np.r_[rows, rows], np.r_[f, t])), shape=(nl, nb))

    ysh = np.zeros(nb, dtype=complex)
    for sh in model.shunts.values():
        if sh.status and sh.bus in index:
            ysh[index[sh.bus]] += complex(sh.gs, sh.bs)
    sd = np.zeros(nb, dtype=complex)
    for ld in model.loads.values():
        if ld.status and ld.bus in index:
            sd[index[ld.bus]] += complex(ld.pd, ld.qd)

    Cf = sp.csr_matrix((np.ones(nl), (rows, f)), shape=(nl, nb))
    Ct = sp.csr_matrix((np.ones(nl), (rows, t)), shape=(nl, nb))
    Ybus = (Cf.T @ Yf + Ct.T @ Yt + sp.diags(ysh)).tocsr()

    return Compiled(
        model=model, bus_ids=bus_ids, index=index, bus_type=bus_type,
        vmin=np.array([b.vmin for b in buses]), vmax=np.array([b.vmax for b in buses]),
        vm0=vm0, va0=va0, branch_ids=branch_ids, f=f, t=t, ys=ys, y_fr=y_fr, y_to=y_to,
        tap=tap, rate_a=np.array([b.rate_a for b in brs]) / model.base_mva,
        angmin=np.array([b.angmin for b in brs]), angmax=np.array([b.angmax for b in brs]),
        Ybus=Ybus, Yf=Yf, Yt=Yt, ysh=ysh, sd=sd, gen_ids=gen_ids, gen_bus=gen_bus, Cg=Cg,
    )


def dsbus_dv(Ybus: sp.csr_matrix, V: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Partial derivatives of bus injections w.r.t. magnitude and angle."""
    Ibus = Ybus @ V
    dV = sp.diags(V)
    dI = sp.diags(Ibus)
    dVn = sp.diags(V / np.abs(V))
    dS_dVm = dV @ (Ybus @ dVn).conj() + dI.conj() @ dVn
    dS_dVa = 1j * dV @ (dI - Ybus @ dV).conj()
    return dS_dVm.tocsr(), dS_dVa.tocsr()
