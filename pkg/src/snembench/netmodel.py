"""Network data model shared by every stage of the pipeline.

All electrical quantities are stored in per-unit on ``NetworkModel.base_mva``
except thermal ratings (MVA), generator machine base (MVA) and cost
coefficients, which are kept in physical units. Angles are radians.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_ANGLE_BOUND = math.radians(30.0)

AREA_NAMES = {
    1000: "New South Wales",
    2000: "Victoria",
    3000: "Queensland",
    4000: "South Australia",
    5000: "Tasmania",
}


class NetworkError(ValueError):
    """Raised when a model violates a structural invariant."""


class BusType(IntEnum):
    PQ = 1
    PV = 2
    REF = 3
    ISOLATED = 4


class BranchOrigin(str, Enum):
    LINE = "line"
    XFMR2W = "xfmr2w"
    XFMR3W_LEG = "xfmr3w_leg"
    JOINED = "joined"


class GenKind(str, Enum):
    SYNCHRONOUS = "sync"
    NETWORK_SOURCE = "netsrc"


class FuelCategory(str, Enum):
    BLACK_COAL = "black_coal"
    BROWN_COAL = "brown_coal"
    NATURAL_GAS = "natural_gas"
    HYDRO = "hydro"
    WIND = "wind"
    SOLAR = "solar"


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType = BusType.PQ
    base_kv: float = 1.0
    area: int = 1
    vm: float = 1.0
    va: float = 0.0
    vmin: float = 0.9
    vmax: float = 1.1
    zone: int = 1

    @property
    def in_service(self) -> bool:
        return self.bus_type != BusType.ISOLATED


@dataclass(frozen=True)
class Branch:
    """Unified line/transformer pi-model.

    The ideal transformer (``tap``, ``shift``) sits on the from-side; the
    from-end shunt ``g_fr + j b_fr`` is on its secondary, as in MATPOWER.
    """

    f_bus: int
    t_bus: int
    r: float
    x: float
    g_fr: float = 0.0
    b_fr: float = 0.0
    g_to: float = 0.0
    b_to: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    rate_a: float = 0.0
    rate_b: float = 0.0
    rate_c: float = 0.0
    status: bool = True
    is_transformer: bool = False
    origin: BranchOrigin = BranchOrigin.LINE
    angmin: float = -DEFAULT_ANGLE_BOUND
    angmax: float = DEFAULT_ANGLE_BOUND

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)

    @property
    def charging(self) -> float:
        """Total shunt susceptance magnitude of both ends."""
        return abs(self.b_fr) + abs(self.b_to)

    @property
    def x_over_r(self) -> float:
        if self.r == 0.0:
            return math.inf
        return abs(self.x) / abs(self.r)


@dataclass(frozen=True)
class Gen:
    bus: int
    pg: float = 0.0
    qg: float = 0.0
    pmin: float = 0.0
    pmax: float = 0.0
    qmin: float = 0.0
    qmax: float = 0.0
    vg: float = 1.0
    mbase: float = 100.0
    status: bool = True
    kind: GenKind = GenKind.SYNCHRONOUS
    fuel: FuelCategory | None = None
    # polynomial coefficients, highest order first, in $/MW^n/h (MATPOWER model 2)
    cost: tuple[float, ...] = ()
    startup: float = 0.0
    shutdown: float = 0.0
    # MATPOWER gen columns 11-21 (PC1 ... APF), carried verbatim
    extra: tuple[float, ...] = ()


@dataclass(frozen=True)
class Load:
    bus: int
    pd: float = 0.0
    qd: float = 0.0
    status: bool = True


@dataclass(frozen=True)
class Shunt:
    bus: int
    gs: float = 0.0
    bs: float = 0.0
    status: bool = True


@dataclass(frozen=True)
class NetworkModel:
    """Complete per-unit network.

    Treated as immutable: every transformation in the package returns a new
    instance and never mutates the component maps of its input.
    """

    base_mva: float = 100.0
    buses: dict[int, Bus] = field(default_factory=dict)
    branches: dict[int, Branch] = field(default_factory=dict)
    gens: dict[int, Gen] = field(default_factory=dict)
    loads: dict[int, Load] = field(default_factory=dict)
    shunts: dict[int, Shunt] = field(default_factory=dict)
    areas: dict[int, str] = field(default_factory=dict)
    name: str = "case"

    def replace(self, **changes) -> NetworkModel:
        return replace(self, **changes)

    def ref_buses(self) -> list[int]:
        return [i for i, b in self.buses.items() if b.bus_type == BusType.REF]

    def active_branches(self) -> dict[int, Branch]:
        return {k: br for k, br in self.branches.items() if br.status}

    def is_interconnector(self, branch_id: int) -> bool:
        br = self.branches[branch_id]
        return self.buses[br.f_bus].area != self.buses[br.t_bus].area

    def interconnectors(self) -> list[int]:
        return [k for k in self.branches if self.is_interconnector(k)]

    def total_load(self) -> complex:
        return sum((complex(ld.pd, ld.qd) for ld in self.loads.values() if ld.status), 0j)

    def total_shunt(self) -> complex:
        return sum((complex(sh.gs, sh.bs) for sh in self.shunts.values() if sh.status), 0j)

    def total_pmax(self) -> float:
        return sum(g.pmax for g in self.gens.values() if g.status)

    def devices_at(self) -> dict[int, int]:
        """Count of in-service loads, gens and shunts attached to each bus."""
        count: dict[int, int] = defaultdict(int)
        for comp in (self.loads, self.gens, self.shunts):
            for dev in comp.values():
                if dev.status:
                    count[dev.bus] += 1
        return count

    def validate(self) -> None:
        """Check structural invariants, raising :class:`NetworkError`."""
        if self.base_mva <= 0:
            raise NetworkError(f"base_mva must be positive, got {self.base_mva}")
        for bid, bus in self.buses.items():
            if bid != bus.id:
                raise NetworkError(f"bus key {bid} does not match bus id {bus.id}")
            if bus.base_kv <= 0:
                raise NetworkError(f"bus {bid}: base_kv must be positive")
            if not 0 < bus.vmin <= bus.vmax:
                raise NetworkError(f"bus {bid}: invalid voltage bounds [{bus.vmin}, {bus.vmax}]")
        for k, br in self.branches.items():
            for end in (br.f_bus, br.t_bus):
                if end not in self.buses:
                    raise NetworkError(f"branch {k}: unknown bus {end}")
            if br.tap <= 0:
                raise NetworkError(f"branch {k}: tap must be positive")
            if br.status and br.r == 0 and br.x == 0:
                raise NetworkError(f"branch {k}: zero series impedance")
        for label, comp in (("gen", self.gens), ("load", self.loads), ("shunt", self.shunts)):
            for k, dev in comp.items():
                if dev.bus not in self.buses:
                    raise NetworkError(f"{label} {k}: unknown bus {dev.bus}")
        for k, g in self.gens.items():
            if g.pmin > g.pmax or g.qmin > g.qmax:
                raise NetworkError(f"gen {k}: inconsistent capability bounds")
        for island in islands(self):
            refs = [b for b in island if self.buses[b].bus_type == BusType.REF]
            if len(refs) != 1:
                raise NetworkError(
                    f"island containing bus {min(island)} has {len(refs)} reference buses"
                )


def next_id(mapping: dict[int, object]) -> int:
    return max(mapping, default=0) + 1


def islands(model: NetworkModel) -> list[set[int]]:
    """Partition in-service buses by in-service branch connectivity."""
    ids = sorted(b for b, bus in model.buses.items() if bus.in_service)
    if not ids:
        return []
    pos = {b: i for i, b in enumerate(ids)}
    rows, cols = [], []
    for br in model.branches.values():
        if br.status and br.f_bus in pos and br.t_bus in pos:
            rows.append(pos[br.f_bus])
            cols.append(pos[br.t_bus])
    n = len(ids)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, set[int]] = defaultdict(set)
    for b, lab in zip(ids, labels):
        groups[lab].add(b)
    return sorted(groups.values(), key=min)


def rebase(model: NetworkModel, new_base: float) -> NetworkModel:
    """Express every per-unit quantity on a new MVA base."""
    if new_base <= 0:
        raise NetworkError(f"new base must be positive, got {new_base}")
    if new_base == model.base_mva:
        return model.replace()
    s = model.base_mva / new_base  # power and admittance scale
    z = new_base / model.base_mva  # impedance scale
    branches = {
        k: replace(br, r=br.r * z, x=br.x * z, g_fr=br.g_fr * s, b_fr=br.b_fr * s,
                   g_to=br.g_to * s, b_to=br.b_to * s)
        for k, br in model.branches.items()
    }
    gens = {
        k: replace(g, pg=g.pg * s, qg=g.qg * s, pmin=g.pmin * s, pmax=g.pmax * s,
                   qmin=g.qmin * s, qmax=g.qmax * s)
        for k, g in model.gens.items()
    }
    loads = {k: replace(ld, pd=ld.pd * s, qd=ld.qd * s) for k, ld in model.loads.items()}
    shunts = {k: replace(sh, gs=sh.gs * s, bs=sh.bs * s) for k, sh in model.shunts.items()}
    return model.replace(base_mva=new_base, branches=branches, gens=gens,
                         loads=loads, shunts=shunts)


def split_negative_gens(model: NetworkModel) -> NetworkModel:
    """Replace negative-injection generators by a zero generator plus a load.

    Capability bounds are shifted by the moved demand so the set of feasible
    net injections at the bus is unchanged.
    """
    gens = dict(model.gens)
    loads = dict(model.loads)
    lid = next_id(loads)
    for k in sorted(gens):
        g = gens[k]
        if g.pg >= 0:
            continue
        demand = -g.pg
        gens[k] = replace(g, pg=0.0, pmin=g.pmin + demand, pmax=g.pmax + demand)
        loads[lid] = Load(bus=g.bus, pd=demand, qd=0.0, status=g.status)
        lid += 1
    return model.replace(gens=gens, loads=loads)


def net_injection(model: NetworkModel) -> dict[int, complex]:
    """Scheduled net complex injection per bus (gens minus loads), pu."""
    inj: dict[int, complex] = defaultdict(complex)
    for g in model.gens.values():
        if g.status:
            inj[g.bus] += complex(g.pg, g.qg)
    for ld in model.loads.values():
        if ld.status:
            inj[ld.bus] -= complex(ld.pd, ld.qd)
    return dict(inj)
