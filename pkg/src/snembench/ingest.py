"""Relational component tables (CSV export) to network model.

Canonical schema, one file per component; ``status`` accepts
``in/out``, ``1/0`` or ``true/false`` and defaults to in-service.

buses.csv
    bus_id, area, base_kv, type (PQ/PV/REF), vm_pu, va_deg, vmin_pu, vmax_pu[, status]
lines.csv
    line_id, from_bus, to_bus, r_ohm, x_ohm, b_us (total charging, microsiemens)[, status]
transformers2w.csv
    xfmr_id, from_bus, to_bus, s_base_mva, v1_kv, v2_kv, r1_pu, x1_pu, r2_pu, x2_pu,
    rm_pu, xm_pu[, status]  -- impedances on the device base; rm and xm are the
    parallel core-loss resistance and magnetizing reactance, 0 meaning open
transformers3w.csv
    xfmr_id, bus1, bus2, bus3, s_base_mva, v1_kv, v2_kv, v3_kv, r1_pu, x1_pu, r2_pu,
    x2_pu, r3_pu, x3_pu, rm_pu, xm_pu[, status]
generators.csv
    gen_id, bus, kind (sync/netsrc), s_base_mva, p_pu, q_pu, pmin_pu, pmax_pu, qmin_pu,
    qmax_pu, vset_pu[, status]  -- powers on the device base
loads.csv
    load_id, bus, p_mw, q_mvar[, status]
shunts.csv
    shunt_id, bus, g_mw, b_mvar[, status]  -- consumption / injection at 1 pu voltage
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from snembench.equivalencing import (
    EquivalencingError,
    TSection,
    ThreeWinding,
    xfmr2w_to_branch,
    xfmr3w_to_branches,
)
from snembench.netmodel import (
    AREA_NAMES,
    Branch,
    Bus,
    BusType,
    Gen,
    GenKind,
    Load,
    NetworkError,
    NetworkModel,
    Shunt,
)


class IngestError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        head = "; ".join(errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        super().__init__(head + more)


@dataclass
class RawBus:
    row: int
    bus_id: int
    area: int
    base_kv: float
    type: str
    vm_pu: float
    va_deg: float
    vmin_pu: float
    vmax_pu: float
    status: bool = True


@dataclass
class RawLine:
    row: int
    line_id: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float
    b_us: float
    status: bool = True


@dataclass
class RawXfmr2W:
    row: int
    xfmr_id: int
    from_bus: int
    to_bus: int
    s_base_mva: float
    v1_kv: float
    v2_kv: float
    r1_pu: float
    x1_pu: float
    r2_pu: float
    x2_pu: float
    rm_pu: float
    xm_pu: float
    status: bool = True


@dataclass
class RawXfmr3W:
    row: int
    xfmr_id: int
    bus1: int
    bus2: int
    bus3: int
    s_base_mva: float
    v1_kv: float
    v2_kv: float
    v3_kv: float
    r1_pu: float
    x1_pu: float
    r2_pu: float
    x2_pu: float
    r3_pu: float
    x3_pu: float
    rm_pu: float
    xm_pu: float
    status: bool = True


@dataclass
class RawGen:
    row: int
    gen_id: int
    bus: int
    kind: str
    s_base_mva: float
    p_pu: float
    q_pu: float
    pmin_pu: float
    pmax_pu: float
    qmin_pu: float
    qmax_pu: float
    vset_pu: float
    status: bool = True


@dataclass
class RawLoad:
    row: int
    load_id: int
    bus: int
    p_mw: float
    q_mvar: float
    status: bool = True


@dataclass
class RawShunt:
    row: int
    shunt_id: int
    bus: int
    g_mw: float
    b_mvar: float
    status: bool = True


@dataclass
class RawTables:
    buses: list[RawBus] = field(default_factory=list)
    lines: list[RawLine] = field(default_factory=list)
    xfmr2w: list[RawXfmr2W] = field(default_factory=list)
    xfmr3w: list[RawXfmr3W] = field(default_factory=list)
    gens: list[RawGen] = field(default_factory=list)
    loads: list[RawLoad] = field(default_factory=list)
    shunts: list[RawShunt] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        return {f.name: len(getattr(self, f.name)) for f in fields(self)}


TABLE_FILES = {
    "buses": ("buses.csv", RawBus),
    "lines": ("lines.csv", RawLine),
    "xfmr2w": ("transformers2w.csv", RawXfmr2W),
    "xfmr3w": ("transformers3w.csv", RawXfmr3W),
    "gens": ("generators.csv", RawGen),
    "loads": ("loads.csv", RawLoad),
    "shunts": ("shunts.csv", RawShunt),
}

_TRUE = {"1", "in", "true", "yes", "on"}
_FALSE = {"0", "out", "false", "no", "off"}


def _parse_status(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"invalid status {text!r}")


def _convert(value: str, typ) -> object:
    if typ in (int, "int"):
        return int(float(value))
    if typ in (float, "float"):
        return float(value) if value.strip() != "" else 0.0
    if typ in (bool, "bool"):
        return _parse_status(value)
    return value.strip()


def _read_table(path: Path, record_type) -> tuple[list, list[str]]:
    specs = [f for f in fields(record_type) if f.name != "row"]
    required = [f.name for f in specs if f.name != "status"]
    records, errors = [], []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            return [], [f"{path.name}: missing column(s) {', '.join(missing)}"]
        reader.fieldnames = header
        for rowno, row in enumerate(reader, start=2):
            values = {"row": rowno}
            try:
                for f in specs:
                    raw = row.get(f.name)
                    if raw is None or (f.name == "status" and raw.strip() == ""):
                        continue
                    values[f.name] = _convert(raw, f.type)
            except ValueError as exc:
                errors.append(f"{path.name}:{rowno}: column {f.name}: {exc}")
                continue
            records.append(record_type(**values))
    return records, errors


def load_tables(directory: str | Path) -> RawTables:
    """Read every component table from ``directory``."""
    directory = Path(directory)
    tables = RawTables()
    errors: list[str] = []
    for attr, (fname, rtype) in TABLE_FILES.items():
        path = directory / fname
        if not path.is_file():
            errors.append(f"missing file {path}")
            continue
        records, errs = _read_table(path, rtype)
        errors.extend(errs)
        setattr(tables, attr, records)
    if errors:
        raise IngestError(errors)
    return tables


_BUS_TYPES = {"pq": BusType.PQ, "1": BusType.PQ, "pv": BusType.PV, "2": BusType.PV,
              "ref": BusType.REF, "slack": BusType.REF, "3": BusType.REF,
              "isolated": BusType.ISOLATED, "4": BusType.ISOLATED}
_GEN_KINDS = {"sync": GenKind.SYNCHRONOUS, "synchronous": GenKind.SYNCHRONOUS,
              "netsrc": GenKind.NETWORK_SOURCE, "network_source": GenKind.NETWORK_SOURCE,
              "source": GenKind.NETWORK_SOURCE}


def _magnetizing(rm: float, xm: float, scale: float) -> complex | None:
    # core-loss resistance in parallel with magnetizing reactance; 0 = open
    y = (1.0 / rm if rm else 0.0) + (1.0 / complex(0.0, xm) if xm else 0.0)
    if y == 0:
        return None
    return scale / y


def to_network(raw: RawTables, base_mva: float = 100.0, name: str = "case") -> NetworkModel:
    """Convert raw tables to a per-unit model on ``base_mva``.

    Device quantities are first taken per-unit on their own base, then
    rebased to the system base. Three-winding transformers become three legs
    around a new auxiliary bus numbered above the largest source bus id.
    """
    if base_mva <= 0:
        raise IngestError([f"system base must be positive, got {base_mva}"])
    errors: list[str] = []
    buses: dict[int, Bus] = {}
    for rb in raw.buses:
        btype = _BUS_TYPES.get(rb.type.strip().lower())
        if btype is None:
            errors.append(f"buses.csv:{rb.row}: unknown bus type {rb.type!r}")
            continue
        if rb.bus_id in buses:
            errors.append(f"buses.csv:{rb.row}: duplicate bus id {rb.bus_id}")
            continue
        if rb.base_kv <= 0:
            errors.append(f"buses.csv:{rb.row}: non-positive base_kv")
            continue
        buses[rb.bus_id] = Bus(
            id=rb.bus_id, bus_type=btype if rb.status else BusType.ISOLATED,
            base_kv=rb.base_kv, area=rb.area, vm=rb.vm_pu, va=math.radians(rb.va_deg),
            vmin=rb.vmin_pu, vmax=rb.vmax_pu,
        )

    def known(bus: int, where: str) -> bool:
        if bus not in buses:
            errors.append(f"{where}: dangling bus reference {bus}")
            return False
        return True

    branches: dict[int, Branch] = {}
    for ln in raw.lines:
        where = f"lines.csv:{ln.row}"
        if not (known(ln.from_bus, where) & known(ln.to_bus, where)):
            continue
        zbase = buses[ln.from_bus].base_kv ** 2 / base_mva
        b = ln.b_us * 1e-6 * zbase
        branches[len(branches) + 1] = Branch(
            f_bus=ln.from_bus, t_bus=ln.to_bus, r=ln.r_ohm / zbase, x=ln.x_ohm / zbase,
            b_fr=b / 2, b_to=b / 2, status=ln.status,
        )

    for xf in raw.xfmr2w:
        where = f"transformers2w.csv:{xf.row}"
        if not (known(xf.from_bus, where) & known(xf.to_bus, where)):
            continue
        if xf.s_base_mva <= 0:
            errors.append(f"{where}: non-positive device base")
            continue
        scale = base_mva / xf.s_base_mva
        t = TSection(
            z1=complex(xf.r1_pu, xf.x1_pu) * scale,
            z2=complex(xf.r2_pu, xf.x2_pu) * scale,
            z3=_magnetizing(xf.rm_pu, xf.xm_pu, scale),
        )
        v1 = xf.v1_kv / buses[xf.from_bus].base_kv
        v2 = xf.v2_kv / buses[xf.to_bus].base_kv
        try:
            branches[len(branches) + 1] = xfmr2w_to_branch(
                t, v1, v2, xf.from_bus, xf.to_bus, status=xf.status)
        except EquivalencingError as exc:
            errors.append(f"{where}: {exc}")

    aux_id = max(buses, default=0)
    aux_buses: dict[int, Bus] = {}
    for xf in raw.xfmr3w:
        where = f"transformers3w.csv:{xf.row}"
        ends = (xf.bus1, xf.bus2, xf.bus3)
        if not all([known(b, where) for b in ends]):
            continue
        if xf.s_base_mva <= 0:
            errors.append(f"{where}: non-positive device base")
            continue
        scale = base_mva / xf.s_base_mva
        tw = ThreeWinding(
            z1=complex(xf.r1_pu, xf.x1_pu) * scale,
            z2=complex(xf.r2_pu, xf.x2_pu) * scale,
            z3=complex(xf.r3_pu, xf.x3_pu) * scale,
            zm=_magnetizing(xf.rm_pu, xf.xm_pu, scale),
            v1=xf.v1_kv / buses[xf.bus1].base_kv,
            v2=xf.v2_kv / buses[xf.bus2].base_kv,
            v3=xf.v3_kv / buses[xf.bus3].base_kv,
        )
        aux_id += 1
        try:
            legs, aux = xfmr3w_to_branches(tw, ends, aux_id, existing=buses, aux_kv=xf.v1_kv,
                                           status=xf.status)
        except EquivalencingError as exc:
            errors.append(f"{where}: {exc}")
            continue
        if not xf.status:
            aux = replace(aux, bus_type=BusType.ISOLATED)
        aux_buses[aux.id] = aux
        for leg in legs:
            branches[len(branches) + 1] = leg
    buses.update(aux_buses)

    gens: dict[int, Gen] = {}
    for rg in raw.gens:
        where = f"generators.csv:{rg.row}"
        if not known(rg.bus, where):
            continue
        kind = _GEN_KINDS.get(rg.kind.strip().lower())
        if kind is None:
            errors.append(f"{where}: unknown generator kind {rg.kind!r}")
            continue
        if rg.s_base_mva <= 0:
            errors.append(f"{where}: non-positive device base")
            continue
        s = rg.s_base_mva / base_mva
        gens[len(gens) + 1] = Gen(
            bus=rg.bus, pg=rg.p_pu * s, qg=rg.q_pu * s, pmin=rg.pmin_pu * s, pmax=rg.pmax_pu * s,
            qmin=rg.qmin_pu * s, qmax=rg.qmax_pu * s, vg=rg.vset_pu, mbase=rg.s_base_mva,
            status=rg.status, kind=kind,
        )

    loads: dict[int, Load] = {}
    for rl in raw.loads:
        if known(rl.bus, f"loads.csv:{rl.row}"):
            loads[len(loads) + 1] = Load(rl.bus, rl.p_mw / base_mva, rl.q_mvar / base_mva, rl.status)
    shunts: dict[int, Shunt] = {}
    for rs in raw.shunts:
        if known(rs.bus, f"shunts.csv:{rs.row}"):
            shunts[len(shunts) + 1] = Shunt(rs.bus, rs.g_mw / base_mva, rs.b_mvar / base_mva, rs.status)

    if errors:
        raise IngestError(errors)
    areas = {a: AREA_NAMES.get(a, f"area {a}") for a in sorted({b.area for b in buses.values()})}
    model = NetworkModel(base_mva=base_mva, buses=buses, branches=branches, gens=gens,
                         loads=loads, shunts=shunts, areas=areas, name=name)
    try:
        model.validate()
    except NetworkError as exc:
        raise IngestError([str(exc)]) from None
    return model
