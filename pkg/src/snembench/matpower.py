"""MATPOWER case file reader and writer.

Only literal matrix, cell and scalar assignments of the form ``mpc.<name> = ...``
are understood. Besides the standard ``bus``, ``gen``, ``branch`` and
``gencost`` tables, the writer emits a few extension fields that standard
MATPOWER tools ignore but that make a round trip lossless:

``mpc.load`` / ``mpc.shunt``
    individual loads ``[bus Pd Qd status]`` and shunts ``[bus Gs Bs status]``
    (MW / MVAr); the bus table still carries the per-bus aggregates.
``mpc.branch_shunt``
    ``[g_fr b_fr g_to b_to]`` per branch (pu), written only when some branch
    has shunt conductance or asymmetric charging.
``mpc.branch_origin``, ``mpc.genkind``, ``mpc.genfuel``, ``mpc.area_name``
    cell arrays of provenance tags, generator class, fuel and area names.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from snembench.netmodel import (
    Branch,
    BranchOrigin,
    Bus,
    BusType,
    FuelCategory,
    Gen,
    GenKind,
    Load,
    NetworkModel,
    Shunt,
    DEFAULT_ANGLE_BOUND,
)

BUS_COLS = 13
GEN_COLS = 21
BRANCH_COLS = 13
GEN_EXTRA = GEN_COLS - 10

_TRANSFORMER_ORIGINS = (BranchOrigin.XFMR2W, BranchOrigin.XFMR3W_LEG)
_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_FUNCTION = re.compile(r"^\s*function\s+mpc\s*=\s*(\w+)")


class MatpowerError(ValueError):
    """Malformed case text; ``line`` is the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class _Field:
    kind: str  # "scalar", "matrix" or "cell"
    line: int
    rows: list[tuple[int, list[str]]]


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def _scan(text: str) -> tuple[str | None, dict[str, _Field]]:
    name = None
    fields: dict[str, _Field] = {}
    current: _Field | None = None
    closer = ""
    row: list[str] = []
    row_line = 0

    def flush():
        nonlocal row
        if row:
            current.rows.append((row_line, row))
        row = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if current is None:
            if name is None and (m := _FUNCTION.match(line)):
                name = m.group(1)
                continue
            m = _ASSIGN.match(line)
            if not m:
                continue
            key, rest = m.group(1), m.group(2).strip()
            if rest[:1] in "[{":
                current = _Field("matrix" if rest[0] == "[" else "cell", lineno, [])
                closer = "]" if rest[0] == "[" else "}"
                fields[key] = current
                line = rest[1:]
            else:
                value = rest.split(";")[0].strip()
                fields[key] = _Field("scalar", lineno, [(lineno, [value])])
                continue
        # inside a block: split on row separators, watch for the closer
        for tok in re.finditer(r"'(?:[^']|'')*'|;|\]|\}|[^\s,;\]\}']+", line):
            t = tok.group(0)
            if t == ";":
                flush()
            elif t == closer:
                flush()
                current = None
                break
            elif t in "]}":
                raise MatpowerError(f"unexpected '{t}'", lineno)
            else:
                if not row:
                    row_line = lineno
                row.append(t)
        if current is not None:
            flush()
    if current is not None:
        raise MatpowerError(f"unterminated block opened at line {current.line}", current.line)
    return name, fields


def _numeric(field: _Field, label: str, min_cols: int) -> list[tuple[int, list[float]]]:
    out = []
    for lineno, toks in field.rows:
        if len(toks) < min_cols:
            raise MatpowerError(f"{label} row has {len(toks)} columns, need at least {min_cols}", lineno)
        try:
            vals = [float(t) for t in toks]
        except ValueError as exc:
            raise MatpowerError(f"{label} row: {exc}", lineno) from None
        out.append((lineno, vals))
    return out


def _cell_strings(field: _Field | None) -> list[list[str]]:
    if field is None:
        return []
    return [[t.strip("'\"").replace("''", "'") for t in toks] for _, toks in field.rows]


def parse_matpower(text: str) -> NetworkModel:
    """Parse MATPOWER case text into a :class:`NetworkModel`."""
    name, fields = _scan(text)
    for required in ("baseMVA", "bus", "branch"):
        if required not in fields:
            raise MatpowerError(f"missing mpc.{required}")
    base_field = fields["baseMVA"]
    try:
        base = float(base_field.rows[0][1][0])
    except ValueError:
        raise MatpowerError("baseMVA is not numeric", base_field.line) from None
    if base <= 0:
        raise MatpowerError("baseMVA must be positive", base_field.line)

    buses: dict[int, Bus] = {}
    bus_rows = _numeric(fields["bus"], "bus", BUS_COLS)
    for lineno, v in bus_rows:
        bid = int(v[0])
        if bid in buses:
            raise MatpowerError(f"duplicate bus id {bid}", lineno)
        try:
            btype = BusType(int(v[1]))
        except ValueError:
            raise MatpowerError(f"bus {bid}: invalid type {v[1]}", lineno) from None
        buses[bid] = Bus(
            id=bid, bus_type=btype, area=int(v[6]), vm=v[7], va=math.radians(v[8]),
            base_kv=v[9], zone=int(v[10]), vmax=v[11], vmin=v[12],
        )

    def check_bus(bid: int, lineno: int, what: str) -> int:
        if bid not in buses:
            raise MatpowerError(f"{what} references unknown bus {bid}", lineno)
        return bid

    loads: dict[int, Load] = {}
    shunts: dict[int, Shunt] = {}
    if "load" in fields:
        for k, (lineno, v) in enumerate(_numeric(fields["load"], "load", 4), start=1):
            loads[k] = Load(check_bus(int(v[0]), lineno, "load"), v[1] / base, v[2] / base, bool(v[3]))
    else:
        for lineno, v in bus_rows:
            if v[2] != 0 or v[3] != 0:
                loads[len(loads) + 1] = Load(int(v[0]), v[2] / base, v[3] / base)
    if "shunt" in fields:
        for k, (lineno, v) in enumerate(_numeric(fields["shunt"], "shunt", 4), start=1):
            shunts[k] = Shunt(check_bus(int(v[0]), lineno, "shunt"), v[1] / base, v[2] / base, bool(v[3]))
    else:
        for lineno, v in bus_rows:
            if v[4] != 0 or v[5] != 0:
                shunts[len(shunts) + 1] = Shunt(int(v[0]), v[4] / base, v[5] / base)

    origins = [r[0] for r in _cell_strings(fields.get("branch_origin"))]
    br_rows = _numeric(fields["branch"], "branch", 11)
    shunt_rows = _numeric(fields["branch_shunt"], "branch_shunt", 4) if "branch_shunt" in fields else None
    if origins and len(origins) != len(br_rows):
        raise MatpowerError("branch_origin length does not match branch table", fields["branch_origin"].line)
    if shunt_rows is not None and len(shunt_rows) != len(br_rows):
        raise MatpowerError("branch_shunt length does not match branch table", fields["branch_shunt"].line)
    branches: dict[int, Branch] = {}
    for k, (lineno, v) in enumerate(br_rows, start=1):
        f = check_bus(int(v[0]), lineno, "branch")
        t = check_bus(int(v[1]), lineno, "branch")
        if origins:
            try:
                origin = BranchOrigin(origins[k - 1])
            except ValueError:
                raise MatpowerError(f"unknown branch origin {origins[k - 1]!r}", fields["branch_origin"].line) from None
            is_xf = origin in _TRANSFORMER_ORIGINS
        else:
            is_xf = v[8] != 0
            origin = BranchOrigin.XFMR2W if is_xf else BranchOrigin.LINE
        if shunt_rows is not None:
            g_fr, b_fr, g_to, b_to = shunt_rows[k - 1][1][:4]
        else:
            g_fr, b_fr, g_to, b_to = 0.0, v[4] / 2, 0.0, v[4] / 2
        if len(v) >= 13:
            angmin, angmax = math.radians(v[11]), math.radians(v[12])
        else:
            angmin, angmax = -DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND
        branches[k] = Branch(
            f_bus=f, t_bus=t, r=v[2], x=v[3], g_fr=g_fr, b_fr=b_fr, g_to=g_to, b_to=b_to,
            rate_a=v[5], rate_b=v[6], rate_c=v[7], tap=v[8] if v[8] != 0 else 1.0,
            shift=math.radians(v[9]), status=bool(v[10]), is_transformer=is_xf,
            origin=origin, angmin=angmin, angmax=angmax,
        )

    gen_rows = _numeric(fields["gen"], "gen", 10) if "gen" in fields else []
    kinds = [r[0] for r in _cell_strings(fields.get("genkind"))]
    fuels = [r[0] for r in _cell_strings(fields.get("genfuel"))]
    costs = _numeric(fields["gencost"], "gencost", 4) if "gencost" in fields else []
    if costs and len(costs) < len(gen_rows):
        raise MatpowerError("fewer gencost rows than generators", fields["gencost"].line)
    gens: dict[int, Gen] = {}
    for k, (lineno, v) in enumerate(gen_rows, start=1):
        bus = check_bus(int(v[0]), lineno, "gen")
        extra = tuple(v[10:GEN_COLS]) + (0.0,) * max(0, GEN_COLS - len(v))
        if not any(extra):
            extra = ()
        cost: tuple[float, ...] = ()
        startup = shutdown = 0.0
        if costs:
            clineno, c = costs[k - 1]
            if int(c[0]) != 2:
                raise MatpowerError(f"gencost model {int(c[0])} not supported (polynomial only)", clineno)
            n = int(c[3])
            if len(c) < 4 + n:
                raise MatpowerError(f"gencost row declares {n} coefficients but has {len(c) - 4}", clineno)
            cost = tuple(c[4:4 + n])
            startup, shutdown = c[1], c[2]
        kind = GenKind(kinds[k - 1]) if kinds else GenKind.SYNCHRONOUS
        fuel = FuelCategory(fuels[k - 1]) if fuels and fuels[k - 1] else None
        gens[k] = Gen(
            bus=bus, pg=v[1] / base, qg=v[2] / base, qmax=v[3] / base, qmin=v[4] / base,
            vg=v[5], mbase=v[6], status=v[7] > 0, pmax=v[8] / base, pmin=v[9] / base,
            kind=kind, fuel=fuel, cost=cost, startup=startup, shutdown=shutdown, extra=extra,
        )

    areas = {}
    for row in _cell_strings(fields.get("area_name")):
        if len(row) >= 2:
            areas[int(float(row[0]))] = " ".join(row[1:])

    return NetworkModel(base_mva=base, buses=buses, branches=branches, gens=gens,
                        loads=loads, shunts=shunts, areas=areas, name=name or "case")


def read_matpower(path: str | Path) -> NetworkModel:
    return parse_matpower(Path(path).read_text(encoding="utf-8"))


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return "%.15g" % x


def _row(values) -> str:
    return "\t" + "\t".join(_fmt(v) for v in values) + ";"


def write_matpower(model: NetworkModel) -> str:
    """Serialize a model as MATPOWER case text (deterministic, sorted by id)."""
    base = model.base_mva
    name = re.sub(r"\W", "_", model.name) or "case"
    out = [f"function mpc = {name}", "mpc.version = '2';", "", f"mpc.baseMVA = {_fmt(base)};", ""]

    load_by_bus: dict[int, complex] = {}
    for ld in model.loads.values():
        if ld.status:
            load_by_bus[ld.bus] = load_by_bus.get(ld.bus, 0j) + complex(ld.pd, ld.qd)
    sh_by_bus: dict[int, complex] = {}
    for sh in model.shunts.values():
        if sh.status:
            sh_by_bus[sh.bus] = sh_by_bus.get(sh.bus, 0j) + complex(sh.gs, sh.bs)

    out.append("%% bus data")
    out.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    out.append("mpc.bus = [")
    for bid in sorted(model.buses):
        b = model.buses[bid]
        s = load_by_bus.get(bid, 0j) * base
        y = sh_by_bus.get(bid, 0j) * base
        out.append(_row([bid, int(b.bus_type), s.real, s.imag, y.real, y.imag, b.area, b.vm,
                         math.degrees(b.va), b.base_kv, b.zone, b.vmax, b.vmin]))
    out += ["];", ""]

    gen_ids = sorted(model.gens)
    out.append("%% generator data")
    out.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\t"
               "Qc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf")
    out.append("mpc.gen = [")
    for k in gen_ids:
        g = model.gens[k]
        extra = tuple(g.extra[:GEN_EXTRA]) + (0.0,) * max(0, GEN_EXTRA - len(g.extra))
        out.append(_row([g.bus, g.pg * base, g.qg * base, g.qmax * base, g.qmin * base, g.vg,
                         g.mbase, int(g.status), g.pmax * base, g.pmin * base, *extra]))
    out += ["];", ""]

    br_ids = sorted(model.branches)
    out.append("%% branch data")
    out.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    out.append("mpc.branch = [")
    for k in br_ids:
        br = model.branches[k]
        tap = br.tap if (br.is_transformer or br.tap != 1.0) else 0.0
        out.append(_row([br.f_bus, br.t_bus, br.r, br.x, br.b_fr + br.b_to, br.rate_a, br.rate_b,
                         br.rate_c, tap, math.degrees(br.shift), int(br.status),
                         math.degrees(br.angmin), math.degrees(br.angmax)]))
    out += ["];", ""]

    if any(g.cost for g in model.gens.values()):
        out.append("%% generator cost data (polynomial)")
        out.append("mpc.gencost = [")
        for k in gen_ids:
            g = model.gens[k]
            out.append(_row([2, g.startup, g.shutdown, len(g.cost), *g.cost]))
        out += ["];", ""]

    out.append("%% extensions")
    out.append("%\tbus\tPd\tQd\tstatus")
    out.append("mpc.load = [")
    for k in sorted(model.loads):
        ld = model.loads[k]
        out.append(_row([ld.bus, ld.pd * base, ld.qd * base, int(ld.status)]))
    out += ["];", ""]
    out.append("%\tbus\tGs\tBs\tstatus")
    out.append("mpc.shunt = [")
    for k in sorted(model.shunts):
        sh = model.shunts[k]
        out.append(_row([sh.bus, sh.gs * base, sh.bs * base, int(sh.status)]))
    out += ["];", ""]

    if any(br.g_fr or br.g_to or br.b_fr != br.b_to for br in model.branches.values()):
        out.append("%\tg_fr\tb_fr\tg_to\tb_to")
        out.append("mpc.branch_shunt = [")
        for k in br_ids:
            br = model.branches[k]
            out.append(_row([br.g_fr, br.b_fr, br.g_to, br.b_to]))
        out += ["];", ""]

    out.append("mpc.branch_origin = {")
    out += [f"\t'{model.branches[k].origin.value}';" for k in br_ids]
    out += ["};", ""]
    out.append("mpc.genkind = {")
    out += [f"\t'{model.gens[k].kind.value}';" for k in gen_ids]
    out += ["};", ""]
    if any(g.fuel for g in model.gens.values()):
        out.append("mpc.genfuel = {")
        out += [f"\t'{model.gens[k].fuel.value if model.gens[k].fuel else ''}';" for k in gen_ids]
        out += ["};", ""]
    if model.areas:
        out.append("mpc.area_name = {")
        out += [f"\t{a}\t'{model.areas[a]}';" for a in sorted(model.areas)]
        out += ["};", ""]
    return "\n".join(out)


def save_matpower(model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(write_matpower(model), encoding="utf-8")
