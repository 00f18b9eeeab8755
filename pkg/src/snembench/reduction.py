"""Topology reduction: ideal-line/breaker removal and degree-2 series joining."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

from snembench.netmodel import Branch, BranchOrigin, BusType, NetworkModel, Shunt, next_id

_TYPE_RANK = {BusType.PQ: 0, BusType.PV: 1, BusType.REF: 2}


@dataclass(frozen=True)
class ReductionConfig:
    z_small: float = 0.01  # pu
    b_small: float = 0.01  # pu
    xr_high: float = 100.0
    # move the charging of removed branches onto a bus shunt instead of dropping it
    lump_charging: bool = True

    def __post_init__(self):
        for name in ("z_small", "b_small", "xr_high"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ReductionEvent:
    rule: str  # "ideal_line", "self_loop", "lumped_charging" or "join"
    bus_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]
    detail: str = ""

    def as_dict(self) -> dict:
        return {"rule": self.rule, "bus_ids": list(self.bus_ids),
                "branch_ids": list(self.branch_ids), "detail": self.detail}


@dataclass
class ReductionLog:
    events: list[ReductionEvent] = field(default_factory=list)

    def add(self, rule: str, buses, branches, detail: str = "") -> None:
        self.events.append(ReductionEvent(rule, tuple(buses), tuple(branches), detail))

    def count(self, rule: str) -> int:
        return sum(e.rule == rule for e in self.events)

    def extend(self, other: ReductionLog) -> None:
        self.events.extend(other.events)


def is_ideal(br: Branch, cfg: ReductionConfig) -> bool:
    """Breaker-like line: tiny impedance or extreme X/R, with negligible charging."""
    if br.is_transformer:
        return False
    shunt = abs(complex(br.g_fr + br.g_to, br.b_fr + br.b_to))
    if shunt >= cfg.b_small:
        return False
    return abs(br.z) < cfg.z_small or br.x_over_r > cfg.xr_high


def _merge(model: NetworkModel, keep: int, gone: int, removed: int, log: ReductionLog) -> NetworkModel:
    """Fold bus ``gone`` into ``keep``: devices reattached, branches re-ended."""
    bk, bg = model.buses[keep], model.buses[gone]
    bus_type = max((bk.bus_type, bg.bus_type), key=lambda t: _TYPE_RANK.get(t, -1))
    vmin, vmax = max(bk.vmin, bg.vmin), min(bk.vmax, bg.vmax)
    if vmin > vmax:
        vmin, vmax = bk.vmin, bk.vmax
    buses = dict(model.buses)
    buses[keep] = replace(bk, bus_type=bus_type, vmin=vmin, vmax=vmax)
    del buses[gone]

    def move(comp):
        return {k: (replace(d, bus=keep) if d.bus == gone else d) for k, d in comp.items()}

    branches = {}
    shunts = move(model.shunts)
    for k, br in model.branches.items():
        f = keep if br.f_bus == gone else br.f_bus
        t = keep if br.t_bus == gone else br.t_bus
        if f == t:
            if br.status and k != removed:
                log.add("self_loop", (keep, gone), (k,), "branch collapsed by merge")
            y = complex(br.g_fr + br.g_to, br.b_fr + br.b_to)
            if br.status and y != 0:
                sid = next_id(shunts)
                shunts[sid] = Shunt(bus=keep, gs=y.real, bs=y.imag)
                log.add("lumped_charging", (keep,), (k,), f"shunt {sid}")
            continue
        branches[k] = replace(br, f_bus=f, t_bus=t) if (f, t) != (br.f_bus, br.t_bus) else br
    return model.replace(buses=buses, branches=branches, gens=move(model.gens),
                         loads=move(model.loads), shunts=shunts)


def remove_ideal_lines(model: NetworkModel, cfg: ReductionConfig | None = None
                       ) -> tuple[NetworkModel, ReductionLog]:
    """Eliminate ideal lines and breakers by merging their end buses.

    The surviving bus is the lower id; it takes the tighter voltage bounds
    and the stronger type (REF over PV over PQ). Repeats until no ideal
    in-service line remains.
    """
    cfg = cfg or ReductionConfig()
    log = ReductionLog()
    while True:
        hit = next((k for k in sorted(model.branches)
                    if model.branches[k].status and is_ideal(model.branches[k], cfg)), None)
        if hit is None:
            return model, log
        br = model.branches[hit]
        keep, gone = min(br.f_bus, br.t_bus), max(br.f_bus, br.t_bus)
        log.add("ideal_line", (keep, gone), (hit,), f"|z|={abs(br.z):.6g} x/r={br.x_over_r:.6g}")
        if not cfg.lump_charging:
            br = replace(br, g_fr=0.0, g_to=0.0, b_fr=0.0, b_to=0.0)
            model = model.replace(branches={**model.branches, hit: br})
        model = _merge(model, keep, gone, hit, log)


def _charging_at(br: Branch, bus: int) -> complex:
    return complex(br.g_fr, br.b_fr) if br.f_bus == bus else complex(br.g_to, br.b_to)


def _joined(b1: Branch, b2: Branch, a: int, mid: int, c: int) -> Branch:
    inner = (_charging_at(b1, mid) + _charging_at(b2, mid)) / 2
    y_fr = _charging_at(b1, a) + inner
    y_to = _charging_at(b2, c) + inner

    def min_rate(r1, r2):
        rated = [r for r in (r1, r2) if r > 0]
        return min(rated) if rated else 0.0

    def ang(v1, v2):
        return max(-2 * math.pi, min(2 * math.pi, v1 + v2))

    # angle bounds are oriented from -> to; flip a branch traversed backwards
    lo1, hi1 = (b1.angmin, b1.angmax) if b1.f_bus == a else (-b1.angmax, -b1.angmin)
    lo2, hi2 = (b2.angmin, b2.angmax) if b2.f_bus == mid else (-b2.angmax, -b2.angmin)
    return Branch(
        f_bus=a, t_bus=c, r=b1.r + b2.r, x=b1.x + b2.x,
        g_fr=y_fr.real, b_fr=y_fr.imag, g_to=y_to.real, b_to=y_to.imag,
        rate_a=min_rate(b1.rate_a, b2.rate_a), rate_b=min_rate(b1.rate_b, b2.rate_b),
        rate_c=min_rate(b1.rate_c, b2.rate_c), origin=BranchOrigin.JOINED,
        angmin=ang(lo1, lo2), angmax=ang(hi1, hi2),
    )


def join_degree2(model: NetworkModel) -> tuple[NetworkModel, ReductionLog]:
    """Replace series line pairs through bare degree-2 buses by one branch.

    A bus qualifies when exactly two branches touch it (both in service and
    not transformers), nothing else is attached, it is not the reference,
    and its two neighbours are distinct. Interior charging is split evenly
    between the ends of the joined branch. Repeats to a fixpoint.
    """
    log = ReductionLog()
    while True:
        incident: dict[int, list[int]] = defaultdict(list)
        for k, br in model.branches.items():
            incident[br.f_bus].append(k)
            incident[br.t_bus].append(k)
        attached = set()
        for comp in (model.gens, model.loads, model.shunts):
            attached.update(d.bus for d in comp.values())
        target = None
        for b in sorted(model.buses):
            ks = incident.get(b, [])
            if len(ks) != 2 or b in attached or model.buses[b].bus_type == BusType.REF:
                continue
            b1, b2 = (model.branches[k] for k in sorted(ks))
            if not (b1.status and b2.status) or b1.is_transformer or b2.is_transformer:
                continue
            n1 = b1.t_bus if b1.f_bus == b else b1.f_bus
            n2 = b2.t_bus if b2.f_bus == b else b2.f_bus
            if n1 == n2 or b in (n1, n2):
                continue
            target = (b, sorted(ks), n1, n2)
            break
        if target is None:
            return model, log
        b, (k1, k2), n1, n2 = target
        new = _joined(model.branches[k1], model.branches[k2], n1, b, n2)
        branches = {k: br for k, br in model.branches.items() if k not in (k1, k2)}
        branches[k1] = new
        buses = {i: bus for i, bus in model.buses.items() if i != b}
        log.add("join", (b, n1, n2), (k1, k2), f"kept branch id {k1}")
        model = model.replace(buses=buses, branches=branches)


def reduce(model: NetworkModel, cfg: ReductionConfig | None = None
           ) -> tuple[NetworkModel, ReductionLog]:
    """Ideal-line removal to fixpoint, then degree-2 joining to fixpoint."""
    m1, log = remove_ideal_lines(model, cfg)
    m2, log2 = join_degree2(m1)
    log.extend(log2)
    return m2, log
