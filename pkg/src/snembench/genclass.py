"""Generator fuel classification and cost/operational parameter assignment."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from snembench.forest import RandomForest, smote
from snembench.netmodel import FuelCategory, GenKind, NetworkModel

log = logging.getLogger(__name__)

SYNCHRONOUS_FUELS = (FuelCategory.BLACK_COAL, FuelCategory.BROWN_COAL, FuelCategory.NATURAL_GAS,
                     FuelCategory.HYDRO, FuelCategory.WIND)
VICTORIA = 2000

_ALIASES = {
    "black coal": FuelCategory.BLACK_COAL, "brown coal": FuelCategory.BROWN_COAL,
    "gas": FuelCategory.NATURAL_GAS, "natural gas": FuelCategory.NATURAL_GAS,
    "water": FuelCategory.HYDRO, "hydro": FuelCategory.HYDRO,
    "wind": FuelCategory.WIND, "solar": FuelCategory.SOLAR,
}


class GenClassError(ValueError):
    pass


def parse_fuel(label: str) -> FuelCategory:
    key = label.strip().lower().replace("_", " ")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return FuelCategory(label.strip().lower())
    except ValueError:
        raise GenClassError(f"unknown fuel label {label!r}") from None


@dataclass(frozen=True)
class ReferenceGen:
    capacity: float  # MW
    state: int  # area id
    fuel: str  # raw label; several fuels separated by ';' or '/'
    status: str = "operational"

    @property
    def usable(self) -> bool:
        return self.status.strip().lower() == "operational" and not any(s in self.fuel for s in ";/")

    @property
    def category(self) -> FuelCategory:
        return parse_fuel(self.fuel)


def load_reference_gens(path: str | Path) -> list[ReferenceGen]:
    """Read ``capacity_MW, state, fuel, status`` rows."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"capacity_MW", "state", "fuel", "status"} - set(reader.fieldnames or [])
        if missing:
            raise GenClassError(f"{path}: missing columns {sorted(missing)}")
        for n, row in enumerate(reader, start=2):
            try:
                out.append(ReferenceGen(float(row["capacity_MW"]), int(row["state"]),
                                        row["fuel"], row["status"]))
            except ValueError as exc:
                raise GenClassError(f"{path}:{n}: {exc}") from None
    return out


def usable_reference(ref: list[ReferenceGen]) -> list[ReferenceGen]:
    """Operational, single-fuel records with a recognised fuel."""
    out = []
    for r in ref:
        if not r.usable:
            continue
        try:
            r.category
        except GenClassError:
            log.warning("skipping reference record with fuel %r", r.fuel)
            continue
        out.append(r)
    return out


@dataclass
class Forest:
    state: int
    n_trees: int
    seed: int
    model: RandomForest
    smote_k: int = 5

    def predict(self, capacity_mw, allowed=None) -> list[FuelCategory]:
        allowed_v = None if allowed is None else [f.value for f in allowed]
        return [FuelCategory(v) for v in self.model.predict(np.atleast_1d(capacity_mw), allowed_v)]


def train_forest(ref: list[ReferenceGen], state: int, n_trees: int = 100, seed: int = 0,
                 smote_k: int = 5) -> Forest:
    """Capacity-only random forest for one state on SMOTE-balanced reference data."""
    rows = [r for r in usable_reference(ref) if r.state == state]
    if not rows:
        raise GenClassError(f"no usable reference generators for state {state}")
    X = np.array([r.capacity for r in rows])
    y = np.array([r.category.value for r in rows])
    counts = {c: int((y == c).sum()) for c in np.unique(y)}
    if len(counts) > 1:
        Xb, yb = smote(X, y, k=smote_k, seed=seed)
    else:
        Xb, yb = X[:, None], y
    rf = RandomForest(n_trees=n_trees, seed=seed).fit(Xb, yb)
    return Forest(state=state, n_trees=n_trees, seed=seed, model=rf, smote_k=smote_k)


def train_all(ref: list[ReferenceGen], n_trees: int = 100, seed: int = 0) -> dict[int, Forest]:
    states = sorted({r.state for r in usable_reference(ref)})
    return {s: train_forest(ref, s, n_trees, seed) for s in states}


def var_compensators(model: NetworkModel, p_max_mw: float = 1.0, q_min_mvar: float = 10.0) -> list[int]:
    """Network sources with negligible active and substantial reactive capability."""
    base = model.base_mva
    return sorted(k for k, g in model.gens.items()
                  if g.kind == GenKind.NETWORK_SOURCE and abs(g.pmax) * base <= p_max_mw
                  and max(abs(g.qmax), abs(g.qmin)) * base >= q_min_mvar)


def classify(model: NetworkModel, forests: dict[int, Forest],
             basslink: tuple[int, int] | None = None, tag_var_compensators: bool = False
             ) -> NetworkModel:
    """Set ``fuel`` on every generator.

    Network sources become SOLAR. ``basslink`` names the (mainland, Tasmania)
    generator ids of the HVDC link: the mainland end is HYDRO and its bus is
    moved to the Victoria area, the Tasmanian end is NATURAL_GAS.
    Synchronous units are predicted by their state's forest with SOLAR
    masked out. With ``tag_var_compensators`` reactive-only network sources
    are left unclassified (``fuel=None``).
    """
    gens = dict(model.gens)
    buses = dict(model.buses)
    skip = set(var_compensators(model)) if tag_var_compensators else set()
    mainland, tasmania = basslink if basslink else (None, None)
    for k in sorted(gens):
        g = gens[k]
        if k == mainland:
            gens[k] = replace(g, fuel=FuelCategory.HYDRO)
            buses[g.bus] = replace(buses[g.bus], area=VICTORIA)
        elif k == tasmania:
            gens[k] = replace(g, fuel=FuelCategory.NATURAL_GAS)
        elif k in skip:
            gens[k] = replace(g, fuel=None)
        elif g.kind == GenKind.NETWORK_SOURCE:
            gens[k] = replace(g, fuel=FuelCategory.SOLAR)
        else:
            area = model.buses[g.bus].area
            if area not in forests:
                raise GenClassError(f"gen {k}: no forest for area {area}")
            fuel = forests[area].predict(g.pmax * model.base_mva, SYNCHRONOUS_FUELS)[0]
            gens[k] = replace(g, fuel=fuel)
    return model.replace(gens=gens, buses=buses)


@dataclass(frozen=True)
class FuelModel:
    min_gen_pct: float
    min_on_h: float
    min_off_h: float
    no_load_fuel_pct: float
    aux_load_pct: float
    ramp_up_mw_h: float
    ramp_down_mw_h: float
    thermal_eff_pct: float
    maintenance_d_y: float
    fixed_op_cost: float  # $/MW/year
    variable_op_cost: float  # $/MWh sent out
    no_load_cost: float
    no_load_recurring_cost: float
    cold_start_cost: float
    warm_start_cost: float
    hot_start_cost: float

    def as_dict(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


TABLE2: dict[FuelCategory, FuelModel] = {
    FuelCategory.BLACK_COAL: FuelModel(40, 8, 8, 10, 6, 120, 150, 35.4, 20, 53400, 1, 1500, 500, 350, 120, 40),
    FuelCategory.BROWN_COAL: FuelModel(60, 16, 16, 10, 10, 130, 140, 23.5, 20, 147200, 1, 1500, 500, 350, 120, 40),
    FuelCategory.NATURAL_GAS: FuelModel(0, 1, 1, 30, 3, 600, 600, 32, 5, 14200, 8.3, 500, 200, 100, 100, 100),
    FuelCategory.HYDRO: FuelModel(0, 1, 1, 0, 1, 7630, 1840, 100, 7, 56700, 7, 500, 200, 5, 3, 2),
    FuelCategory.WIND: FuelModel(0, 1, 1, 0, 1, 900, 600, 100, 3, 43000, 10, 2000, 1000, 5, 3, 2),
    FuelCategory.SOLAR: FuelModel(10, 1, 1, 0, 8, 10000, 10000, 100, 10, 64000, 15.2, 500, 200, 5, 3, 2),
}


def assign_costs(model: NetworkModel, allow_unclassified: bool = False) -> NetworkModel:
    """Linear variable cost and minimum output from the fuel table.

    ``cost = (c1, 0)`` in $/MWh and ``pmin = min_gen_pct * pmax``.
    Unclassified units raise unless ``allow_unclassified``, in which case
    they get zero cost and zero minimum output.
    """
    gens = dict(model.gens)
    for k, g in gens.items():
        if g.fuel is None:
            if not allow_unclassified:
                raise GenClassError(f"gen {k} has no fuel category")
            gens[k] = replace(g, cost=(0.0, 0.0), pmin=min(g.pmin, 0.0) if g.pmax >= 0 else g.pmin)
            continue
        fm = TABLE2[g.fuel]
        pmin = fm.min_gen_pct / 100.0 * g.pmax if g.pmax > 0 else g.pmin
        gens[k] = replace(g, cost=(float(fm.variable_op_cost), 0.0), pmin=pmin)
    return model.replace(gens=gens)


@dataclass(frozen=True)
class MixRow:
    state: int
    fuel: str
    model_count: int
    model_capacity_mw: float
    ref_count: int
    ref_capacity_mw: float


def fuel_mix_report(model: NetworkModel, ref: list[ReferenceGen]) -> list[MixRow]:
    """Per-state, per-fuel unit counts and capacities, model next to reference."""
    table: dict[tuple[int, str], list[float]] = {}

    def cell(state, fuel):
        return table.setdefault((state, fuel), [0, 0.0, 0, 0.0])

    for g in model.gens.values():
        if not g.status:
            continue
        c = cell(model.buses[g.bus].area, g.fuel.value if g.fuel else "unclassified")
        c[0] += 1
        c[1] += g.pmax * model.base_mva
    for r in usable_reference(ref):
        c = cell(r.state, r.category.value)
        c[2] += 1
        c[3] += r.capacity
    return [MixRow(s, f, int(v[0]), v[1], int(v[2]), v[3]) for (s, f), v in sorted(table.items())]


def write_mix_report(rows: list[MixRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "fuel", "model_count", "model_capacity_mw", "ref_count", "ref_capacity_mw"])
        for r in rows:
            w.writerow([r.state, r.fuel, r.model_count, repr(r.model_capacity_mw), r.ref_count,
                        repr(r.ref_capacity_mw)])
