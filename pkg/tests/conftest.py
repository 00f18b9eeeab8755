from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from snembench.matpower import read_matpower
from snembench.netmodel import Branch, Bus, BusType, Gen, Load, NetworkModel, Shunt

DATA = Path(str(resources.files("snembench") / "data"))
BUNDLED = ["case5.m", "case12r.m", "case14d.m"]


def bundled(name: str) -> NetworkModel:
    return read_matpower(DATA / name)


def two_bus(x: float = 0.1, r: float = 0.0, pd: float = 0.2, qd: float = 0.0, b: float = 0.0,
            rate: float = 0.0, pmax: float = 10.0, cost: tuple = (10.0, 0.0)) -> NetworkModel:
    return NetworkModel(
        buses={1: Bus(1, BusType.REF, vmin=0.5, vmax=1.5), 2: Bus(2, vmin=0.5, vmax=1.5)},
        branches={1: Branch(1, 2, r, x, b_fr=b / 2, b_to=b / 2, rate_a=rate)},
        gens={1: Gen(1, pmax=pmax, qmin=-10, qmax=10, cost=cost)},
        loads={1: Load(2, pd, qd)},
    )


def random_network(rng: np.random.Generator, n: int, extra: int = 2, costs: bool = True,
                   rate: float = 0.0) -> NetworkModel:
    """Connected random network: a spanning tree plus ``extra`` chords."""
    buses = {1: Bus(1, BusType.REF, base_kv=132.0, vmin=0.9, vmax=1.1)}
    for i in range(2, n + 1):
        buses[i] = Bus(i, BusType.PQ, base_kv=132.0, vmin=0.9, vmax=1.1)
    pairs = [(int(rng.integers(1, i)), i) for i in range(2, n + 1)]
    seen = {tuple(sorted(p)) for p in pairs}
    for _ in range(extra * 4):
        a, b = (int(v) for v in rng.choice(np.arange(1, n + 1), 2, replace=False))
        if tuple(sorted((a, b))) not in seen and len(seen) < n - 1 + extra:
            seen.add(tuple(sorted((a, b))))
            pairs.append((a, b))
    branches = {}
    for k, (a, b) in enumerate(pairs, start=1):
        r = float(rng.uniform(0.002, 0.02))
        x = float(rng.uniform(0.02, 0.15))
        ch = float(rng.uniform(0.0, 0.05))
        tap = float(rng.uniform(0.95, 1.05)) if k % 3 == 0 else 1.0
        branches[k] = Branch(a, b, r, x, b_fr=ch / 2, b_to=ch / 2, tap=tap, rate_a=rate)
    gen_buses = [1] + [int(v) for v in rng.choice(np.arange(2, n + 1), max(1, n // 3), replace=False)]
    gens = {}
    for k, gb in enumerate(gen_buses, start=1):
        if gb != 1:
            buses[gb] = Bus(gb, BusType.PV, base_kv=132.0, vmin=0.9, vmax=1.1)
        gens[k] = Gen(gb, pg=float(rng.uniform(0.1, 0.4)) if gb != 1 else 0.0,
                      pmax=3.0, qmin=-3.0, qmax=3.0, vg=float(rng.uniform(0.98, 1.04)),
                      cost=(float(rng.uniform(5, 50)), 0.0) if costs else ())
    loads = {k: Load(i, float(rng.uniform(0.05, 0.3)), float(rng.uniform(-0.02, 0.1)))
             for k, i in enumerate(range(2, n + 1), start=1)}
    shunts = {1: Shunt(n, 0.0, float(rng.uniform(0.0, 0.1)))}
    return NetworkModel(buses=buses, branches=branches, gens=gens, loads=loads, shunts=shunts,
                        name=f"rand{n}")


@pytest.fixture(params=BUNDLED)
def bundled_case(request) -> NetworkModel:
    return bundled(request.param)
