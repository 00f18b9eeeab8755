from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLED, bundled, random_network
from snembench.diagnosis import compare_solutions
from snembench.netmodel import Branch, BranchOrigin, Bus, BusType, Gen, Load, NetworkModel, islands
from snembench.powerflow import ac_pf
from snembench.reduction import (
    ReductionConfig,
    is_ideal,
    join_degree2,
    reduce,
    remove_ideal_lines,
)


def _pair(branch: Branch, **bus_kw) -> NetworkModel:
    return NetworkModel(
        buses={1: Bus(1, BusType.REF), 2: Bus(2, **bus_kw), 3: Bus(3)},
        branches={1: branch, 2: Branch(2, 3, 0.01, 0.1)},
        gens={1: Gen(1, pmax=5)}, loads={1: Load(2, 0.3, 0.1), 2: Load(3, 0.2)},
    )


def _chain(n_links: int, load_at: set[int] = frozenset()) -> NetworkModel:
    buses = {i: Bus(i, BusType.REF if i == 1 else BusType.PQ) for i in range(1, n_links + 2)}
    branches = {k: Branch(k, k + 1, 0.01 * k, 0.1 * k, b_fr=0.01, b_to=0.01, rate_a=100 + k)
                for k in range(1, n_links + 1)}
    loads = {1: Load(n_links + 1, 0.1)}
    for i, b in enumerate(sorted(load_at), start=2):
        loads[i] = Load(b, 0.05)
    return NetworkModel(buses=buses, branches=branches, gens={1: Gen(1, pmax=5)}, loads=loads)


@pytest.mark.parametrize("branch, removed", [
    (Branch(1, 2, 0.001, 0.005, b_fr=0.0005, b_to=0.0005), True),
    (Branch(1, 2, 0.001, 0.5, b_fr=0.0005, b_to=0.0005), True),
    (Branch(1, 2, 0.02, 0.2, b_fr=0.0005, b_to=0.0005), False),
    (Branch(1, 2, 0.001, 0.005, b_fr=0.05, b_to=0.05), False),
    (Branch(1, 2, 0.001, 0.005, is_transformer=True), False),
])
def test_ideal_line_rules(branch, removed):
    cfg = ReductionConfig()
    assert is_ideal(branch, cfg) is removed
    out, log = remove_ideal_lines(_pair(branch), cfg)
    assert (len(out.buses) == 2) is removed
    assert log.count("ideal_line") == int(removed)


def test_merge_keeps_lower_id_and_reattaches():
    out, _ = remove_ideal_lines(_pair(Branch(1, 2, 0.0, 0.001), vmin=0.95, vmax=1.05))
    assert set(out.buses) == {1, 3}
    assert out.buses[1].bus_type == BusType.REF
    assert (out.buses[1].vmin, out.buses[1].vmax) == (0.95, 1.05)
    assert {ld.bus for ld in out.loads.values()} == {1, 3}
    assert out.branches[2].f_bus == 1


def test_merge_lumps_charging_as_shunt():
    br = Branch(1, 2, 0.0005, 0.002, b_fr=0.004, b_to=0.004)
    out, log = remove_ideal_lines(_pair(br))
    assert log.count("lumped_charging") == 1
    assert sum(sh.bs for sh in out.shunts.values()) == pytest.approx(0.008)
    dropped, _ = remove_ideal_lines(_pair(br), ReductionConfig(lump_charging=False))
    assert dropped.shunts == {}


@pytest.mark.parametrize("kw", [{"z_small": 0}, {"b_small": -1}, {"xr_high": 0}])
def test_config_thresholds_positive(kw):
    with pytest.raises(ValueError):
        ReductionConfig(**kw)


def test_join_series_pair():
    m = NetworkModel(
        buses={1: Bus(1, BusType.REF), 2: Bus(2), 3: Bus(3)},
        branches={1: Branch(1, 2, 0.01, 0.1), 2: Branch(2, 3, 0.02, 0.2)},
        gens={1: Gen(1, pmax=5)}, loads={1: Load(3, 0.1)},
    )
    out, log = join_degree2(m)
    assert set(out.buses) == {1, 3}
    (br,) = out.branches.values()
    assert complex(br.r, br.x) == pytest.approx(0.03 + 0.3j)
    assert br.origin == BranchOrigin.JOINED
    assert log.count("join") == 1


def test_join_guard_load():
    out, log = join_degree2(_chain(2, load_at={2}))
    assert len(out.buses) == 3 and log.count("join") == 0


def test_join_never_joins_transformers():
    m = _chain(2)
    m = m.replace(branches={**m.branches, 1: Branch(1, 2, 0.01, 0.1, is_transformer=True)})
    out, _ = join_degree2(m)
    assert len(out.branches) == 2


def test_chain_of_three_collapses_to_one():
    out, log = join_degree2(_chain(3))
    assert len(out.branches) == 1 and log.count("join") == 2
    (br,) = out.branches.values()
    assert complex(br.r, br.x) == pytest.approx(0.06 + 0.6j)
    # charging: ends kept, interior halves moved to each end
    assert br.b_fr + br.b_to == pytest.approx(0.06)
    assert br.rate_a == 101


def test_case12r_reduction():
    m = bundled("case12r.m")
    out, log = reduce(m)
    assert sorted(out.buses) == [1, 2, 5, 8, 9, 11]
    assert log.count("ideal_line") >= 2
    assert log.count("join") >= 3
    assert all(e.rule in {"ideal_line", "self_loop", "lumped_charging", "join"} for e in log.events)


@pytest.mark.parametrize("name", BUNDLED)
def test_conservation_and_connectivity(name):
    m = bundled(name)
    out, _ = reduce(m)
    assert out.total_load() == pytest.approx(m.total_load(), abs=1e-12)
    assert out.total_pmax() == pytest.approx(m.total_pmax(), abs=1e-12)
    assert out.total_shunt() + _charging(out) == pytest.approx(m.total_shunt() + _charging(m), abs=1e-12)
    assert len(islands(out)) == len(islands(m))
    out.validate()


def _charging(m: NetworkModel) -> complex:
    return sum((complex(b.g_fr + b.g_to, b.b_fr + b.b_to) for b in m.branches.values() if b.status), 0j)


@pytest.mark.parametrize("name", BUNDLED)
def test_pf_preservation(name):
    m = bundled(name)
    out, _ = reduce(m)
    a, b = ac_pf(m), ac_pf(out)
    assert a.converged and b.converged
    d = compare_solutions(b, a)
    assert np.max(np.abs(d.dvm)) < 1e-4
    assert np.max(np.abs(d.dva)) < 0.01


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 10))
def test_reduction_properties_random(seed, n):
    m = random_network(np.random.default_rng(seed), n)
    out, _ = reduce(m)
    assert len(islands(out)) == len(islands(m))
    assert out.total_load() == pytest.approx(m.total_load(), abs=1e-12)
    assert set(out.buses) <= set(m.buses)
    # idempotent at the fixpoint
    again, log = reduce(out)
    assert again == out and not log.events
