from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import root

from conftest import BUNDLED, bundled, random_network, two_bus
from snembench.compiled import compile_model
from snembench.netmodel import Branch, Bus, BusType, Gen, Load, NetworkModel
from snembench.powerflow import (
    ACSystem,
    PowerFlowError,
    ac_pf,
    ac_pf_slack,
    dc_pf,
    power_balance_residual,
)


def dense_ybus(model: NetworkModel) -> tuple[list[int], np.ndarray]:
    """Admittance matrix assembled branch by branch (tap on the from side)."""
    ids = sorted(b for b, bus in model.buses.items() if bus.in_service)
    idx = {b: i for i, b in enumerate(ids)}
    Y = np.zeros((len(ids), len(ids)), dtype=complex)
    for br in model.branches.values():
        if not br.status:
            continue
        i, j = idx[br.f_bus], idx[br.t_bus]
        ys = 1 / complex(br.r, br.x)
        a = br.tap * np.exp(1j * br.shift)
        Y[i, i] += (ys + complex(br.g_fr, br.b_fr)) / abs(a) ** 2
        Y[j, j] += ys + complex(br.g_to, br.b_to)
        Y[i, j] += -ys / np.conj(a)
        Y[j, i] += -ys / a
    for sh in model.shunts.values():
        if sh.status:
            Y[idx[sh.bus], idx[sh.bus]] += complex(sh.gs, sh.bs)
    return ids, Y


def oracle_pf(model: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    """Solve the polar mismatch equations with a generic root finder."""
    ids, Y = dense_ybus(model)
    idx = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    S = np.zeros(n, dtype=complex)
    vset = {b: model.buses[b].vm for b in ids}
    for g in model.gens.values():
        if g.status:
            S[idx[g.bus]] += complex(g.pg, g.qg)
            vset[g.bus] = g.vg
    for ld in model.loads.values():
        if ld.status:
            S[idx[ld.bus]] -= complex(ld.pd, ld.qd)
    types = [model.buses[b].bus_type for b in ids]
    has_gen = {g.bus for g in model.gens.values() if g.status}
    types = [BusType.PQ if t == BusType.PV and ids[i] not in has_gen else t for i, t in enumerate(types)]
    pv = [i for i, t in enumerate(types) if t == BusType.PV]
    pq = [i for i, t in enumerate(types) if t == BusType.PQ]
    vm = np.array([vset[b] if types[i] != BusType.PQ else 1.0 for i, b in enumerate(ids)])
    va = np.array([model.buses[b].va if types[i] == BusType.REF else 0.0 for i, b in enumerate(ids)])

    def fun(x):
        a, m = va.copy(), vm.copy()
        a[pv + pq] = x[:len(pv) + len(pq)]
        m[pq] = x[len(pv) + len(pq):]
        V = m * np.exp(1j * a)
        mis = V * np.conj(Y @ V) - S
        return np.r_[mis[pv + pq].real, mis[pq].imag]

    sol = root(fun, np.r_[np.zeros(len(pv) + len(pq)), np.ones(len(pq))], method="hybr", tol=1e-13)
    assert sol.success
    a, m = va.copy(), vm.copy()
    a[pv + pq] = sol.x[:len(pv) + len(pq)]
    m[pq] = sol.x[len(pv) + len(pq):]
    return m, a


def test_two_bus_analytic():
    sol = ac_pf(two_bus(x=0.1, pd=0.2))
    theta = -0.5 * math.asin(2 * 0.2 * 0.1)
    assert sol.converged
    assert sol.va[1] == pytest.approx(theta, abs=1e-8)
    assert sol.vm[1] == pytest.approx(math.cos(theta), abs=1e-8)
    assert sol.vm[1] == pytest.approx(0.99980, abs=5e-6)


def test_zero_load_flat():
    m = NetworkModel(buses={1: Bus(1, BusType.REF), 2: Bus(2), 3: Bus(3)},
                     branches={1: Branch(1, 2, 0.01, 0.1), 2: Branch(2, 3, 0.01, 0.1)},
                     gens={1: Gen(1, pmax=1, qmin=-1, qmax=1)})
    sol = ac_pf(m)
    assert sol.converged and sol.iterations == 0
    assert np.allclose(sol.vm, 1.0) and np.allclose(sol.va, 0.0)


def test_case5_against_oracle():
    m = bundled("case5.m")
    sol = ac_pf(m, enforce_q_limits=False)
    assert sol.converged and sol.max_mismatch < 1e-8 and sol.iterations <= 6
    vm, va = oracle_pf(m)
    assert np.max(np.abs(sol.vm - vm)) < 1e-8
    assert np.max(np.abs(sol.va - va)) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_random_against_oracle(seed):
    m = random_network(np.random.default_rng(seed), 6)
    sol = ac_pf(m, enforce_q_limits=False)
    vm, va = oracle_pf(m)
    assert np.max(np.abs(sol.vm - vm)) < 1e-8
    assert np.max(np.abs(sol.va - va)) < 1e-8


def fd_jacobian(system: ACSystem, x: np.ndarray, h: float = 1e-7) -> np.ndarray:
    J = np.zeros((len(system.mismatch(x)), len(x)))
    for k in range(len(x)):
        e = np.zeros(len(x))
        e[k] = h
        J[:, k] = (system.mismatch(x + e) - system.mismatch(x - e)) / (2 * h)
    return J


@pytest.mark.parametrize("seed", range(100))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(1000 + seed)
    m = random_network(rng, int(rng.integers(4, 9)))
    c = compile_model(m)
    system = ACSystem(c, c.sbus(), c.vm0, c.va0)
    x = system.x0() + rng.normal(0, 0.05, len(system.x0()))
    J = system.jacobian(x).toarray()
    Jfd = fd_jacobian(system, x)
    assert np.max(np.abs(J - Jfd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_balance(name):
    m = bundled(name)
    sol = ac_pf(m)
    assert sol.converged
    assert power_balance_residual(m, sol) < 1e-7


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 10))
def test_balance_property(seed, n):
    m = random_network(np.random.default_rng(seed), n)
    sol = ac_pf(m, tol=1e-9)
    if sol.converged:
        assert power_balance_residual(m, sol) < 10 * 1e-9 * len(m.buses)


def test_q_limit_switching():
    m = two_bus(pd=0.5, qd=0.4)
    m = m.replace(buses={**m.buses, 2: Bus(2, BusType.PV)},
                  gens={**m.gens, 2: Gen(2, pmax=1, qmin=-0.1, qmax=0.1, vg=1.05)})
    on = ac_pf(m)
    assert on.converged
    assert on.qg[1] == pytest.approx(0.1, abs=1e-9)
    assert on.vm[1] < 1.05
    off = ac_pf(m, enforce_q_limits=False)
    assert off.vm[1] == pytest.approx(1.05) and off.qg[1] > 0.1


def test_warm_start_flag():
    m = bundled("case5.m")
    cold = ac_pf(m)
    solved = m.replace(buses={b: Bus(**{**vars(bus), "vm": float(cold.vm[i]), "va": float(cold.va[i])})
                              for i, (b, bus) in enumerate(sorted(m.buses.items()))})
    warm = ac_pf(solved, warm_start=True)
    assert warm.converged and warm.iterations <= 1


def test_no_buses():
    with pytest.raises(PowerFlowError):
        ac_pf(NetworkModel())


def test_dc_two_bus():
    m = two_bus(x=0.1, pd=1.0)
    sol = dc_pf(m)
    assert sol.va[1] == pytest.approx(-0.1, abs=1e-12)
    assert sol.sf[0].real == pytest.approx(1.0, abs=1e-12)


def test_dc_triangle_split():
    m = NetworkModel(
        buses={1: Bus(1, BusType.REF), 2: Bus(2), 3: Bus(3)},
        branches={1: Branch(1, 2, 0, 0.1), 2: Branch(2, 3, 0, 0.1), 3: Branch(1, 3, 0, 0.1)},
        gens={1: Gen(1, pmax=5)}, loads={1: Load(3, 1.0)},
    )
    sol = dc_pf(m)
    flows = dict(zip(sol.branch_ids.tolist(), sol.sf.real.tolist()))
    assert flows[3] == pytest.approx(2 / 3, abs=1e-12)
    assert flows[1] == pytest.approx(1 / 3, abs=1e-12)
    assert flows[2] == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("name", BUNDLED)
def test_dc_lossless(name):
    m = bundled(name)
    sol = dc_pf(m)
    load = sum(ld.pd for ld in m.loads.values() if ld.status)
    shunt_p = sum(sh.gs for sh in m.shunts.values() if sh.status)
    assert np.sum(sol.pg) == pytest.approx(load + shunt_p, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.1, 5.0))
def test_dc_linearity(seed, c):
    m = random_network(np.random.default_rng(seed), 6)
    m = m.replace(shunts={})
    scaled = m.replace(
        gens={k: Gen(**{**vars(g), "pg": g.pg * c}) for k, g in m.gens.items()},
        loads={k: Load(ld.bus, ld.pd * c, ld.qd * c) for k, ld in m.loads.items()},
    )
    # phase-shifting taps add a constant offset; the random networks have none
    a, b = dc_pf(m), dc_pf(scaled)
    assert np.allclose(b.va, c * a.va, atol=1e-12)


def test_slack_pf_feasible_is_zero():
    res = ac_pf_slack(bundled("case5.m"))
    assert res.max_slack() == 0.0


def test_slack_pf_beyond_transfer_limit():
    res = ac_pf_slack(two_bus(x=0.1, pd=8.0))
    assert not res.solution.converged
    assert abs(res.sp[2]) > 1e-3
    assert res.sp[1] == 0.0 and res.sq.get(1, 0.0) == 0.0
    assert res.ranked()[0][0] == 2


@pytest.mark.parametrize("bus", [2, 3, 4, 5])
def test_slack_pf_localizes_defect_case5(bus):
    m = bundled("case5.m")
    loads = dict(m.loads)
    loads[max(loads) + 1] = Load(bus, 40.0, 0.0)
    res = ac_pf_slack(m.replace(loads=loads))
    assert res.max_slack() > 1e-3
    assert res.ranked()[0][0] == bus


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_slack_zero_when_converged(seed):
    m = random_network(np.random.default_rng(seed), 5)
    res = ac_pf_slack(m)
    if ac_pf(m).converged:
        assert res.max_slack() == 0.0
    else:
        assert res.max_slack() >= 0.0 and len(res.sp) == len(m.buses)
