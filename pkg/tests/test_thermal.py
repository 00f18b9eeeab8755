from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLED, DATA, bundled
from snembench.netmodel import Branch, Bus, BusType, Gen, Load, NetworkModel
from snembench.powerflow import PFSolution, ac_pf
from snembench.thermal import (
    PUBLISHED_FIT,
    ReferenceLine,
    ThermalError,
    ThermalFit,
    apply_limits,
    filter_reference,
    fit_loglog,
    load_reference_lines,
    repair_violations,
    route,
    statistical_limit,
    statistical_limit_mva,
    upper_bound_limit,
    violations,
    write_points,
)

A, K = -5.1407, 0.6078


def synthetic(n: int, noise: float, seed: int) -> list[ReferenceLine]:
    rng = np.random.default_rng(seed)
    xr = np.exp(rng.uniform(np.log(1.2), np.log(19.0), n))
    v = rng.choice([110.0, 132.0, 220.0, 275.0, 330.0, 400.0], n)
    rate = 100.0 * v * np.exp(A) * xr ** K * np.exp(noise * rng.standard_normal(n))
    r = rng.uniform(0.5, 5.0, n)
    return [ReferenceLine(float(ri), float(ri * q), float(vi), float(si))
            for ri, q, vi, si in zip(r, xr, v, rate)]


def test_filter_examples():
    keep = ReferenceLine(1.0, 10.0, 100.0, 100.0)  # x/r 10, rate/v/100 = 0.01
    drop = ReferenceLine(1.0, 25.0, 100.0, 100.0)
    assert filter_reference([keep, drop]) == [keep]
    assert filter_reference([]) == []
    low = ReferenceLine(1.0, 10.0, 100.0, 0.4)  # normalized 4e-5
    assert filter_reference([low]) == []


def test_noiseless_recovery():
    fit = fit_loglog(synthetic(500, 0.0, 1))
    assert abs(fit.a - A) < 1e-9 and abs(fit.k - K) < 1e-9
    assert fit.r2 == pytest.approx(1.0)


def test_noisy_recovery():
    fit = fit_loglog(synthetic(500, 0.01, 7))
    assert abs(fit.a - A) <= 0.05 and abs(fit.k - K) <= 0.02
    assert fit.n_points == 500


def test_two_points_interpolate():
    pts = [ReferenceLine(1.0, 2.0, 100.0, 200.0), ReferenceLine(1.0, 8.0, 100.0, 800.0)]
    fit = fit_loglog(pts)
    assert fit.k == pytest.approx(1.0, abs=1e-12)
    assert fit.a == pytest.approx(math.log(0.01), abs=1e-12)


def test_degenerate_design():
    pts = [ReferenceLine(1.0, 5.0, 100.0, 200.0), ReferenceLine(2.0, 10.0, 100.0, 300.0)]
    with pytest.raises(ThermalError, match="degenerate"):
        fit_loglog(pts)
    with pytest.raises(ThermalError):
        fit_loglog(pts[:1])


def test_reference_line_validation():
    with pytest.raises(ThermalError):
        ReferenceLine(0.0, 1.0, 1.0, 1.0)


def test_statistical_examples():
    s = statistical_limit(PUBLISHED_FIT, 1.0, 10.0, 1.0)
    assert s == pytest.approx(math.exp(A) * 10 ** K, rel=1e-14)
    # the published example value is given to 5 significant digits
    assert s == pytest.approx(0.023727, rel=1e-4)
    assert statistical_limit(PUBLISHED_FIT, 2.0, 2.0, 132.0) == pytest.approx(132 * math.exp(A))
    assert statistical_limit_mva(PUBLISHED_FIT, 1, 10, 330) == pytest.approx(100 * 330 * s)
    with pytest.raises(ThermalError):
        statistical_limit(PUBLISHED_FIT, 0.0, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(xr=st.floats(0.1, 50), v=st.floats(1, 500), c=st.floats(1.01, 10))
def test_statistical_monotone_and_homogeneous(xr, v, c):
    s = statistical_limit(PUBLISHED_FIT, 1.0, xr, v)
    assert statistical_limit(PUBLISHED_FIT, 1.0, xr * c, v) > s
    assert statistical_limit(PUBLISHED_FIT, 1.0, xr, v * c) == pytest.approx(c * s, rel=1e-12)


def test_upper_bound_examples():
    assert upper_bound_limit(1.1, 1.1, 10.0, math.radians(15)) == pytest.approx(3.1587, abs=5e-5)
    assert upper_bound_limit(1.05, 1.05, 10.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert upper_bound_limit(1.1, 0.9, 0.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(vi=st.floats(0.5, 1.5), vj=st.floats(0.5, 1.5), y=st.floats(0, 100), c=st.floats(0.1, 10),
       th=st.floats(0, math.pi))
def test_upper_bound_homogeneous(vi, vj, y, c, th):
    s = upper_bound_limit(vi, vj, y, th)
    assert upper_bound_limit(c * vi, c * vj, y, th) == pytest.approx(c * c * s, rel=1e-9, abs=1e-12)


def _routing_model(y_xfmr: float) -> NetworkModel:
    buses = {1: Bus(1, BusType.REF, base_kv=330, vmax=1.1), 2: Bus(2, base_kv=330, vmax=1.1),
             3: Bus(3, base_kv=132, vmax=1.1), 4: Bus(4, base_kv=132, vmax=1.1)}
    z = 1 / y_xfmr
    branches = {
        1: Branch(1, 2, 0.002, 0.02),
        2: Branch(2, 3, 0.0, z, is_transformer=True),
        3: Branch(1, 3, 0.01, 0.05),  # different kV, not a transformer
        4: Branch(3, 4, 0.0, 0.05),  # r = 0
    }
    return NetworkModel(buses=buses, branches=branches, gens={1: Gen(1, pmax=5)},
                        loads={1: Load(4, 0.1)})


def test_routing_and_statistical_rate():
    m = _routing_model(5.0)
    assert [route(m, k) for k in (1, 2, 3, 4)] == ["statistical", "transformer", "upper_bound",
                                                    "upper_bound"]
    out = apply_limits(m, PUBLISHED_FIT)
    assert out.branches[1].rate_a == pytest.approx(100 * 330 * math.exp(A) * 10 ** K, rel=1e-12)
    assert out.branches[1].rate_a == pytest.approx(782.95, abs=0.01)
    assert all(b.rate_a > 0 for b in out.branches.values())


@pytest.mark.parametrize("target_mva, expected", [(2000.0, 1500.0), (10.0, 30.0), (500.0, 500.0)])
def test_transformer_clamp(target_mva, expected):
    per_y = upper_bound_limit(1.1, 1.1, 1.0, math.radians(15)) * 100
    out = apply_limits(_routing_model(target_mva / per_y), PUBLISHED_FIT)
    assert out.branches[2].rate_a == pytest.approx(expected, rel=1e-9)


def test_apply_limits_rejects_foreign_convention():
    fit = ThermalFit(a=A, k=K, convention="ka")
    with pytest.raises(ThermalError):
        apply_limits(_routing_model(5.0), fit)


@pytest.mark.parametrize("name", BUNDLED)
def test_every_branch_rated(name):
    out = apply_limits(bundled(name), PUBLISHED_FIT)
    assert all(b.rate_a > 0 for b in out.branches.values() if b.status)


def _stub_flows(model: NetworkModel, mva: dict[int, float], converged: bool = True) -> PFSolution:
    ids = np.array(sorted(model.branches))
    s = np.array([mva.get(int(k), 0.0) / model.base_mva for k in ids], dtype=complex)
    e = np.array([], dtype=int)
    return PFSolution(bus_ids=e, vm=np.array([]), va=np.array([]), gen_ids=e, pg=np.array([]),
                      qg=np.array([]), branch_ids=ids, sf=s, st=-s, converged=converged,
                      iterations=1, max_mismatch=0.0, base_mva=model.base_mva)


def test_repair_margin():
    m = _routing_model(5.0)
    m = m.replace(branches={k: b.__class__(**{**vars(b), "rate_a": 100.0}) for k, b in m.branches.items()})
    flows = _stub_flows(m, {1: 120.0, 2: 80.0})
    out, log = repair_violations(m, flows)
    assert out.branches[1].rate_a == pytest.approx(132.0)
    assert out.branches[2].rate_a == 100.0
    assert len(log) == 1
    assert violations(out, flows) == {}


def test_repair_no_violation_unchanged():
    m = apply_limits(bundled("case5.m"), PUBLISHED_FIT)
    flows = ac_pf(m)
    if violations(m, flows):
        pytest.skip("fixture has violations")
    out, log = repair_violations(m, flows)
    assert out is m and len(log) == 0


def test_repair_needs_converged_flows():
    m = _routing_model(5.0)
    with pytest.raises(ThermalError):
        repair_violations(m, _stub_flows(m, {}, converged=False))


@pytest.mark.parametrize("name", BUNDLED)
def test_repair_clears_all_violations(name):
    m = bundled(name)
    tight = m.replace(branches={k: b.__class__(**{**vars(b), "rate_a": 1.0}) for k, b in m.branches.items()})
    flows = ac_pf(tight)
    assert violations(tight, flows)
    out, _ = repair_violations(tight, flows)
    assert violations(out, ac_pf(out)) == {}


def test_bundled_reference_data_and_points(tmp_path):
    lines = load_reference_lines(DATA / "reference_lines.csv")
    kept = filter_reference(lines)
    assert 0 < len(kept) < len(lines)
    fit = fit_loglog(lines)
    assert fit.n_points == len(kept)
    assert abs(fit.a - A) < 0.1 and abs(fit.k - K) < 0.05
    out = tmp_path / "pts.csv"
    write_points(kept, out)
    assert len(out.read_text().splitlines()) == len(kept) + 1


def test_fit_dict_roundtrip():
    fit = fit_loglog(synthetic(50, 0.01, 3))
    assert ThermalFit.from_dict(fit.as_dict()) == fit


def test_missing_reference_column(tmp_path):
    p = tmp_path / "ref.csv"
    p.write_text("r,x,rate_MVA\n1,2,3\n")
    with pytest.raises(ThermalError, match="v_kV"):
        load_reference_lines(p)
