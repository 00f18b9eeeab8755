from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snembench.equivalencing import (
    EquivalencingError,
    PiSection,
    ThreeWinding,
    TSection,
    pi_to_t,
    t_to_pi,
    two_port_admittance,
    xfmr2w_to_branch,
    xfmr3w_to_branches,
)
from snembench.netmodel import Bus, BusType, NetworkModel

impedance = st.builds(complex, st.floats(1e-4, 1.0), st.floats(1e-3, 1.0))
magnetizing = st.builds(complex, st.floats(1.0, 1e3), st.floats(1.0, 1e3))


def t_two_port(t: TSection) -> np.ndarray:
    """Nodal admittance of the T with its centre node eliminated (Kron reduction)."""
    y1, y2 = 1 / t.z1, 1 / t.z2
    y3 = 0 if t.z3 is None else 1 / t.z3
    Y = np.array([[y1, 0, -y1], [0, y2, -y2], [-y1, -y2, y1 + y2 + y3]], dtype=complex)
    return Y[:2, :2] - np.outer(Y[:2, 2], Y[2, :2]) / Y[2, 2]


def test_example_symmetric_t():
    pi = t_to_pi(TSection(0.1j, 0.1j, 10j))
    assert pi.z_shunt_fr == pytest.approx(20.1j, abs=1e-12)
    assert pi.z_shunt_to == pytest.approx(20.1j, abs=1e-12)
    assert pi.z_series == pytest.approx(0.201j, abs=1e-12)


@pytest.mark.parametrize("z3", [None, complex(np.inf, 0)])
def test_no_magnetizing_is_series_sum(z3):
    pi = t_to_pi(TSection(0.01 + 0.1j, 0.02 + 0.05j, z3))
    assert pi.z_series == pytest.approx(0.03 + 0.15j)
    assert pi.y_shunt_fr == 0 and pi.y_shunt_to == 0


@pytest.mark.parametrize("t", [TSection(0.1j, 0, 10j), TSection(0.1j, 0.1j, 0)])
def test_zero_impedance_rejected(t):
    with pytest.raises(EquivalencingError):
        t_to_pi(t)


@settings(max_examples=200, deadline=None)
@given(z1=impedance, z2=impedance, z3=magnetizing)
def test_two_port_equivalence(z1, z2, z3):
    t = TSection(z1, z2, z3)
    Ypi = np.array(two_port_admittance(t_to_pi(t)))
    Yt = t_two_port(t)
    assert np.max(np.abs(Ypi - Yt)) < 1e-12 * max(1.0, np.max(np.abs(Yt)))


@settings(max_examples=100, deadline=None)
@given(z=impedance, z3=magnetizing)
def test_symmetric_t_gives_symmetric_pi(z, z3):
    pi = t_to_pi(TSection(z, z, z3))
    assert pi.z_shunt_fr == pytest.approx(pi.z_shunt_to, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(zb=impedance, za=magnetizing, zc=magnetizing)
def test_pi_t_pi_roundtrip(zb, za, zc):
    pi = PiSection(zb, za, zc)
    back = t_to_pi(pi_to_t(pi))
    for a, b in ((back.z_series, zb), (back.z_shunt_fr, za), (back.z_shunt_to, zc)):
        assert abs(a - b) <= 1e-10 * abs(b)


@pytest.mark.parametrize("v1, v2, tap", [(1.0, 1.0, 1.0), (1.05, 1.0, 1.05), (1.0, 0.95, 1 / 0.95)])
def test_xfmr2w_tap(v1, v2, tap):
    br = xfmr2w_to_branch(TSection(0.01j, 0.01j, 50j), v1, v2, 1, 2)
    assert br.tap == pytest.approx(tap, rel=1e-15)
    assert br.is_transformer and br.shift == 0.0


def test_xfmr2w_branch_is_valid():
    br = xfmr2w_to_branch(TSection(0.001 + 0.01j, 0.001 + 0.01j, 5 + 50j), 1.02, 1.0, 1, 2)
    m = NetworkModel(buses={1: Bus(1, BusType.REF), 2: Bus(2)}, branches={1: br})
    m.validate()
    pi = t_to_pi(TSection(0.001 + 0.01j, 0.001 + 0.01j, 5 + 50j))
    assert complex(br.g_fr, br.b_fr) == pytest.approx(1 / pi.z_shunt_fr)
    assert complex(br.r, br.x) == pytest.approx(pi.z_series)


@pytest.mark.parametrize("v1, v2", [(0.0, 1.0), (1.0, -1.0)])
def test_xfmr2w_rejects_nonpositive_voltage(v1, v2):
    with pytest.raises(EquivalencingError):
        xfmr2w_to_branch(TSection(0.01j, 0.01j), v1, v2, 1, 2)


def test_xfmr3w_symmetric():
    tw = ThreeWinding(0.01 + 0.1j, 0.01 + 0.1j, 0.01 + 0.1j)
    legs, aux = xfmr3w_to_branches(tw, (1, 2, 3), 10)
    assert aux.id == 10
    assert all(leg.tap == 1.0 for leg in legs)
    assert len({(leg.r, leg.x, leg.b_to) for leg in legs}) == 1


def test_xfmr3w_magnetizing_on_primary():
    tw = ThreeWinding(0.01j, 0.02j, 0.03j, zm=100 + 500j, v1=1.05)
    legs, _ = xfmr3w_to_branches(tw, (1, 2, 3), 10)
    ym = 1 / (100 + 500j)
    assert complex(legs[0].g_to, legs[0].b_to) == pytest.approx(ym)
    assert all(complex(leg.g_to, leg.b_to) == 0 for leg in legs[1:])
    assert all(leg.g_fr == 0 and leg.b_fr == 0 for leg in legs)
    assert legs[0].tap == 1.05


def test_xfmr3w_id_collision():
    with pytest.raises(EquivalencingError):
        xfmr3w_to_branches(ThreeWinding(0.1j, 0.1j, 0.1j), (1, 2, 3), 2, existing={2: Bus(2)})


def _driving_point(legs, a: int, b: int) -> complex:
    """Impedance between terminals a and b with the third open, from nodal analysis."""
    nodes = sorted({leg.f_bus for leg in legs} | {leg.t_bus for leg in legs})
    idx = {n: i for i, n in enumerate(nodes)}
    Y = np.zeros((len(nodes), len(nodes)), dtype=complex)
    for leg in legs:
        y = 1 / complex(leg.r, leg.x)
        i, j = idx[leg.f_bus], idx[leg.t_bus]
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
        Y[j, j] += complex(leg.g_to, leg.b_to)
    # ground terminal b, inject 1 A at a
    keep = [i for n, i in idx.items() if n != b]
    rhs = np.zeros(len(keep), dtype=complex)
    rhs[keep.index(idx[a])] = 1.0
    v = np.linalg.solve(Y[np.ix_(keep, keep)], rhs)
    return v[keep.index(idx[a])]


@settings(max_examples=100, deadline=None)
@given(z1=impedance, z2=impedance, z3=impedance)
def test_xfmr3w_driving_point(z1, z2, z3):
    legs, _ = xfmr3w_to_branches(ThreeWinding(z1, z2, z3), (1, 2, 3), 4)
    zs = {1: z1, 2: z2, 3: z3}
    for a, b in ((1, 2), (1, 3), (2, 3)):
        assert abs(_driving_point(legs, a, b) - (zs[a] + zs[b])) <= 1e-10 * abs(zs[a] + zs[b])
