from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLED, DATA, bundled, random_network
from snembench.matpower import MatpowerError, parse_matpower, write_matpower
from snembench.netmodel import BusType, FuelCategory, NetworkModel

TWO_BUS = """function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1.0 0 230 1 1.1 0.9;
  2 1 50 10 0 0 1 1.0 -5 230 1 1.1 0.9;
];
mpc.gen = [
  1 60 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 150 150 150 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 2 12.5 0;
];
"""


def _assert_models_close(a: NetworkModel, b: NetworkModel, rtol: float = 1e-12) -> None:
    assert a.base_mva == b.base_mva
    for comp in ("buses", "branches", "gens", "loads", "shunts"):
        da, db = getattr(a, comp), getattr(b, comp)
        assert da.keys() == db.keys(), comp
        for k in da:
            for f, va in vars(da[k]).items():
                vb = getattr(db[k], f)
                if isinstance(va, float):
                    assert math.isclose(va, vb, rel_tol=rtol, abs_tol=1e-14), (comp, k, f, va, vb)
                elif isinstance(va, tuple):
                    assert len(va) == len(vb)
                    for x, y in zip(va, vb):
                        assert math.isclose(x, y, rel_tol=rtol, abs_tol=1e-14), (comp, k, f)
                else:
                    assert va == vb, (comp, k, f)


def test_parse_minimal_two_bus():
    m = parse_matpower(TWO_BUS)
    assert len(m.buses) == 2 and len(m.branches) == 1
    assert m.buses[1].bus_type == BusType.REF
    assert m.buses[2].va == pytest.approx(math.radians(-5.0))
    assert m.gens[1].pg == pytest.approx(0.6)
    assert m.total_load() == pytest.approx(0.5 + 0.1j)
    assert m.branches[1].rate_a == 150.0
    assert m.gens[1].cost == (12.5, 0.0)


@pytest.mark.parametrize("name", BUNDLED)
def test_roundtrip_bundled(name):
    m = bundled(name)
    _assert_models_close(parse_matpower(write_matpower(m)), m)


@pytest.mark.parametrize("name", BUNDLED)
def test_write_is_idempotent(name):
    text = write_matpower(bundled(name))
    assert write_matpower(parse_matpower(text)) == text


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 10))
def test_roundtrip_random(seed, n):
    m = random_network(np.random.default_rng(seed), n)
    _assert_models_close(parse_matpower(write_matpower(m)), m)


def test_empty_model_skeleton():
    text = write_matpower(NetworkModel())
    m = parse_matpower(text)
    assert m.buses == {} and m.branches == {} and m.gens == {}


def test_gencost_rows_for_costed_gens():
    m = bundled("case14d.m")
    text = write_matpower(m)
    block = text.split("mpc.gencost = [")[1].split("];")[0]
    rows = [ln for ln in block.splitlines() if ln.strip()]
    assert len(rows) == sum(1 for g in m.gens.values() if g.cost)


def test_extension_fields_carry_fuel():
    m = bundled("case5.m")
    gens = {k: g.__class__(**{**vars(g), "fuel": FuelCategory.HYDRO}) for k, g in m.gens.items()}
    out = parse_matpower(write_matpower(m.replace(gens=gens)))
    assert all(g.fuel == FuelCategory.HYDRO for g in out.gens.values())


def test_unknown_trailing_columns_ignored():
    text = TWO_BUS.replace("1 2 0.01 0.1 0.02 150 150 150 0 0 1 -360 360;",
                           "1 2 0.01 0.1 0.02 150 150 150 0 0 1 -360 360 7 8 9;")
    assert parse_matpower(text).branches[1].x == pytest.approx(0.1)


def test_comments_and_unknown_fields_tolerated():
    text = TWO_BUS + "\n% a comment\nmpc.bus_name = {\n 'A';\n 'B';\n};\n"
    assert len(parse_matpower(text).buses) == 2


@pytest.mark.parametrize("old, new, line", [
    ("2 1 50 10 0 0 1 1.0 -5 230 1 1.1 0.9;", "1 1 50 10 0 0 1 1.0 -5 230 1 1.1 0.9;", 6),
    ("1 2 0.01 0.1 0.02", "1 7 0.01 0.1 0.02", 12),
    ("1 60 0 100 -100 1.0 100 1 200 0;", "1 60 0 100;", 9),
    ("2 1 50 10 0 0 1 1.0 -5 230 1 1.1 0.9;", "2 1 50 abc 0 0 1 1.0 -5 230 1 1.1 0.9;", 6),
])
def test_errors_report_line_numbers(old, new, line):
    with pytest.raises(MatpowerError) as exc:
        parse_matpower(TWO_BUS.replace(old, new))
    assert exc.value.line == line


def test_missing_bus_table():
    with pytest.raises(MatpowerError, match="mpc.bus"):
        parse_matpower("mpc.baseMVA = 100;\nmpc.branch = [];\n")


def test_piecewise_cost_rejected():
    with pytest.raises(MatpowerError, match="polynomial"):
        parse_matpower(TWO_BUS.replace("2 0 0 2 12.5 0;", "1 0 0 2 0 0 100 1200;"))


def test_bundled_files_present():
    for name in BUNDLED:
        assert (DATA / name).is_file()
