"""Transformer equivalent circuits: T-section and star to pi-model branches."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from snembench.netmodel import Branch, BranchOrigin, Bus, BusType


class EquivalencingError(ValueError):
    pass


INF = complex(math.inf, 0.0)


def _is_inf(z: complex | None) -> bool:
    return z is None or cmath.isinf(z)


def _admittance(z: complex) -> complex:
    return 0j if _is_inf(z) else 1.0 / z


@dataclass(frozen=True)
class TSection:
    """Two-winding transformer T circuit, all impedances in system per-unit.

    ``z3`` is the magnetizing branch; ``None`` or an infinite value means it
    is absent.
    """

    z1: complex
    z2: complex
    z3: complex | None = None


@dataclass(frozen=True)
class PiSection:
    z_series: complex
    z_shunt_fr: complex
    z_shunt_to: complex

    @property
    def y_shunt_fr(self) -> complex:
        return _admittance(self.z_shunt_fr)

    @property
    def y_shunt_to(self) -> complex:
        return _admittance(self.z_shunt_to)


@dataclass(frozen=True)
class ThreeWinding:
    """Star-equivalent three-winding transformer (system per-unit).

    ``v1``..``v3`` are the per-unit winding voltages used for the leg taps;
    ``zm`` is the magnetizing impedance, attached at the primary leg.
    """

    z1: complex
    z2: complex
    z3: complex
    zm: complex | None = None
    v1: float = 1.0
    v2: float = 1.0
    v3: float = 1.0


def t_to_pi(t: TSection) -> PiSection:
    """Star-delta conversion of a T section.

    Returns the series impedance and the shunt impedances at the primary
    (from) and secondary (to) terminals. Without a magnetizing branch the
    pi degenerates to the series sum with open shunts.
    """
    if _is_inf(t.z3):
        return PiSection(t.z1 + t.z2, INF, INF)
    if t.z3 == 0 or t.z2 == 0:
        raise EquivalencingError("T-section needs nonzero z2 and z3 for a finite pi conversion")
    s = t.z1 * t.z2 + t.z2 * t.z3 + t.z1 * t.z3
    z_c = INF if t.z1 == 0 else s / t.z1
    return PiSection(z_series=s / t.z3, z_shunt_fr=s / t.z2, z_shunt_to=z_c)


def pi_to_t(pi: PiSection) -> TSection:
    """Delta-star conversion, the inverse of :func:`t_to_pi` for finite shunts."""
    za, zb, zc = pi.z_shunt_fr, pi.z_series, pi.z_shunt_to
    total = za + zb + zc
    return TSection(z1=za * zb / total, z2=zb * zc / total, z3=za * zc / total)


def two_port_admittance(pi: PiSection) -> list[list[complex]]:
    ys = 1.0 / pi.z_series
    return [[ys + pi.y_shunt_fr, -ys], [-ys, ys + pi.y_shunt_to]]


def xfmr2w_to_branch(t: TSection, v1_pu: float, v2_pu: float, f_bus: int, t_bus: int,
                     **fields) -> Branch:
    """Pi-model transformer branch with tap ``v1_pu / v2_pu`` on the from side."""
    if v1_pu <= 0 or v2_pu <= 0:
        raise EquivalencingError(f"winding voltages must be positive, got {v1_pu}, {v2_pu}")
    pi = t_to_pi(t)
    y_fr, y_to = pi.y_shunt_fr, pi.y_shunt_to
    return Branch(
        f_bus=f_bus, t_bus=t_bus, r=pi.z_series.real, x=pi.z_series.imag,
        g_fr=y_fr.real, b_fr=y_fr.imag, g_to=y_to.real, b_to=y_to.imag,
        tap=v1_pu / v2_pu, shift=0.0, is_transformer=True, origin=BranchOrigin.XFMR2W,
        **fields,
    )


def xfmr3w_to_branches(x: ThreeWinding, buses: tuple[int, int, int], aux_bus_id: int,
                       existing: dict[int, Bus] | None = None, aux_kv: float | None = None,
                       **fields) -> tuple[list[Branch], Bus]:
    """Decompose a star three-winding transformer into three legs.

    Each leg runs from its terminal bus to the auxiliary star bus with tap
    ``v_side / 1.0``. The magnetizing admittance is placed on the star end
    of the primary leg.
    """
    if existing is not None and aux_bus_id in existing:
        raise EquivalencingError(f"auxiliary bus id {aux_bus_id} already in use")
    for v in (x.v1, x.v2, x.v3):
        if v <= 0:
            raise EquivalencingError("winding voltages must be positive")
    ym = _admittance(x.zm) if x.zm is not None else 0j
    legs = []
    for i, (bus, z, v) in enumerate(zip(buses, (x.z1, x.z2, x.z3), (x.v1, x.v2, x.v3))):
        if z == 0:
            raise EquivalencingError(f"winding {i + 1} has zero impedance")
        mag = ym if i == 0 else 0j
        legs.append(Branch(
            f_bus=bus, t_bus=aux_bus_id, r=z.real, x=z.imag, g_to=mag.real, b_to=mag.imag,
            tap=v / 1.0, is_transformer=True, origin=BranchOrigin.XFMR3W_LEG, **fields,
        ))
    primary = existing.get(buses[0]) if existing else None
    aux = Bus(
        id=aux_bus_id, bus_type=BusType.PQ,
        base_kv=aux_kv if aux_kv is not None else (primary.base_kv if primary else 1.0),
        area=primary.area if primary else 1, zone=primary.zone if primary else 1,
        vmin=0.5, vmax=1.5,
    )
    return legs, aux
