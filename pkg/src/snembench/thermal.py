"""Data-driven branch thermal limits.

A log-log regression of normalized rating on X/R is fitted to reference
lines and applied to same-voltage lines; transformers and everything else
get the physical throughput bound of a series admittance at a fixed angle
difference.

Rating normalization: ``rate_MVA / rate_base_mva / v_kV`` (per-unit rating
on a 100 MVA base per kV). The convention is stored on :class:`ThermalFit`
so a fit cannot silently be applied in different units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from snembench.netmodel import NetworkModel
from snembench.powerflow import PFSolution

CONVENTION = "rate_pu_per_kv"
DEFAULT_THETA = math.radians(15.0)
TRANSFORMER_CLAMP = (30.0, 1500.0)  # MVA


class ThermalError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceLine:
    r: float
    x: float
    v: float  # kV
    rate: float  # MVA

    def __post_init__(self):
        if min(self.r, self.x, self.v, self.rate) <= 0:
            raise ThermalError(f"reference line needs positive r, x, v, rate: {self}")

    @property
    def x_over_r(self) -> float:
        return self.x / self.r

    def norm_rate(self, rate_base_mva: float = 100.0) -> float:
        return self.rate / rate_base_mva / self.v


@dataclass(frozen=True)
class ThermalFit:
    a: float
    k: float
    xr_max: float = 20.0
    norm_rate_min: float = 0.005
    rate_base_mva: float = 100.0
    n_points: int = 0
    r2: float = float("nan")
    convention: str = CONVENTION

    def as_dict(self) -> dict:
        return {"a": self.a, "k": self.k, "xr_max": self.xr_max,
                "norm_rate_min": self.norm_rate_min, "rate_base_mva": self.rate_base_mva,
                "n_points": self.n_points, "r2": self.r2, "convention": self.convention}

    @classmethod
    def from_dict(cls, d: dict) -> ThermalFit:
        if d.get("convention", CONVENTION) != CONVENTION:
            raise ThermalError(f"unsupported rating convention {d.get('convention')!r}")
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


PUBLISHED_FIT = ThermalFit(a=-5.1407, k=0.6078)


def filter_reference(lines: list[ReferenceLine], xr_max: float = 20.0,
                     norm_rate_min: float = 0.005, rate_base_mva: float = 100.0) -> list[ReferenceLine]:
    """Keep lines with X/R below ``xr_max`` and normalized rating above ``norm_rate_min``."""
    return [ln for ln in lines
            if ln.x_over_r < xr_max and ln.norm_rate(rate_base_mva) > norm_rate_min]


def fit_loglog(lines: list[ReferenceLine], xr_max: float = 20.0, norm_rate_min: float = 0.005,
               rate_base_mva: float = 100.0, apply_filter: bool = True) -> ThermalFit:
    """Ordinary least squares of ln(normalized rating) on ln(X/R)."""
    pts = filter_reference(lines, xr_max, norm_rate_min, rate_base_mva) if apply_filter else list(lines)
    if len(pts) < 2:
        raise ThermalError(f"need at least 2 reference points after filtering, got {len(pts)}")
    lx = np.log([p.x_over_r for p in pts])
    ly = np.log([p.norm_rate(rate_base_mva) for p in pts])
    if np.ptp(lx) == 0:
        raise ThermalError("degenerate design: all reference lines share one X/R")
    X = np.column_stack([np.ones_like(lx), lx])
    (a, k), *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ np.array([a, k])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return ThermalFit(a=float(a), k=float(k), xr_max=xr_max, norm_rate_min=norm_rate_min,
                      rate_base_mva=rate_base_mva, n_points=len(pts), r2=r2)


def statistical_limit(fit: ThermalFit, r: float, x: float, v: float) -> float:
    """``v e^a (x/r)^k`` in the fit's rating unit (per-unit of ``rate_base_mva``) for ``v`` in kV."""
    if r <= 0:
        raise ThermalError("statistical model needs r > 0; use the upper-bound model")
    return v * math.exp(fit.a) * (abs(x) / r) ** fit.k


def statistical_limit_mva(fit: ThermalFit, r: float, x: float, v: float) -> float:
    return fit.rate_base_mva * statistical_limit(fit, r, x, v)


def upper_bound_limit(vi_max: float, vj_max: float, y_mag: float,
                      theta_delta: float = DEFAULT_THETA) -> float:
    """Apparent power (pu) through admittance ``y_mag`` at angle spread ``theta_delta``."""
    if vi_max <= 0 or vj_max <= 0 or y_mag < 0:
        raise ThermalError("upper bound needs positive voltages and nonnegative admittance")
    s2 = vi_max ** 2 * y_mag ** 2 * (vi_max ** 2 + vj_max ** 2
                                      - 2 * vi_max * vj_max * math.cos(theta_delta))
    return math.sqrt(max(s2, 0.0))


def route(model: NetworkModel, branch_id: int) -> str:
    """Which thermal model a branch gets: statistical, upper_bound or transformer."""
    br = model.branches[branch_id]
    if br.is_transformer:
        return "transformer"
    same_kv = model.buses[br.f_bus].base_kv == model.buses[br.t_bus].base_kv
    if same_kv and br.r > 0:
        return "statistical"
    return "upper_bound"


def apply_limits(model: NetworkModel, fit: ThermalFit, theta_delta: float = DEFAULT_THETA,
                 clamp: tuple[float, float] = TRANSFORMER_CLAMP) -> NetworkModel:
    """Set ``rate_a`` (MVA) on every in-service branch."""
    if fit.convention != CONVENTION:
        raise ThermalError(f"fit uses convention {fit.convention!r}, expected {CONVENTION!r}")
    branches = dict(model.branches)
    for k, br in model.branches.items():
        if not br.status:
            continue
        how = route(model, k)
        if how == "statistical":
            rate = statistical_limit_mva(fit, br.r, br.x, model.buses[br.f_bus].base_kv)
        else:
            bi, bj = model.buses[br.f_bus], model.buses[br.t_bus]
            rate = model.base_mva * upper_bound_limit(bi.vmax, bj.vmax, abs(1.0 / br.z), theta_delta)
            if how == "transformer":
                rate = min(max(rate, clamp[0]), clamp[1])
        branches[k] = replace(br, rate_a=rate)
    return model.replace(branches=branches)


@dataclass
class RepairLog:
    entries: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def violations(model: NetworkModel, flows: PFSolution, tol: float = 1e-9) -> dict[int, float]:
    """Branches whose larger end flow exceeds ``rate_a``: id -> flow in MVA."""
    out = {}
    for k, s in flows.flow_mva().items():
        rate = model.branches[k].rate_a
        if rate > 0 and s > rate * (1 + tol):
            out[k] = s
    return out


def repair_violations(model: NetworkModel, flows: PFSolution, margin: float = 1.1
                      ) -> tuple[NetworkModel, RepairLog]:
    """Raise each violated rating to ``margin`` times its flow."""
    if not flows.converged:
        raise ThermalError("repair needs a converged AC power flow")
    if margin < 1:
        raise ThermalError("margin must be at least 1")
    log = RepairLog()
    branches = dict(model.branches)
    for k, s in sorted(violations(model, flows).items()):
        old = branches[k].rate_a
        branches[k] = replace(branches[k], rate_a=margin * s)
        log.entries.append({"branch": k, "flow_mva": s, "old_rate": old, "new_rate": margin * s})
    if not log.entries:
        return model, log
    return model.replace(branches=branches), log


def load_reference_lines(path: str | Path) -> list[ReferenceLine]:
    """Read a reference CSV with columns ``r, x, v_kV, rate_MVA``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"r", "x", "v_kV", "rate_MVA"} - set(reader.fieldnames or [])
        if missing:
            raise ThermalError(f"{path}: missing columns {sorted(missing)}")
        for n, row in enumerate(reader, start=2):
            try:
                out.append(ReferenceLine(float(row["r"]), float(row["x"]),
                                         float(row["v_kV"]), float(row["rate_MVA"])))
            except (ValueError, ThermalError) as exc:
                raise ThermalError(f"{path}:{n}: {exc}") from None
    return out


def write_points(lines: list[ReferenceLine], path: str | Path, rate_base_mva: float = 100.0) -> None:
    """Plot-ready (x/r, normalized rating) points."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x_over_r", "norm_rate"])
        for ln in lines:
            w.writerow([repr(ln.x_over_r), repr(ln.norm_rate(rate_base_mva))])
