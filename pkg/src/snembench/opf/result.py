"""Shared OPF result type and cost helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from snembench.compiled import Compiled


class OPFError(RuntimeError):
    pass


class OPFStatus(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    ITER_LIMIT = "ITER_LIMIT"


@dataclass
class OPFResult:
    """Arrays aligned with the id arrays; powers in pu, angles in rad."""

    kind: str  # "dc" or "ac"
    status: OPFStatus
    objective: float  # $/h, penalty excluded
    penalty: float  # $/h charged to slack
    bus_ids: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    gen_ids: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    branch_ids: np.ndarray
    sf: np.ndarray  # complex from-end flow (real for DC)
    st: np.ndarray
    sp: np.ndarray  # net active slack injection per bus
    sq: np.ndarray
    solve_time: float
    iterations: int
    base_mva: float = 100.0
    message: str = ""
    binding: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPFStatus.OPTIMAL

    def dispatch(self) -> dict[int, float]:
        """Active dispatch per generator, MW."""
        return dict(zip(self.gen_ids.tolist(), (self.pg * self.base_mva).tolist()))

    def total_slack(self) -> float:
        return float(np.sum(np.abs(self.sp)) + np.sum(np.abs(self.sq)))

    def ranked_slack(self) -> list[tuple[int, float]]:
        mag = np.hypot(self.sp, self.sq)
        order = sorted(range(len(mag)), key=lambda i: (-mag[i], self.bus_ids[i]))
        return [(int(self.bus_ids[i]), float(mag[i])) for i in order]

    def report(self, relax_objective: float | None = None) -> str:
        lines = [
            f"kind={self.kind}",
            f"status={self.status.value}",
            f"objective={self.objective:.6f}",
            f"penalty={self.penalty:.6g}",
            f"total_slack_pu={self.total_slack():.6g}",
            f"iterations={self.iterations}",
            f"solve_time_s={self.solve_time:.3f}",
        ]
        if relax_objective is not None and self.objective > 0:
            lines.append(f"gap_pct={gap(self.objective, relax_objective):.4f}")
        lines.append("gen,pg_mw,qg_mvar")
        for g, p, q in zip(self.gen_ids, self.pg, self.qg):
            lines.append(f"{g},{p * self.base_mva:.6f},{q * self.base_mva:.6f}")
        lines.append("binding")
        lines.extend(self.binding)
        return "\n".join(lines)


def gap(nlp_obj: float, relax_obj: float) -> float:
    """Optimality gap in percent of the nonlinear objective."""
    if nlp_obj <= 0:
        raise ValueError("nonlinear objective must be positive")
    return 100.0 * (nlp_obj - relax_obj) / nlp_obj


def cost_terms(c: Compiled) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadratic, linear and constant cost coefficients per gen, in pu power.

    Raises if any in-service generator lacks a cost or uses a polynomial of
    degree above two.
    """
    base = c.model.base_mva
    c2 = np.zeros(c.ng)
    c1 = np.zeros(c.ng)
    c0 = np.zeros(c.ng)
    for j, g in enumerate(c.gen_ids):
        coef = c.model.gens[int(g)].cost
        if not coef:
            raise OPFError(f"generator {int(g)} has no cost")
        if len(coef) > 3:
            raise OPFError(f"generator {int(g)}: cost polynomials above degree 2 are not supported")
        coef = (0.0,) * (3 - len(coef)) + tuple(coef)
        c2[j] = coef[0] * base ** 2
        c1[j] = coef[1] * base
        c0[j] = coef[2]
    return c2, c1, c0


def default_penalty(c: Compiled) -> float:
    """Slack penalty in $/MWh: 1e4 times the largest linear cost coefficient."""
    _, c1, _ = cost_terms(c)
    return 1e4 * max(float(np.max(np.abs(c1), initial=0.0)) / c.model.base_mva, 1.0)
