"""Optimal power flow: DC (QP/LP) and AC (NLP) interior-point formulations."""

from snembench.opf.ac import ac_opf, check_feasibility
from snembench.opf.dc import dc_opf
from snembench.opf.result import OPFError, OPFResult, OPFStatus, gap

__all__ = ["OPFError", "OPFResult", "OPFStatus", "ac_opf", "check_feasibility", "dc_opf", "gap"]
