"""Batch pipeline driver: every stage is a subcommand.

Configuration is a flat JSON object (see ``KEYS``). The file comes from
``--config`` or the ``SNEMBENCH_CONFIG`` environment variable, and every key
can be overridden by a ``--key-name`` flag. Network artifacts are MATPOWER
files with a sidecar ``.json`` holding fuel tags, stage provenance and fit
coefficients. Each run prints a ``key=value`` summary, one per line.

Exit status: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from snembench import diagnosis, genclass, ingest, reduction, thermal
from snembench.matpower import parse_matpower, write_matpower
from snembench.netmodel import NetworkModel
from snembench.opf import ac_opf, dc_opf, gap
from snembench.powerflow import PFSolution, ac_pf, dc_pf, power_balance_residual

ENV_CONFIG = "SNEMBENCH_CONFIG"
SIDECAR_FORMAT = "snembench-sidecar/1"
PIPELINE_STAGES = ("ingest", "equivalence", "reduce", "fit-limits", "apply-limits",
                   "classify", "assign-costs", "export")


class ConfigError(ValueError):
    """Bad configuration or invocation; maps to exit status 2."""


def _bundled(name: str) -> str:
    return str(resources.files("snembench") / "data" / name)


# key -> (type, default, help)
KEYS: dict[str, tuple[type, Any, str]] = {
    "input": (str, "", "stage input: CSV directory, raw JSON, MATPOWER file or solution JSON"),
    "output": (str, "", "stage output path"),
    "other": (str, "", "second solution JSON for compare"),
    "points": (str, "", "optional plot-ready CSV (fit points, comparison deltas, fuel mix)"),
    "name": (str, "case", "case name written into MATPOWER output"),
    "base_mva": (float, 100.0, "system MVA base for ingest"),
    "z_small": (float, 0.01, "ideal-line impedance threshold (pu)"),
    "b_small": (float, 0.01, "ideal-line charging threshold (pu)"),
    "xr_high": (float, 100.0, "ideal-line X/R threshold"),
    "lump_charging": (bool, True, "keep charging of merged branches as bus shunts"),
    "reference_lines": (str, "", "reference line CSV for fit-limits (default: bundled)"),
    "fit": (str, "", "fit JSON for apply-limits (default: fit_a/fit_k)"),
    "fit_a": (float, thermal.PUBLISHED_FIT.a, "log-log intercept when no fit file is given"),
    "fit_k": (float, thermal.PUBLISHED_FIT.k, "log-log slope when no fit file is given"),
    "xr_max": (float, 20.0, "reference filter: X/R upper bound"),
    "norm_rate_min": (float, 0.005, "reference filter: normalized rating lower bound"),
    "theta_deg": (float, 15.0, "angle spread of the upper-bound thermal model (deg)"),
    "clamp_min": (float, thermal.TRANSFORMER_CLAMP[0], "transformer rating floor (MVA)"),
    "clamp_max": (float, thermal.TRANSFORMER_CLAMP[1], "transformer rating ceiling (MVA)"),
    "repair": (bool, False, "after apply-limits, raise ratings violated by the AC power flow"),
    "margin": (float, 1.1, "repair margin over the violating flow"),
    "reference_gens": (str, "", "reference generator CSV for classify (default: bundled)"),
    "seed": (int, 0, "random seed for randomized stages"),
    "n_trees": (int, 100, "trees per state forest"),
    "smote_k": (int, 5, "SMOTE neighbours"),
    "basslink": (str, "", "HVDC endpoint generator ids 'mainland,tasmania'"),
    "tag_var_compensators": (bool, False, "leave reactive-only network sources unclassified"),
    "allow_unclassified": (bool, False, "zero cost instead of an error for unclassified units"),
    "pf_model": (str, "ac", "pf subcommand model: ac or dc"),
    "slack": (bool, False, "OPF with nodal slack"),
    "penalty": (float, 0.0, "slack penalty $/pu/h (0: default)"),
    "tol": (float, 0.0, "solver tolerance (0: solver default)"),
    "max_iter": (int, 0, "solver iteration cap (0: solver default)"),
    "hessian": (str, "exact", "AC-OPF Hessian: exact or gauss_newton"),
    "gap": (bool, False, "ac-opf also solves the DC relaxation and reports the gap"),
    "tol_slack": (float, diagnosis.Tolerances.slack, "diagnosis slack tolerance (pu)"),
    "tol_setpoint": (float, diagnosis.Tolerances.setpoint, "diagnosis setpoint tolerance (pu)"),
    "stages": (str, ",".join(PIPELINE_STAGES), "pipeline stage toggles, comma separated"),
}
POSITIVE = ("base_mva", "z_small", "b_small", "xr_high", "xr_max", "norm_rate_min", "margin",
            "theta_deg", "clamp_min", "clamp_max", "n_trees", "smote_k", "tol_slack", "tol_setpoint")


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _coerce(key: str, value):
    typ = KEYS[key][0]
    try:
        if typ is bool:
            return _parse_bool(value)
        if typ is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if typ is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key}: expected {typ.__name__}, got {value!r}") from None


@dataclass
class PipelineConfig:
    values: dict[str, Any]

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @classmethod
    def build(cls, file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
        vals = {k: spec[1] for k, spec in KEYS.items()}
        for src in (file_values or {}, overrides or {}):
            for k, v in src.items():
                if k not in KEYS:
                    raise ConfigError(f"unknown config key {k!r}")
                if v is not None:
                    vals[k] = _coerce(k, v)
        for k in POSITIVE:
            if not vals[k] > 0:
                raise ConfigError(f"config key {k} must be positive, got {vals[k]}")
        if vals["pf_model"] not in ("ac", "dc"):
            raise ConfigError("pf_model must be ac or dc")
        if vals["hessian"] not in ("exact", "gauss_newton"):
            raise ConfigError("hessian must be exact or gauss_newton")
        return cls(vals)


def load_config_file(path: str | None) -> dict:
    path = path or os.environ.get(ENV_CONFIG) or None
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p}: top level must be an object")
    return data


# artifact I/O ---------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def _require(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _output(cfg: PipelineConfig) -> Path:
    if not cfg.output:
        raise ConfigError("missing output path")
    return Path(cfg.output)


def new_meta() -> dict:
    return {"format": SIDECAR_FORMAT, "stages": [], "fit": None, "fuels": {}, "reduction": [],
            "repair": [], "seed": None}


def fuel_tags(model: NetworkModel) -> dict[str, str | None]:
    return {str(k): (g.fuel.value if g.fuel else None) for k, g in sorted(model.gens.items())}


def load_case(path: Path) -> tuple[NetworkModel, dict]:
    model = parse_matpower(path.read_text(encoding="utf-8"))
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.is_file() else new_meta()
    return model, meta


def save_case(model: NetworkModel, meta: dict, path: Path) -> None:
    meta = dict(meta, fuels=fuel_tags(model))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_matpower(model), encoding="utf-8")
    sidecar_path(path).write_text(_dumps(meta), encoding="utf-8")


def _roundtrip(model: NetworkModel, meta: dict) -> tuple[NetworkModel, dict]:
    """Pass through the on-disk representation so chained and stepwise runs agree."""
    meta = dict(meta, fuels=fuel_tags(model))
    return parse_matpower(write_matpower(model)), json.loads(_dumps(meta))


def raw_to_json(raw: ingest.RawTables) -> dict:
    return {f.name: [dataclasses.asdict(r) for r in getattr(raw, f.name)]
            for f in dataclasses.fields(raw)}


def raw_from_json(data: dict) -> ingest.RawTables:
    kw = {}
    for name, (_, rtype) in ingest.TABLE_FILES.items():
        kw[name] = [rtype(**r) for r in data.get(name, [])]
    return ingest.RawTables(**kw)


def solution_to_json(kind: str, sol, extra: dict | None = None) -> dict:
    out = {"kind": kind, "base_mva": sol.base_mva,
           "bus_ids": sol.bus_ids.tolist(), "vm": sol.vm.tolist(), "va": sol.va.tolist(),
           "gen_ids": sol.gen_ids.tolist(), "pg": sol.pg.tolist(), "qg": sol.qg.tolist(),
           "branch_ids": sol.branch_ids.tolist(),
           "sf": [[z.real, z.imag] for z in np.asarray(sol.sf, dtype=complex)],
           "st": [[z.real, z.imag] for z in np.asarray(sol.st, dtype=complex)]}
    out.update(extra or {})
    return out


def solution_from_json(data: dict) -> PFSolution:
    try:
        def cplx(rows):
            return np.array([complex(a, b) for a, b in rows], dtype=complex)
        return PFSolution(
            bus_ids=np.array(data["bus_ids"], dtype=int), vm=np.array(data["vm"], dtype=float),
            va=np.array(data["va"], dtype=float), gen_ids=np.array(data["gen_ids"], dtype=int),
            pg=np.array(data["pg"], dtype=float), qg=np.array(data["qg"], dtype=float),
            branch_ids=np.array(data["branch_ids"], dtype=int), sf=cplx(data["sf"]),
            st=cplx(data["st"]), converged=bool(data.get("converged", True)),
            iterations=int(data.get("iterations", 0)),
            max_mismatch=float(data.get("max_mismatch", 0.0)),
            base_mva=float(data["base_mva"]), message=str(data.get("kind", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed solution file: {exc}") from None


# model-to-model stages ------------------------------------------------------

def stage_reduce(model, meta, cfg):
    rcfg = reduction.ReductionConfig(cfg.z_small, cfg.b_small, cfg.xr_high, cfg.lump_charging)
    before = (len(model.buses), len(model.branches))
    model, log = reduction.reduce(model, rcfg)
    meta["reduction"] = meta["reduction"] + [e.as_dict() for e in log.events]
    meta["stages"].append({"stage": "reduce", "z_small": cfg.z_small, "b_small": cfg.b_small,
                           "xr_high": cfg.xr_high, "lump_charging": cfg.lump_charging})
    summary = {"buses_before": before[0], "buses_after": len(model.buses),
               "branches_before": before[1], "branches_after": len(model.branches),
               "ideal_lines": log.count("ideal_line"), "joins": log.count("join"),
               "self_loops": log.count("self_loop"), "lumped_charging": log.count("lumped_charging")}
    return model, meta, summary


def _fit_from_cfg(cfg) -> thermal.ThermalFit:
    if cfg.fit:
        data = json.loads(_require(cfg.fit, "fit file").read_text(encoding="utf-8"))
        return thermal.ThermalFit.from_dict(data)
    return thermal.ThermalFit(a=cfg.fit_a, k=cfg.fit_k, xr_max=cfg.xr_max,
                              norm_rate_min=cfg.norm_rate_min)


def run_fit(cfg) -> tuple[thermal.ThermalFit, list[thermal.ReferenceLine]]:
    path = _require(cfg.reference_lines, "reference lines") if cfg.reference_lines \
        else Path(_bundled("reference_lines.csv"))
    lines = thermal.load_reference_lines(path)
    fit = thermal.fit_loglog(lines, xr_max=cfg.xr_max, norm_rate_min=cfg.norm_rate_min)
    return fit, lines


def stage_apply_limits(model, meta, cfg, fit: thermal.ThermalFit | None = None):
    fit = fit or _fit_from_cfg(cfg)
    model = thermal.apply_limits(model, fit, math.radians(cfg.theta_deg),
                                 (cfg.clamp_min, cfg.clamp_max))
    routes = [thermal.route(model, k) for k, b in model.branches.items() if b.status]
    summary = {"fit_a": fit.a, "fit_k": fit.k, "statistical": routes.count("statistical"),
               "upper_bound": routes.count("upper_bound"), "transformer": routes.count("transformer")}
    meta["fit"] = fit.as_dict()
    meta["stages"].append({"stage": "apply-limits", "theta_deg": cfg.theta_deg,
                           "clamp": [cfg.clamp_min, cfg.clamp_max], "repair": cfg.repair})
    if cfg.repair:
        flows = ac_pf(model)
        summary["violations_before"] = len(thermal.violations(model, flows))
        model, rlog = thermal.repair_violations(model, flows, cfg.margin)
        summary["violations_after"] = len(thermal.violations(model, ac_pf(model)))
        meta["repair"] = meta["repair"] + rlog.entries
    return model, meta, summary


def _reference_gens(cfg):
    path = _require(cfg.reference_gens, "reference generators") if cfg.reference_gens \
        else Path(_bundled("reference_gens.csv"))
    return genclass.load_reference_gens(path)


def _basslink(cfg) -> tuple[int, int] | None:
    if not cfg.basslink:
        return None
    try:
        a, b = (int(s) for s in cfg.basslink.split(","))
    except ValueError:
        raise ConfigError("basslink must be 'mainland_gen_id,tasmania_gen_id'") from None
    return a, b


def stage_classify(model, meta, cfg):
    ref = _reference_gens(cfg)
    states = sorted({b.area for b in model.buses.values()} & {r.state for r in ref})
    forests = {s: genclass.train_forest(ref, s, cfg.n_trees, cfg.seed, cfg.smote_k) for s in states}
    model = genclass.classify(model, forests, _basslink(cfg), cfg.tag_var_compensators)
    meta["seed"] = cfg.seed
    meta["stages"].append({"stage": "classify", "seed": cfg.seed, "n_trees": cfg.n_trees,
                           "smote_k": cfg.smote_k, "basslink": cfg.basslink,
                           "tag_var_compensators": cfg.tag_var_compensators})
    counts: dict[str, int] = {}
    for g in model.gens.values():
        key = g.fuel.value if g.fuel else "unclassified"
        counts[key] = counts.get(key, 0) + 1
    summary = {"seed": cfg.seed, "generators": len(model.gens)}
    summary.update({f"count_{k}": v for k, v in sorted(counts.items())})
    if cfg.points:
        genclass.write_mix_report(genclass.fuel_mix_report(model, ref), cfg.points)
    return model, meta, summary


def stage_assign_costs(model, meta, cfg):
    model = genclass.assign_costs(model, cfg.allow_unclassified)
    meta["stages"].append({"stage": "assign-costs", "allow_unclassified": cfg.allow_unclassified})
    used = sorted({g.fuel for g in model.gens.values() if g.fuel is not None}, key=lambda f: f.value)
    meta["fuel_models"] = {f.value: genclass.TABLE2[f].as_dict() for f in used}
    costed = sum(1 for g in model.gens.values() if g.cost)
    return model, meta, {"generators": len(model.gens), "costed": costed}


def stage_export(model, meta, cfg):
    text = write_matpower(model)
    again = write_matpower(parse_matpower(text))
    if again != text:
        raise ValueError("exported case does not reparse to the same text")
    meta["stages"].append({"stage": "export"})
    return model, meta, {"buses": len(model.buses), "branches": len(model.branches),
                         "gens": len(model.gens), "reparse": "ok"}


def stage_equivalence(raw, cfg):
    model = ingest.to_network(raw, base_mva=cfg.base_mva, name=cfg.name)
    meta = new_meta()
    meta["stages"].append({"stage": "equivalence", "base_mva": cfg.base_mva})
    origins: dict[str, int] = {}
    for b in model.branches.values():
        origins[b.origin.value] = origins.get(b.origin.value, 0) + 1
    summary = {"buses": len(model.buses), "branches": len(model.branches),
               "gens": len(model.gens), "loads": len(model.loads), "shunts": len(model.shunts),
               "interconnectors": len(model.interconnectors())}
    summary.update({f"origin_{k}": v for k, v in sorted(origins.items())})
    return model, meta, summary


MODEL_STAGES: dict[str, Callable] = {
    "reduce": stage_reduce, "apply-limits": stage_apply_limits, "classify": stage_classify,
    "assign-costs": stage_assign_costs, "export": stage_export,
}


# commands -------------------------------------------------------------------

def cmd_ingest(cfg):
    raw = ingest.load_tables(_require(cfg.input, "input directory"))
    out = _output(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dumps(raw_to_json(raw)), encoding="utf-8")
    return {f"count_{k}": v for k, v in raw.counts().items()}


def cmd_equivalence(cfg):
    path = _require(cfg.input, "input")
    if path.is_dir():
        raw = ingest.load_tables(path)
    else:
        raw = raw_from_json(json.loads(path.read_text(encoding="utf-8")))
    model, meta, summary = stage_equivalence(raw, cfg)
    save_case(model, meta, _output(cfg))
    return summary


def _model_cmd(name):
    def run(cfg):
        model, meta = load_case(_require(cfg.input, "input case"))
        model, meta, summary = MODEL_STAGES[name](model, meta, cfg)
        save_case(model, meta, _output(cfg))
        return summary
    return run


def cmd_fit_limits(cfg):
    fit, lines = run_fit(cfg)
    out = _output(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_dumps(fit.as_dict()), encoding="utf-8")
    if cfg.points:
        thermal.write_points(thermal.filter_reference(lines, fit.xr_max, fit.norm_rate_min),
                             cfg.points)
    return {"a": fit.a, "k": fit.k, "r2": fit.r2, "n_points": fit.n_points,
            "n_reference": len(lines)}


def _solver_kw(cfg) -> dict:
    kw = {}
    if cfg.tol > 0:
        kw["tol"] = cfg.tol
    if cfg.max_iter > 0:
        kw["max_iter"] = cfg.max_iter
    return kw


def _write_json(cfg, data) -> None:
    if cfg.output:
        out = Path(cfg.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_dumps(data), encoding="utf-8")


def cmd_pf(cfg):
    model, _ = load_case(_require(cfg.input, "input case"))
    if cfg.pf_model == "dc":
        sol = dc_pf(model)
    else:
        sol = ac_pf(model, **_solver_kw(cfg))
    resid = power_balance_residual(model, sol) if cfg.pf_model == "ac" else 0.0
    _write_json(cfg, solution_to_json(f"{cfg.pf_model}_pf", sol, {
        "converged": sol.converged, "iterations": sol.iterations,
        "max_mismatch": sol.max_mismatch}))
    if not sol.converged:
        raise RuntimeError(f"power flow did not converge: {sol.message}")
    return {"model": cfg.pf_model, "converged": sol.converged, "iterations": sol.iterations,
            "max_mismatch": sol.max_mismatch, "balance_residual": resid,
            "losses_mw": sol.losses.real * sol.base_mva}


def _opf_summary(res) -> dict:
    out = {"kind": res.kind, "status": res.status.value, "objective": res.objective,
           "penalty": res.penalty, "total_slack_pu": res.total_slack(),
           "iterations": res.iterations, "solve_time_s": res.solve_time}
    ranked = res.ranked_slack()
    if ranked and ranked[0][1] > 0:
        out["top_slack_bus"], out["top_slack_pu"] = ranked[0]
    return out


def _opf_cmd(kind):
    def run(cfg):
        model, _ = load_case(_require(cfg.input, "input case"))
        kw = _solver_kw(cfg)
        penalty = cfg.penalty if cfg.penalty > 0 else None
        if kind == "dc":
            res = dc_opf(model, slack=cfg.slack, penalty=penalty, **kw)
        else:
            res = ac_opf(model, slack=cfg.slack, penalty=penalty, hessian=cfg.hessian, **kw)
        summary = _opf_summary(res)
        if kind == "ac" and cfg.gap and res.ok:
            relax = dc_opf(model, slack=cfg.slack, penalty=penalty)
            summary["dc_objective"] = relax.objective
            summary["gap_pct"] = gap(res.objective, relax.objective)
        _write_json(cfg, solution_to_json(f"{kind}_opf", res, {
            "status": res.status.value, "objective": res.objective, "penalty": res.penalty,
            "sp": res.sp.tolist(), "sq": res.sq.tolist(), "binding": res.binding,
            "converged": res.ok}))
        if not res.ok:
            raise RuntimeError(f"{kind}-opf ended with status {res.status.value}: {res.message}")
        return summary
    return run


def cmd_diagnose(cfg):
    model, _ = load_case(_require(cfg.input, "input case"))
    rep = diagnosis.diagnose(model, diagnosis.Tolerances(cfg.tol_slack, cfg.tol_setpoint))
    if cfg.output:
        out = Path(cfg.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rep.to_text() + "\n", encoding="utf-8")
    summary = {"verdict": rep.verdict.value, "top_offender": rep.top_offender()}
    for s in rep.stages:
        summary[f"{s.name}.ran"] = s.ran
        summary[f"{s.name}.passed"] = s.passed
        summary[f"{s.name}.max"] = s.max_slack
    return summary


def cmd_compare(cfg):
    a = solution_from_json(json.loads(_require(cfg.input, "input").read_text(encoding="utf-8")))
    b = solution_from_json(json.loads(_require(cfg.other, "other").read_text(encoding="utf-8")))
    delta = diagnosis.compare_solutions(a, b)
    path = cfg.points or cfg.output
    if path:
        rows = ["bus,dvm_pu,dva_deg"]
        rows += [f"{i},{v!r},{d!r}" for i, v, d in zip(delta.bus_ids.tolist(), delta.dvm.tolist(),
                                                       delta.dva.tolist())]
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    summary = {"buses": len(delta.bus_ids), "gens": len(delta.gen_ids)}
    summary.update(delta.summary())
    return summary


def cmd_pipeline(cfg):
    stages = [s.strip() for s in cfg.stages.split(",") if s.strip()]
    unknown = [s for s in stages if s not in PIPELINE_STAGES]
    if unknown:
        raise ConfigError(f"unknown pipeline stage(s): {', '.join(unknown)}")
    path = _require(cfg.input, "input")
    summary: dict[str, Any] = {}
    if path.is_dir() or path.suffix == ".json":
        if "equivalence" not in stages:
            raise ConfigError("a relational input needs the equivalence stage")
        if path.is_dir():
            raw = ingest.load_tables(path)
        else:
            raw = raw_from_json(json.loads(path.read_text(encoding="utf-8")))
        raw = raw_from_json(json.loads(_dumps(raw_to_json(raw))))
        model, meta, s = stage_equivalence(raw, cfg)
        summary.update({f"equivalence.{k}": v for k, v in s.items()})
    else:
        model, meta = load_case(path)
    model, meta = _roundtrip(model, meta)
    fit = None
    if "fit-limits" in stages:
        fit, _ = run_fit(cfg)
        fit = thermal.ThermalFit.from_dict(json.loads(_dumps(fit.as_dict())))
    for name in ("reduce", "apply-limits", "classify", "assign-costs", "export"):
        if name not in stages:
            continue
        if name == "apply-limits":
            model, meta, s = stage_apply_limits(model, meta, cfg, fit)
        else:
            model, meta, s = MODEL_STAGES[name](model, meta, cfg)
        summary.update({f"{name}.{k}": v for k, v in s.items()})
        model, meta = _roundtrip(model, meta)
    save_case(model, meta, _output(cfg))
    summary["stages"] = ",".join(stages)
    return summary


COMMANDS: dict[str, tuple[Callable, str]] = {
    "ingest": (cmd_ingest, "parse relational CSV tables to a raw JSON artifact"),
    "equivalence": (cmd_equivalence, "convert raw tables to a per-unit MATPOWER case"),
    "reduce": (_model_cmd("reduce"), "remove ideal lines and join degree-2 buses"),
    "fit-limits": (cmd_fit_limits, "fit the log-log thermal model to reference lines"),
    "apply-limits": (_model_cmd("apply-limits"), "set branch thermal limits"),
    "classify": (_model_cmd("classify"), "assign generator fuel categories"),
    "assign-costs": (_model_cmd("assign-costs"), "assign linear costs and minimum output"),
    "pf": (cmd_pf, "AC or DC power flow"),
    "dc-opf": (_opf_cmd("dc"), "DC optimal power flow"),
    "ac-opf": (_opf_cmd("ac"), "AC optimal power flow"),
    "diagnose": (cmd_diagnose, "staged infeasibility diagnosis"),
    "compare": (cmd_compare, "compare two solution files"),
    "export": (_model_cmd("export"), "write a final MATPOWER case and check it reparses"),
    "pipeline": (cmd_pipeline, "run the enabled model-building stages in order"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snembench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${ENV_CONFIG})")
    for key, (typ, default, text) in KEYS.items():
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                            metavar=typ.__name__.upper(), help=f"{text} [{default!r}]")
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        p.add_argument("positional_input", nargs="?", metavar="INPUT", help="same as --input")
    return parser


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def run(command: str, config: PipelineConfig) -> dict:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    return COMMANDS[command][0](config)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    overrides = {k: getattr(args, k) for k in KEYS}
    if args.positional_input and not overrides["input"]:
        overrides["input"] = args.positional_input
    try:
        cfg = PipelineConfig.build(load_config_file(args.config), overrides)
        summary = run(args.command, cfg)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error: command={args.command} module={module} {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    print(f"command={args.command}")
    for k, v in summary.items():
        print(f"{k}={_format(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
