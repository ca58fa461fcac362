"""Command-line experiment runner.

    dpwnn run --config run.toml --out results/ [--seed N] [--mode dpwnn|pwls|both]

The configuration is a TOML file; see README.md for every key.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .mesh import ConfigurationError, build_uniform_mesh
from .problems import PROBLEMS, make_form, reference_rows
from .solver import (AdamConfig, OuterConfig, RunRecord, SolverAbort, WidthSchedule, outer_loop,
                     pwls_baseline)

log = logging.getLogger("dpwnn")

MODES = ("dpwnn", "pwls", "both")
DEFAULT_SCHEDULE = {2: "2r+19", 3: "r+2"}


class ConfigError(ConfigurationError):
    """Invalid run configuration; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ReferenceConfig:
    enabled: bool = True
    refine: int = 2
    width_shift: int = 4


@dataclass(frozen=True)
class RunConfig:
    problem: str
    omega: float
    cells: int
    schedule: WidthSchedule
    tol: float = 1e-6
    maxit: int = 20
    epochs: int = 10
    rho: float = 1e-6
    grad_tol: float = 1e-6
    truncation: float = 1e-13
    quadrature_order: int | None = None
    seed: int = 0
    mode: str = "dpwnn"
    reproducible: bool = True
    problem_options: dict = field(default_factory=dict)
    adam: AdamConfig = field(default_factory=AdamConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)

    def outer(self) -> OuterConfig:
        return OuterConfig(self.schedule, self.tol, self.maxit, self.epochs, self.rho, self.grad_tol,
                           self.truncation, self.seed, self.adam)

    def build_problem(self):
        return PROBLEMS[self.problem](self.omega, **self.problem_options)

    def echo(self) -> dict:
        """Plain-data form that ``parse_config`` accepts back."""
        out = {"problem": self.problem, "omega": self.omega, "cells": self.cells,
               "schedule": str(self.schedule), "tol": self.tol, "maxit": self.maxit,
               "epochs": self.epochs, "rho": self.rho, "grad_tol": self.grad_tol,
               "truncation": self.truncation, "seed": self.seed, "mode": self.mode,
               "reproducible": self.reproducible}
        if self.quadrature_order is not None:
            out["quadrature_order"] = self.quadrature_order
        opts = dict(self.problem_options)
        if "eps" in opts:
            opts["eps"] = [opts["eps"].real, opts["eps"].imag]
        for k in ("axis", "source"):
            if k in opts:
                opts[k] = list(opts[k])
        out.update(opts)
        out["adam"] = asdict(self.adam)
        out["reference"] = asdict(self.reference)
        return out


# ------------------------------------------------------------------ parsing

# problem-specific keys: name -> (problems accepting it, converter)
def _real(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return float(v)


def _positive(key, v):
    v = _real(key, v)
    if v <= 0:
        raise ConfigError(key, f"must be positive, got {v}")
    return v


def _integer(key, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    return v


def _boolean(key, v):
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true or false, got {v!r}")
    return v


def _vector3(key, v):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(key, "expected a list of three numbers")
    return tuple(_real(key, x) for x in v)


def _complex(key, v):
    if isinstance(v, list) and len(v) == 2:
        return complex(_real(key, v[0]), _real(key, v[1]))
    return complex(_real(key, v), 0.0)


_MAXWELL = ("maxwell_dipole", "maxwell_3d_piecewise")
_PROBLEM_KEYS = {
    "eps": (("maxwell_dipole",), _complex),
    "sigma": (_MAXWELL, _positive),
    "mu": (_MAXWELL, _positive),
    "current": (_MAXWELL, _real),
    "axis": (_MAXWELL, _vector3),
    "source": (_MAXWELL + ("helmholtz_3d_point_source",), _vector3),
    "media_threshold": (("maxwell_3d_piecewise",), _real),
}
_TOP_KEYS = {"problem", "omega", "omega_over_pi", "cells", "schedule", "tol", "maxit", "epochs", "rho",
             "grad_tol", "truncation", "quadrature_order", "seed", "mode", "reproducible", "adam",
             "reference"} | set(_PROBLEM_KEYS)


def _schedule(v) -> WidthSchedule:
    if isinstance(v, str):
        try:
            return WidthSchedule.parse(v)
        except ConfigurationError as exc:
            raise ConfigError("schedule", str(exc)) from None
    if isinstance(v, dict):
        unknown = set(v) - {"slope", "intercept"}
        if unknown:
            raise ConfigError(f"schedule.{sorted(unknown)[0]}", "unknown key")
        if "slope" not in v or "intercept" not in v:
            raise ConfigError("schedule", "needs both slope and intercept")
        slope = _integer("schedule.slope", v["slope"], 1)
        return WidthSchedule(slope, _integer("schedule.intercept", v["intercept"]))
    raise ConfigError("schedule", "expected a string like '2r+19' or a table with slope/intercept")


def config_from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "problem" not in data:
        raise ConfigError("problem", "missing")
    name = data["problem"]
    if name not in PROBLEMS:
        raise ConfigError("problem", f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    if ("omega" in data) == ("omega_over_pi" in data):
        raise ConfigError("omega", "give exactly one of omega or omega_over_pi")
    omega = _positive("omega", data["omega"]) if "omega" in data else \
        np.pi * _positive("omega_over_pi", data["omega_over_pi"])
    if "cells" not in data:
        raise ConfigError("cells", "missing")
    cells = _integer("cells", data["cells"], 1)

    opts = {}
    for key, (allowed, conv) in _PROBLEM_KEYS.items():
        if key in data:
            if name not in allowed:
                raise ConfigError(key, f"not a parameter of problem {name!r}")
            opts[key] = conv(key, data[key])

    kw = {}
    for key in ("tol", "rho", "grad_tol", "truncation"):
        if key in data:
            kw[key] = _real(key, data[key])
            if (kw[key] <= 0 if key in ("tol", "truncation") else kw[key] < 0):
                raise ConfigError(key, f"out of range: {kw[key]}")
    if "truncation" in kw and kw["truncation"] >= 1:
        raise ConfigError("truncation", "must be below 1")
    if "maxit" in data:
        kw["maxit"] = _integer("maxit", data["maxit"], 1)
    if "epochs" in data:
        kw["epochs"] = _integer("epochs", data["epochs"], 0)
    if "seed" in data:
        kw["seed"] = _integer("seed", data["seed"], 0)
    if "quadrature_order" in data:
        kw["quadrature_order"] = _integer("quadrature_order", data["quadrature_order"], 1)
        if kw["quadrature_order"] > 64:
            raise ConfigError("quadrature_order", "must be <= 64")
    if "reproducible" in data:
        kw["reproducible"] = _boolean("reproducible", data["reproducible"])
    if "mode" in data:
        if data["mode"] not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {data['mode']!r}")
        kw["mode"] = data["mode"]

    if "adam" in data:
        a = data["adam"]
        if not isinstance(a, dict):
            raise ConfigError("adam", "expected a table")
        bad = sorted(set(a) - {"beta1", "beta2", "eps", "eta1"})
        if bad:
            raise ConfigError(f"adam.{bad[0]}", "unknown key")
        vals = {k: _real(f"adam.{k}", v) for k, v in a.items()}
        for k in ("beta1", "beta2"):
            if k in vals and not 0 < vals[k] < 1:
                raise ConfigError(f"adam.{k}", "must lie in (0, 1)")
        for k in ("eps", "eta1"):
            if k in vals and vals[k] <= 0:
                raise ConfigError(f"adam.{k}", "must be positive")
        kw["adam"] = AdamConfig(**vals)
    if "reference" in data:
        rc = data["reference"]
        if not isinstance(rc, dict):
            raise ConfigError("reference", "expected a table")
        bad = sorted(set(rc) - {"enabled", "refine", "width_shift"})
        if bad:
            raise ConfigError(f"reference.{bad[0]}", "unknown key")
        vals = {}
        if "enabled" in rc:
            vals["enabled"] = _boolean("reference.enabled", rc["enabled"])
        if "refine" in rc:
            vals["refine"] = _integer("reference.refine", rc["refine"], 2)
        if "width_shift" in rc:
            vals["width_shift"] = _integer("reference.width_shift", rc["width_shift"], 0)
        kw["reference"] = ReferenceConfig(**vals)

    dim = 3 if name in _MAXWELL or name == "helmholtz_3d_point_source" else 2
    schedule = _schedule(data.get("schedule", DEFAULT_SCHEDULE[dim]))
    if schedule(1) < (2 if dim == 3 else 1):
        raise ConfigError("schedule", f"first width {schedule(1)} is too small")
    cfg = RunConfig(name, omega, cells, schedule, problem_options=opts, **kw)
    try:  # problem-level validation (mode index, source placement, mesh alignment)
        problem = cfg.build_problem()
        problem.check_mesh(build_uniform_mesh(problem.domain, cells))
    except ConfigError:
        raise
    except ConfigurationError as exc:
        key = "omega" if "omega" in str(exc) else ("cells" if "mesh" in str(exc) else "problem")
        raise ConfigError(key, str(exc)) from None
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"malformed TOML: {exc}") from None
    return config_from_dict(data)


# ------------------------------------------------------------------ output

def fmt(x) -> str:
    """Full-precision scientific notation (17 significant digits); empty for missing."""
    return "" if x is None else f"{x:.16e}"


def record_rows(record: RunRecord, reproducible: bool):
    """Rows of ``record.csv``: one per coefficient solve, then one ``final`` row per layer."""
    def wall(ms):
        return "0" if reproducible else f"{ms:.3f}"

    rows = [["0", "final", fmt(record.J0), fmt(record.energy_error0), wall(0.0)]]
    for s in record.steps:
        for e in s.epochs:
            rows.append([str(s.r), str(e.epoch), fmt(e.J), fmt(e.energy_error), wall(e.wall_ms)])
        rows.append([str(s.r), "final", fmt(s.J), fmt(s.energy_error), wall(s.wall_ms)])
    return rows


def write_record(path: Path, record: RunRecord, reproducible: bool):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "epoch", "J", "energy_error", "wall_ms"])
        w.writerows(record_rows(record, reproducible))


def write_angles(out: Path, record: RunRecord):
    for s in record.steps:
        a = s.angles
        with open(out / f"angles_r{s.r}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["element", "angle", "index", "value"])
            for k in range(a.n_elements):
                for i, v in enumerate(a.theta[k]):
                    w.writerow([k, "theta", i, fmt(float(v))])
                if a.zeta is not None:
                    for i, v in enumerate(a.zeta[k]):
                        w.writerow([k, "zeta", i, fmt(float(v))])


def summarize(cfg: RunConfig, mode: str, record: RunRecord, n_elements: int, seconds: float) -> dict:
    return {
        "mode": mode,
        "problem": cfg.problem,
        "seed": cfg.seed,
        "converged": record.converged,
        "aborted": record.aborted,
        "iterations": len(record.steps),
        "final_J": fmt(record.final_J),
        "final_energy_error": fmt(record.final_energy_error),
        "widths": [s.width for s in record.steps],
        "dofs_per_element": [s.n_basis for s in record.steps],
        "dofs_total": sum(s.n_basis for s in record.steps) * n_elements,
        "wall_seconds": None if cfg.reproducible else round(seconds, 3),
        "config": cfg.echo(),
    }


# ------------------------------------------------------------------ runs

def _reference(cfg: RunConfig, problem, form):
    if problem.exact is not None or not cfg.reference.enabled:
        return None
    fine_cfg = replace(cfg.outer(), schedule=WidthSchedule(cfg.schedule.slope,
                                                           cfg.schedule.intercept + cfg.reference.width_shift))
    fine_mesh = build_uniform_mesh(problem.domain, cfg.cells * cfg.reference.refine)
    fine = make_form(problem, fine_mesh, cfg.quadrature_order)
    log.info("computing reference solution on %d cells per axis", cfg.cells * cfg.reference.refine)
    sol, _ = outer_loop(fine, fine_cfg)
    return reference_rows(form, fine, sol)


def _run_one(cfg: RunConfig, mode: str, out: Path, form, reference, width=None):
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    def flush(rec):
        write_record(out / "record.csv", rec, cfg.reproducible)

    try:
        if mode == "dpwnn":
            _, record = outer_loop(form, cfg.outer(), reference, on_step=flush)
        else:
            _, record = pwls_baseline(form, width, cfg.truncation, reference)
    except SolverAbort as exc:
        if exc.record is not None:
            flush(exc.record)
            write_angles(out, exc.record)
        raise
    flush(record)
    write_angles(out, record)
    summary = summarize(cfg, mode, record, form.mesh.n_elements, time.perf_counter() - t0)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return record, summary


def run(cfg: RunConfig, out: Path) -> dict:
    """Execute ``cfg`` and write its artifacts below ``out``; returns the top-level summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    mesh = build_uniform_mesh(problem.domain, cfg.cells)
    form = make_form(problem, mesh, cfg.quadrature_order)
    reference = _reference(cfg, problem, form)
    if cfg.mode == "dpwnn":
        return _run_one(cfg, "dpwnn", out, form, reference)[1]
    if cfg.mode == "pwls":
        return _run_one(cfg, "pwls", out, form, reference, cfg.schedule(1))[1]
    rec, s_dp = _run_one(cfg, "dpwnn", out / "dpwnn", form, reference)
    width = rec.steps[-1].width if rec.steps else cfg.schedule(1)
    _, s_pw = _run_one(cfg, "pwls", out / "pwls", form, reference, width)
    e_dp, e_pw = rec.final_energy_error, _float(s_pw["final_energy_error"])
    joint = {
        "mode": "both",
        "problem": cfg.problem,
        "seed": cfg.seed,
        "pwls_width": width,
        "dpwnn": {k: s_dp[k] for k in ("final_J", "final_energy_error", "iterations", "dofs_total")},
        "pwls": {k: s_pw[k] for k in ("final_J", "final_energy_error", "iterations", "dofs_total")},
        "error_ratio": fmt(e_dp / e_pw) if e_dp is not None and e_pw else None,
        "config": cfg.echo(),
    }
    (out / "summary.json").write_text(json.dumps(joint, indent=2) + "\n")
    return joint


def _float(s):
    return float(s) if s else None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dpwnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment from a TOML configuration")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = parse_config(args.config.read_text())
        if args.seed is not None:
            cfg = replace(cfg, seed=_integer("seed", args.seed, 0))
        if args.mode is not None:
            cfg = replace(cfg, mode=args.mode)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(cfg, args.out)
    except SolverAbort as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
