"""Command-line front end.

Every subcommand resolves one or more jobs (named presets or an inline
configuration), runs them, writes CSV/JSON artifacts plus ``manifest.json``
into the output directory and exits with 0 (success), 1 (validation error),
2 (convergence failure) or 3 (I/O error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analytic, dynamics, spectrum
from .cumulant import MODES, build_moment_ode, vacuum_state
from .errors import OmsimError, ValidationError
from .model import (DriveConfig, SystemParams, Diagnostic, drive_from_dict, errors,
                    params_from_dict, preset, preset_names, validate)

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

COMMANDS = ("validate", "steady", "sweep", "evolve", "spectrum", "presets")
PARAM_KEYS = ("g0", "kappa", "gamma", "K", "Omega0", "omega0", "Omega_c", "Omega_t")
DEFAULT_GAMMA_RANGE = "1e-4:1e-3:40"
DEFAULT_K_RANGE = "0:1e-3:60"
EXIT_IO = 3


@dataclass
class Job:
    name: str
    params: SystemParams
    drive: DriveConfig
    overrides: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    command: str
    jobs: list
    out: Path
    options: dict


# ---------------------------------------------------------------------------
# configuration

def parse_range(text: str) -> np.ndarray:
    """``start:stop:count`` -> ``linspace(start, stop, count)``."""
    try:
        a, b, n = text.split(":")
        n = int(n)
        a, b = float(a), float(b)
    except ValueError:
        raise ValueError(f"range {text!r} must look like start:stop:count") from None
    if n < 1:
        raise ValueError("range count must be positive")
    return np.linspace(a, b, n)


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ValueError(f"--set expects key=value, got {text!r}")
    return key.strip(), value.strip()


def apply_overrides(params: SystemParams, drive: DriveConfig, overrides: dict):
    updates = {}
    for key, value in overrides.items():
        if key in PARAM_KEYS:
            updates[key] = float(value)
        elif key in ("frame_detuning", "xi_ref"):
            drive = drive.with_frame(value)
        else:
            raise ValueError(f"unknown override {key!r}; allowed: "
                             + ", ".join(PARAM_KEYS + ("frame_detuning",)))
    if updates:
        params = params.with_updates(**updates)
    return params, drive


def load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def resolve(args) -> RunConfig:
    file_cfg = load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - {"preset", "params", "drive", "options"}
    if unknown:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    options = dict(file_cfg.get("options", {}))
    for key in ("tol", "tol_ss", "T", "dt", "grid", "window", "coherence_time",
                "peak_window", "alpha", "t_end", "max_periods", "gamma_range", "K_range"):
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value

    overrides = dict(parse_assignment(s) for s in (args.set or []))
    presets = list(args.preset or [])
    if isinstance(file_cfg.get("preset"), str):
        presets = presets or [file_cfg["preset"]]
    inline = "params" in file_cfg or "drive" in file_cfg

    jobs = []
    if args.command == "presets":
        pass
    elif presets and inline:
        raise ValueError("give either a preset or an inline params/drive block, not both")
    elif presets:
        for name in presets:
            p = preset(name)
            params, drive = apply_overrides(p.params, p.drive, overrides)
            jobs.append(Job(name, params, drive, overrides))
    elif inline:
        params = params_from_dict(file_cfg.get("params", {}))
        drive = drive_from_dict(file_cfg.get("drive", {}))
        params, drive = apply_overrides(params, drive, overrides)
        jobs.append(Job("config", params, drive, overrides))
    elif args.command != "sweep":
        raise ValueError("no system given: use --preset NAME or --config FILE")
    else:
        jobs.append(Job("default", *apply_overrides(SystemParams(), analytic_default_drive(),
                                                   overrides), overrides))

    out = Path(args.out or os.environ.get("OMSIM_OUTPUT_DIR") or "omsim_out")
    return RunConfig(args.command, jobs, out, options)


def analytic_default_drive() -> DriveConfig:
    from .model import ansatz_drive
    return ansatz_drive()


# ---------------------------------------------------------------------------
# serialisation

def _num(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [_num(x.real), _num(x.imag)]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def write_json(path: Path, data) -> Path:
    # repr() of a float is its shortest round-trip form, i.e. exact to 17 digits
    path.write_text(json.dumps(_num(data), indent=2, sort_keys=False) + "\n")
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def job_record(job: Job) -> dict:
    return {"name": job.name, "params": job.params.to_dict(), "drive": job.drive.to_dict(),
            "overrides": job.overrides}


def versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy", "sympy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


# ---------------------------------------------------------------------------
# job runners (module level so they can be pickled for the worker pool)

def _check(job: Job):
    diags = validate(job.params, job.drive)
    errs = errors(diags)
    if errs:
        raise ValidationError(errs)
    return diags


def run_steady(job: Job, out: Path, options: dict) -> dict:
    _check(job)
    closed = analytic.stokes_closed_form(job.params, job.drive)
    oracle = analytic.stokes_linear_solve(job.params, job.drive)
    diff = {k: getattr(closed, k) - getattr(oracle, k)
            for k in ("a_t0", "a_cm", "b_c", "b_t")}
    rel = abs(diff["a_t0"]) / abs(oracle.a_t0) if oracle.a_t0 else abs(diff["a_t0"])
    path = write_json(out / f"steady_{job.name}.json", {
        "closed_form": closed.to_dict(), "oracle": oracle.to_dict(),
        "difference": diff, "relative_difference_a_t0": rel,
        "stokes_magnitude": abs(closed.a_t0)})
    return {"outputs": [path], "residuals": {"relative_difference_a_t0": rel}}


def run_sweep(job: Job, out: Path, options: dict) -> dict:
    _check(job)
    gammas = parse_range(options.get("gamma_range") or DEFAULT_GAMMA_RANGE)
    Ks = parse_range(options.get("K_range") or DEFAULT_K_RANGE)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = analytic.sweep_gamma_K(job.params, job.drive, gammas, Ks)
    p1 = grid.to_csv(out / f"sweep_{job.name}_grid.csv")
    p2 = grid.ridge_to_csv(out / f"sweep_{job.name}_ridge.csv")
    ratios = [k / g for g, k, _ in grid.ridge]
    return {"outputs": [p1, p2], "residuals": {"masked_cells": int(grid.mask.sum()),
                                               "K_star_over_gamma": ratios}}


def run_evolve(job: Job, out: Path, options: dict) -> dict:
    _check(job)
    ode = build_moment_ode(job.params, job.drive)
    t_end = float(options.get("t_end", 4e4))
    dt = float(options.get("dt") or 1.0)
    times = np.arange(0.0, t_end + 0.5 * dt, dt)
    times = times[times <= t_end]
    traj = dynamics.integrate(ode, vacuum_state(), times[-1],
                              tol=float(options.get("tol", dynamics.DEFAULT_TOL)),
                              t_eval=times)
    path = traj.to_csv(out / f"evolve_{job.name}.csv")
    herm = max(s.hermiticity_residual() for s in traj.states[:: max(1, len(times) // 200)])
    return {"outputs": [path], "residuals": {"hermiticity": herm},
            "truncation_warning": traj.truncation_warning}


def run_spectrum(job: Job, out: Path, options: dict) -> dict:
    _check(job)
    tol = float(options.get("tol", dynamics.DEFAULT_TOL))
    ode = build_moment_ode(job.params, job.drive)
    steady = dynamics.detect_steady(
        ode, vacuum_state(), tol_ss=float(options.get("tol_ss", dynamics.DEFAULT_TOL_SS)),
        max_periods=int(options.get("max_periods", 100_000)), tol=tol)
    T = options.get("T")
    dt = options.get("dt")
    corr = spectrum.propagate_two_time(ode, steady, options.get("alpha", "target"),
                                       T=None if T is None else float(T),
                                       dt=None if dt is None else float(dt), tol=tol)
    grid = None
    if options.get("grid"):
        grid = parse_range(options["grid"])
    spec = spectrum.compute_spectrum(corr, job.drive, grid,
                                     window=options.get("window", "exp"),
                                     coherence_time=options.get("coherence_time"))
    peaks = spectrum.find_peaks_eta(spec, float(options.get("peak_window",
                                                            spectrum.DEFAULT_PEAK_WINDOW)))
    p1 = spec.to_csv(out / f"spectrum_{job.name}.csv")
    p2 = spec.cumulant_only().to_csv(out / f"spectrum_{job.name}_cumulant.csv")
    p3 = Path(out / f"peaks_{job.name}.json")
    peaks.to_json(p3)
    p4 = write_json(out / f"steady_state_{job.name}.json", {
        **steady.summary(), "argmax_delta": spec.argmax,
        "correlation": {"T": corr.T, "dt": corr.dt, "decay_time": corr.decay_time()}})
    return {"outputs": [p1, p2, p3, p4],
            "residuals": {"tol_ss_residual": steady.residual,
                          "fixed_point_residual": steady.fixed_point_residual,
                          "converged_at": steady.converged_at},
            "truncation_warning": steady.truncation_warning}


RUNNERS = {"steady": run_steady, "sweep": run_sweep, "evolve": run_evolve,
           "spectrum": run_spectrum}


def _run_job(command: str, job: Job, out: Path, options: dict) -> dict:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = RUNNERS[command](job, out, options)
    result["warnings"] = sorted({str(w.message) for w in caught})
    return result


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="omsim", description="Coupled optomechanical "
                                 "systems under multi-tone driving.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", action="append", help="named preset (repeatable)")
    common.add_argument("--config", help="TOML file with params/drive/options tables")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a parameter after preset resolution")
    common.add_argument("--out", help="output directory (default $OMSIM_OUTPUT_DIR)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--tol", type=float, help="integrator relative tolerance")

    sub.add_parser("presets", parents=[common], help="list the preset catalog")
    sub.add_parser("validate", parents=[common], help="check parameters and drive")
    sub.add_parser("steady", parents=[common], help="analytic sideband steady state")
    sw = sub.add_parser("sweep", parents=[common], help="gamma-K map of the Stokes amplitude")
    sw.add_argument("--gamma-range", dest="gamma_range", help="start:stop:count")
    sw.add_argument("--K-range", dest="K_range", help="start:stop:count")
    ev = sub.add_parser("evolve", parents=[common], help="time evolution from vacuum")
    ev.add_argument("--t-end", dest="t_end", type=float, help="final time (units 1/Omega0)")
    ev.add_argument("--dt", type=float, help="output sample step")
    sp = sub.add_parser("spectrum", parents=[common], help="output power spectrum and eta")
    sp.add_argument("--tol-ss", dest="tol_ss", type=float, help="steady-state tolerance")
    sp.add_argument("--max-periods", dest="max_periods", type=int)
    sp.add_argument("--T", type=float, help="correlation span")
    sp.add_argument("--dt", type=float, help="correlation sample step")
    sp.add_argument("--grid", help="detuning grid start:stop:count")
    sp.add_argument("--window", choices=("exp", "rect", "hann"))
    sp.add_argument("--coherence-time", dest="coherence_time", type=float)
    sp.add_argument("--peak-window", dest="peak_window", type=float)
    sp.add_argument("--alpha", choices=("controller", "target"))
    return ap


def _error_payload(exc: BaseException, code: int) -> dict:
    message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    payload = {"error": type(exc).__name__, "message": message, "exit_code": code}
    if isinstance(exc, ValidationError):
        payload["diagnostics"] = [d.to_dict() for d in exc.diagnostics]
    residuals = getattr(exc, "residuals", None)
    if residuals:
        payload["residual_history_tail"] = [float(r) for r in residuals[-20:]]
    return payload


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, OmsimError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def run(cfg: RunConfig, jobs: int = 1, stdout=None) -> int:
    stdout = stdout or sys.stdout
    if cfg.command == "presets":
        for name in preset_names():
            p = preset(name)
            print(f"{name}\t{p.notes}", file=stdout)
        return 0
    if cfg.command == "validate":
        worst = 0
        report = []
        for job in cfg.jobs:
            diags = validate(job.params, job.drive)
            report.append({"name": job.name, "diagnostics": [d.to_dict() for d in diags]})
            if errors(diags):
                worst = 1
        print(json.dumps(report, indent=2), file=stdout)
        return worst

    cfg.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if jobs > 1 and len(cfg.jobs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_job, cfg.command, j, cfg.out, cfg.options)
                       for j in cfg.jobs]
            results = [f.result() for f in futures]
    else:
        results = [_run_job(cfg.command, j, cfg.out, cfg.options) for j in cfg.jobs]

    manifest = {
        "command": cfg.command, "options": cfg.options, "versions": versions(),
        "wall_clock_seconds": time.perf_counter() - start,
        "jobs": [],
    }
    for job, res in zip(cfg.jobs, results):
        manifest["jobs"].append({
            **job_record(job), "residuals": res.get("residuals", {}),
            "warnings": res.get("warnings", []),
            "truncation_warning": res.get("truncation_warning", False),
            "outputs": [{"file": Path(p).name, "sha256": sha256(p)} for p in res["outputs"]],
        })
    write_json(cfg.out / "manifest.json", manifest)
    for entry in manifest["jobs"]:
        for f in entry["outputs"]:
            print(cfg.out / f["file"], file=stdout)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return run(cfg, jobs=max(1, args.jobs))
    except Exception as exc:          # every failure becomes a machine-readable error
        code = _exit_code(exc)
        print(json.dumps(_error_payload(exc, code)), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
