"""Shared helpers for the experiment scripts."""

import argparse
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from omsim.cumulant import build_moment_ode, vacuum_state
from omsim.dynamics import detect_steady
from omsim.model import preset
from omsim.spectrum import compute_spectrum, default_grid, find_peaks_eta, propagate_two_time


def parser(description: str, default_out: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out", default=default_out, help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    ap.add_argument("--plot", action="store_true", help="also save a PNG (needs matplotlib)")
    return ap


def run_preset(name: str, out: Path) -> dict:
    """Steady state, correlation, spectrum and peaks for one preset."""
    p = preset(name)
    ode = build_moment_ode(p.params, p.drive)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        steady = detect_steady(ode, vacuum_state())
        corr = propagate_two_time(ode, steady)
        spec = compute_spectrum(corr, p.drive, default_grid(p.drive, p.params))
    peaks = find_peaks_eta(spec)
    spec.to_csv(out / f"spectrum_{name}.csv")
    peaks.to_json(out / f"peaks_{name}.json")
    return {"name": name, "converged_at": steady.converged_at, "argmax": spec.argmax,
            "decay_time": corr.decay_time(),
            "peaks": [(pk.delta_center, pk.kind, pk.eta) for pk in peaks.peaks]}


def run_all(names, out: Path, jobs: int) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_preset, names, [out] * len(names)))
    else:
        results = [run_preset(n, out) for n in names]
    (out / "summary.json").write_text(json.dumps(results, indent=2) + "\n")
    return results


def print_table(results):
    for r in results:
        print(f"{r['name']:12s} argmax {r['argmax']:+.3f}  converged t={r['converged_at']:.0f}")
        for delta, kind, eta in r["peaks"]:
            print(f"    {kind:16s} delta={delta:+.2f}  eta={eta:.4g}")


def plot_spectra(names, out: Path, filename: str, shift: float = 3.0):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    fig, ax = plt.subplots(figsize=(7, 5))
    for k, name in enumerate(names):
        data = np.genfromtxt(out / f"spectrum_{name}.csv", delimiter=",", names=True)
        ax.plot(data["delta"], np.log10(data["normalized"]) + shift * k, label=name, lw=0.8)
    ax.set_xlabel("(omega - omega0) / Omega0")
    ax.set_ylabel("log10 normalized |S| (shifted)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / filename, dpi=150)
