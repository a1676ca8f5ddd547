"""Map of the analytic Stokes amplitude over mechanical damping and coupling."""

import argparse
import warnings
from pathlib import Path

import numpy as np

from omsim.analytic import sweep_gamma_K
from omsim.model import SystemParams, ansatz_drive

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/sweep")
    ap.add_argument("--n-gamma", type=int, default=40)
    ap.add_argument("--n-K", type=int, default=60)
    ap.add_argument("--plot", action="store_true", help="also save a PNG (needs matplotlib)")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gammas = np.linspace(1e-4, 1e-3, args.n_gamma)
    Ks = np.linspace(0.0, 1e-3, args.n_K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = sweep_gamma_K(SystemParams(), ansatz_drive(), gammas, Ks)
    grid.to_csv(out / "sweep_grid.csv")
    grid.ridge_to_csv(out / "sweep_ridge.csv")
    ratio = np.array([k / g for g, k, _ in grid.ridge])
    print(f"ridge K*/gamma: mean {ratio.mean():.4f}, range [{ratio.min():.4f}, {ratio.max():.4f}]")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4.5))
        im = ax.pcolormesh(Ks, gammas, grid.magnitude, shading="auto")
        ax.plot([k for _, k, _ in grid.ridge], [g for g, _, _ in grid.ridge], "w--", lw=1)
        ax.set_xlabel("K / Omega0")
        ax.set_ylabel("gamma / Omega0")
        fig.colorbar(im, label="|<a_t0>|")
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=150)
