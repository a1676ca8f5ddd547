"""Target-cavity spectra for the fig2_* presets."""

from pathlib import Path

from _common import parser, plot_spectra, print_table, run_all

NAMES = ["fig2_red", "fig2_green", "fig2_orange", "fig2_blue", "fig2b_black"]

if __name__ == "__main__":
    args = parser(__doc__, "results/fig2").parse_args()
    out = Path(args.out)
    print_table(run_all(NAMES, out, args.jobs))
    if args.plot:
        plot_spectra(NAMES[:4], out, "fig2.png")
