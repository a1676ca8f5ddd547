"""Target-cavity spectra for the fig3_* presets (two-tone controller, varied probe)."""

from pathlib import Path

from _common import parser, plot_spectra, print_table, run_all

NAMES = ["fig3_orange", "fig3_purple", "fig3_green", "fig3_red", "fig3_blue", "fig3_yellow"]

if __name__ == "__main__":
    args = parser(__doc__, "results/fig3").parse_args()
    out = Path(args.out)
    print_table(run_all(NAMES, out, args.jobs))
    if args.plot:
        plot_spectra(NAMES, out, "fig3.png")
