"""One script per figure kind: CSV path(s) and an output image path in,
one deterministic image out.

Exit codes: 0 on success, 1 on a schema mismatch (nothing written), 2 on
usage errors.
"""

import argparse
import sys

from figplots.figures import FigureJob, FigureKind, render
from figplots.schema import SchemaError


def _run(kind, argv, prog, multi=False):
    parser = argparse.ArgumentParser(
        prog=prog, description=f"Render a {kind.value} figure from harness CSVs.")
    parser.add_argument("csv", nargs="+" if multi else 1,
                        help="input CSV path(s) in harness schema")
    parser.add_argument("out", help="output image path (.png or .svg)")
    args = parser.parse_args(argv)
    if not (args.out.endswith(".png") or args.out.endswith(".svg")):
        parser.error(f"unsupported image format: {args.out!r}")
    try:
        path = render(FigureJob(tuple(args.csv), kind, args.out))
    except SchemaError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


def main_region_raster(argv=None):
    return _run(FigureKind.REGION_RASTER, argv, "fig-region-raster")


def main_trajectory(argv=None):
    return _run(FigureKind.TRAJECTORY, argv, "fig-trajectory", multi=True)


def main_energy_line(argv=None):
    return _run(FigureKind.ENERGY_LINE, argv, "fig-energy-line")


def main_energy_box(argv=None):
    return _run(FigureKind.ENERGY_BOX, argv, "fig-energy-box")
