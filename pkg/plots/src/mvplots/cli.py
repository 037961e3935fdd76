"""Command line front end: plot heatmap | diagonal | fit.

Each subcommand reads CSV artifacts, writes PNG and SVG (or one explicit
file), and prints the paths written.  Exit codes: 0 on success, 2 on bad
input (missing file, missing column, values outside an axis domain).
"""

import argparse
import sys

import matplotlib.pyplot as plt

from .diagonal import plot_diagonal
from .fitplot import plot_fit
from .heatmap import plot_heatmap
from .spec import PlotSpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Figures from mean-variance regression CSV artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    hm = sub.add_parser(
        "heatmap", help="phase-diagram heatmaps from a sweep metrics CSV"
    )
    hm.add_argument("--in", dest="source", required=True, help="metrics CSV")
    hm.add_argument(
        "--metric", default=None,
        help="metric column; default renders every metric column",
    )
    hm.add_argument("--out", required=True, help="output directory or .png/.svg file")
    hm.add_argument(
        "--aggregate", choices=("mean", "sd"), default="mean",
        help="how seeds collapse per cell (sd gives a variability map)",
    )
    hm.add_argument("--linear-axes", action="store_true",
                    help="linear rho/gamma axes instead of logit")
    hm.add_argument("--linear-values", action="store_true",
                    help="linear color scale instead of log10")
    hm.add_argument("--title", default=None)

    dg = sub.add_parser(
        "diagonal", help="metric profile along rho + gamma = 1 with a star at the minimum"
    )
    dg.add_argument("--in", dest="source", required=True, help="metrics CSV")
    dg.add_argument("--metric", default="mu_mse")
    dg.add_argument("--out", required=True, help="output directory or .png/.svg file")
    dg.add_argument("--aggregate", choices=("mean", "sd"), default="mean")
    dg.add_argument("--linear-axes", action="store_true")
    dg.add_argument("--linear-values", action="store_true")
    dg.add_argument("--title", default=None)

    ft = sub.add_parser(
        "fit", help="mean curve with +-1 sd band, optional data scatter and members"
    )
    ft.add_argument("--in", dest="source", required=True,
                    help="curve CSV (posterior summary, predictions, or fields)")
    ft.add_argument("--out", required=True, help="output directory or .png/.svg file")
    ft.add_argument("--data", default=None, help="training data CSV to scatter")
    ft.add_argument("--members", default=None,
                    help="directory of member_*.csv curves to overlay")
    ft.add_argument("--title", default=None)
    return parser


def _spec_from_args(args) -> PlotSpec:
    return PlotSpec(
        source=args.source,
        out=args.out,
        metric=getattr(args, "metric", None),
        x_scale="linear" if getattr(args, "linear_axes", False) else "logit",
        y_scale="linear" if getattr(args, "linear_axes", False) else "logit",
        value_scale="linear" if getattr(args, "linear_values", False) else "log10",
        aggregate=getattr(args, "aggregate", "mean"),
        data=getattr(args, "data", None),
        members=getattr(args, "members", None),
        title=args.title,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.command == "heatmap":
            results = plot_heatmap(spec)
        elif args.command == "diagonal":
            results = [plot_diagonal(spec)]
        else:
            results = [plot_fit(spec)]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for res in results:
        for path in res.paths:
            print(path)
        plt.close(res.fig)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
