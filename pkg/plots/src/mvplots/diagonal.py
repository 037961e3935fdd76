"""Metric profile along the diagonal rho + gamma = 1.

Input is the same sweep metrics CSV as the heatmaps, restricted in
practice to diagonal cells.  Rows are grouped by rho, aggregated over
seeds, and drawn as a curve of (by default) log10 metric against logit
rho, with a star on the minimum.  A V-shaped profile puts the star in the
interior; a monotone profile puts it at an endpoint, which is itself a
useful diagnosis (the sweep did not bracket the optimum).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .scales import axis_transform, prob_ticks, value_transform
from .spec import PlotSpec
from .style import MEAN_COLOR, STAR_COLOR, new_figure, resolve_output, save_figure
from .tables import aggregate_cells, read_table, require_columns


@dataclass
class DiagonalResult:
    metric: str
    paths: tuple
    fig: object
    rho: np.ndarray
    values: np.ndarray  # display units, NaN where unplottable
    star_rho: float

    @property
    def star_index(self) -> int:
        return int(np.nanargmin(self.values))


def plot_diagonal(spec: PlotSpec) -> DiagonalResult:
    """Render the diagonal profile for one metric (default mu_mse)."""
    metric = spec.metric or "mu_mse"
    table = read_table(spec.source)
    require_columns(table, ("rho", metric), spec.source)

    cells = aggregate_cells(table["rho"].tolist(), table[metric], spec.aggregate)
    rho = np.array(sorted(cells))
    agg = np.array([cells[r] for r in rho])
    shown, label_kind = value_transform(agg, spec.value_scale)
    if not np.isfinite(shown).any():
        raise ValueError(
            f"{spec.source}: no plottable {metric!r} values on the "
            f"{spec.value_scale} scale"
        )
    if not np.isfinite(shown).all():
        warnings.warn(
            f"{spec.source}: {int((~np.isfinite(shown)).sum())} of {shown.size} "
            f"diagonal points have no plottable {metric!r} value; dropped",
            stacklevel=2,
        )
    coords = axis_transform(rho, spec.x_scale, "rho")
    k = int(np.nanargmin(shown))

    fig = new_figure()
    ax = fig.add_subplot(111)
    keep = np.isfinite(shown)
    ax.plot(coords[keep], shown[keep], color=MEAN_COLOR, marker="o", ms=4, lw=1.5)
    star = ax.plot(
        [coords[k]], [shown[k]], marker="*", ms=16, color=STAR_COLOR,
        linestyle="none", zorder=5,
    )[0]
    star.set_gid("minimum-star")
    ticks = prob_ticks(rho, coords, spec.x_scale)
    if ticks is not None:
        ax.set_xticks(ticks[0], ticks[1])
    ylabel = f"{label_kind}({metric})" if label_kind else metric
    ax.set_xlabel(spec.xlabel or "rho  (gamma = 1 - rho)")
    ax.set_ylabel(spec.ylabel or ylabel)
    ax.set_title(spec.title or f"diagonal profile of {metric}")
    fig.tight_layout()

    stem, formats = resolve_output(spec.out, f"diagonal_{metric}")
    paths = save_figure(fig, stem, formats)
    return DiagonalResult(metric, paths, fig, rho, shown, float(rho[k]))
