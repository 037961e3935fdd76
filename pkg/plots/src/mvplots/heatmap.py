"""Phase-diagram heatmaps over the (rho, gamma) regularization square.

Input is a sweep metrics CSV with one row per (rho, gamma, seed).  Rows
sharing a cell are aggregated (mean by default, population sd for
variability maps), the cells are laid out on logit-scaled axes, and one
image pair is written per requested metric.  Cells with no finite value,
whether absent from the file or NaN from a failed run, are drawn masked
in gray and reported with a warning rather than silently interpolated.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from matplotlib import cm

from .scales import axis_transform, prob_ticks, value_transform
from .spec import PlotSpec
from .style import MASKED_COLOR, new_figure, resolve_output, save_figure
from .tables import METRIC_COLUMNS, aggregate_cells, read_table, require_columns


@dataclass
class HeatmapResult:
    metric: str
    paths: tuple
    fig: object
    values: object  # masked array, shape (n_gamma, n_rho), display units
    rho: np.ndarray
    gamma: np.ndarray

    @property
    def n_masked(self) -> int:
        return int(np.ma.getmaskarray(self.values).sum())


def _cell_edges(coords) -> np.ndarray:
    """Cell boundaries around sorted center coordinates."""
    c = np.asarray(coords, dtype=float)
    if c.size == 1:
        return np.array([c[0] - 0.5, c[0] + 0.5])
    mid = 0.5 * (c[:-1] + c[1:])
    first = 2.0 * c[0] - mid[0]
    last = 2.0 * c[-1] - mid[-1]
    return np.concatenate([[first], mid, [last]])


def plot_heatmap(spec: PlotSpec) -> list:
    """Render one heatmap per metric; returns a HeatmapResult per image.

    spec.metric selects a single column; None renders every metric column
    present in the file.  An explicit .png/.svg output path is only valid
    for a single metric.
    """
    table = read_table(spec.source)
    require_columns(table, ("rho", "gamma"), spec.source)
    if spec.metric is None:
        metrics = [m for m in METRIC_COLUMNS if m in table]
        if not metrics:
            raise ValueError(f"{spec.source}: no metric columns found")
    else:
        require_columns(table, (spec.metric,), spec.source)
        metrics = [spec.metric]

    if len(metrics) > 1 and spec.out.lower().endswith((".png", ".svg")):
        raise ValueError(
            f"{spec.out}: explicit file path holds one image, but "
            f"{len(metrics)} metrics requested; pass a directory or one metric"
        )

    rho_vals = np.array(sorted(set(table["rho"].tolist())))
    gamma_vals = np.array(sorted(set(table["gamma"].tolist())))
    rho_coords = axis_transform(rho_vals, spec.x_scale, "rho")
    gamma_coords = axis_transform(gamma_vals, spec.y_scale, "gamma")
    rho_index = {v: i for i, v in enumerate(rho_vals)}
    gamma_index = {v: i for i, v in enumerate(gamma_vals)}
    rho_edges = _cell_edges(rho_coords)
    gamma_edges = _cell_edges(gamma_coords)
    keys = list(zip(table["rho"].tolist(), table["gamma"].tolist()))

    results = []
    for metric in metrics:
        cells = aggregate_cells(keys, table[metric], spec.aggregate)
        grid = np.full((gamma_vals.size, rho_vals.size), np.nan)
        for (r, g), val in cells.items():
            grid[gamma_index[g], rho_index[r]] = val
        shown, label_kind = value_transform(grid, spec.value_scale)
        mask = ~np.isfinite(shown)
        if mask.any():
            warnings.warn(
                f"{spec.source}: {int(mask.sum())} of {mask.size} cells have no "
                f"plottable {metric!r} value ({spec.value_scale} scale); drawn masked",
                stacklevel=2,
            )
        shown = np.ma.masked_array(shown, mask)

        fig = new_figure()
        ax = fig.add_subplot(111)
        cmap = cm.viridis.copy()
        cmap.set_bad(MASKED_COLOR)
        mesh = ax.pcolormesh(rho_edges, gamma_edges, shown, cmap=cmap, shading="flat")
        cbar_label = f"{label_kind}({metric})" if label_kind else metric
        fig.colorbar(mesh, ax=ax, label=cbar_label)
        for setter, vals, coords, scale in (
            (0, rho_vals, rho_coords, spec.x_scale),
            (1, gamma_vals, gamma_coords, spec.y_scale),
        ):
            ticks = prob_ticks(vals, coords, scale)
            if ticks is not None:
                if setter == 0:
                    ax.set_xticks(ticks[0], ticks[1])
                else:
                    ax.set_yticks(ticks[0], ticks[1])
        ax.set_xlabel(spec.xlabel or "rho")
        ax.set_ylabel(spec.ylabel or "gamma")
        ax.set_title(spec.title or f"{metric} ({spec.aggregate} over runs)")
        fig.tight_layout()

        stem, formats = resolve_output(spec.out, f"heatmap_{metric}")
        paths = save_figure(fig, stem, formats)
        results.append(HeatmapResult(metric, paths, fig, shown, rho_vals, gamma_vals))
    return results
