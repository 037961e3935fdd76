"""Fit plots: mean curve, +-1 sd band, data scatter, member overlays.

Input is any single-curve CSV (posterior summary, network predictions, or
a solver field file).  The shaded band spans exactly [mean - sd, mean + sd]
at every x; it is drawn hard-edged (no antialiasing) so its rendered
height is checkable pixel for pixel against the sd column.  Ensemble
member curves come from a directory of member_*.csv files, one thin line
per file.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spec import PlotSpec
from .style import (
    BAND_COLOR,
    DATA_COLOR,
    MEAN_COLOR,
    MEMBER_COLOR,
    new_figure,
    resolve_output,
    save_figure,
)
from .tables import read_curve, read_points


@dataclass
class FitResult:
    paths: tuple
    fig: object
    x: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    n_members: int


def _member_files(members_dir) -> list:
    paths = sorted(Path(members_dir).glob("member_*.csv"))
    if not paths:
        raise ValueError(
            f"{members_dir}: no ensemble member files matching member_*.csv"
        )
    return paths


def plot_fit(spec: PlotSpec) -> FitResult:
    """Render one fit figure from spec.source, with optional extras.

    spec.data adds a scatter of training points; spec.members overlays
    every member_*.csv curve found in that directory (an empty directory
    is an error, not an empty overlay).
    """
    x, mean, sd = read_curve(spec.source)

    fig = new_figure()
    ax = fig.add_subplot(111)
    band = ax.fill_between(
        x, mean - sd, mean + sd, facecolor=BAND_COLOR, edgecolor="none",
        linewidth=0.0, antialiased=False, zorder=1,
    )
    band.set_gid("sd-band")

    n_members = 0
    if spec.members is not None:
        for path in _member_files(spec.members):
            mx, mmean, _ = read_curve(path)
            line = ax.plot(mx, mmean, color=MEMBER_COLOR, lw=0.8, zorder=2)[0]
            line.set_gid("member")
            n_members += 1

    mean_line = ax.plot(x, mean, color=MEAN_COLOR, lw=1.8, zorder=3)[0]
    mean_line.set_gid("mean-curve")

    if spec.data is not None:
        dx, dy = read_points(spec.data)
        pts = ax.scatter(dx, dy, s=14, color=DATA_COLOR, zorder=4)
        pts.set_gid("data")

    ax.set_xlabel(spec.xlabel or "x")
    ax.set_ylabel(spec.ylabel or "y")
    ax.set_title(spec.title or "fit with +-1 sd band")
    fig.tight_layout()

    stem, formats = resolve_output(spec.out, "fit")
    paths = save_figure(fig, stem, formats)
    return FitResult(paths, fig, x, mean, sd, n_members)
