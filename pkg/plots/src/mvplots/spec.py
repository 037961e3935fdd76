"""Declarative description of one figure.

A PlotSpec says where the numbers come from (CSV paths), which column is
mapped to color or height, how each axis is scaled, and where the image
files go.  Validation that needs only the spec itself happens at
construction; checks that need the file contents (does the metric column
exist, are the values inside the scale's domain) happen when the figure
is built.
"""

from dataclasses import dataclass

AXIS_SCALES = ("logit", "linear")
VALUE_SCALES = ("log10", "linear")
AGGREGATES = ("mean", "sd")


@dataclass(frozen=True)
class PlotSpec:
    """One figure request.

    source      input CSV (sweep metrics table or a single-curve file)
    out         output directory, or an explicit .png/.svg file path
    metric      column to map; None means every metric column (heatmaps)
    x_scale     rho axis: "logit" or "linear"
    y_scale     gamma axis: "logit" or "linear"
    value_scale metric values: "log10" or "linear"
    aggregate   how duplicate (rho, gamma) rows collapse: "mean" or "sd"
    data        fit plots: CSV of training points to scatter (x, y)
    members     fit plots: directory holding member_*.csv ensemble curves
    """

    source: str
    out: str
    metric: str | None = None
    x_scale: str = "logit"
    y_scale: str = "logit"
    value_scale: str = "log10"
    aggregate: str = "mean"
    data: str | None = None
    members: str | None = None
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None

    def __post_init__(self):
        if self.x_scale not in AXIS_SCALES:
            raise ValueError(f"x_scale must be one of {AXIS_SCALES}, got {self.x_scale!r}")
        if self.y_scale not in AXIS_SCALES:
            raise ValueError(f"y_scale must be one of {AXIS_SCALES}, got {self.y_scale!r}")
        if self.value_scale not in VALUE_SCALES:
            raise ValueError(f"value_scale must be one of {VALUE_SCALES}, got {self.value_scale!r}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")
