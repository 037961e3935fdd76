"""Figures from mean-variance regression CSV artifacts.

The solver package writes CSV files (sweep metrics, posterior summaries,
predictions, field snapshots); this package turns them into PNG and SVG
figures.  The CSV schemas are the whole interface: nothing here imports
the solver, so either side can be installed, upgraded, or tested without
the other.
"""

from .diagonal import DiagonalResult, plot_diagonal
from .fitplot import FitResult, plot_fit
from .heatmap import HeatmapResult, plot_heatmap
from .spec import PlotSpec

__version__ = "0.1.0"

__all__ = [
    "PlotSpec",
    "plot_heatmap",
    "plot_diagonal",
    "plot_fit",
    "HeatmapResult",
    "DiagonalResult",
    "FitResult",
    "__version__",
]
