"""Axis and value transforms.

Regularization weights live in (0, 1) and sweeps place them on logit
grids, so figures show them on a logit axis: equal visual spacing for the
grid, the midpoint 0.5 at coordinate zero.  Metric values span decades
and are shown as log10; the transform is applied to the data rather than
the norm so that masked cells and colorbar labels stay explicit.
"""

import math

import numpy as np


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def axis_transform(values, scale: str, name: str):
    """Map axis values to plot coordinates; logit requires (0, 1)."""
    v = np.asarray(values, dtype=float)
    if scale == "logit":
        if v.size and (v.min() <= 0.0 or v.max() >= 1.0):
            raise ValueError(
                f"{name} values must lie strictly inside (0, 1) for a logit "
                f"axis; got range [{v.min():g}, {v.max():g}] "
                f"(use a linear scale for boundary values)"
            )
        return logit(v)
    return v.copy()


def value_transform(values, scale: str):
    """Map metric values for display; log10 masks nonpositive entries.

    Returns (transformed array with NaN where undefined, axis/colorbar
    label suffix).
    """
    v = np.asarray(values, dtype=float)
    if scale == "log10":
        out = np.full(v.shape, np.nan)
        pos = np.isfinite(v) & (v > 0.0)
        out[pos] = np.log10(v[pos])
        return out, "log10"
    return v.copy(), ""


def _fmt(value: float) -> str:
    if 0.01 <= value <= 0.99:
        return f"{value:.2g}"
    return f"{value:.0e}"


def prob_ticks(values, coords, scale: str):
    """Tick positions/labels for a probability axis.

    On a logit axis the contract is a tick at 0.5 (coordinate zero) plus
    the grid endpoints labeled with their probabilities; on a linear axis
    matplotlib's defaults are kept (returns None).
    """
    if scale != "logit":
        return None
    v = np.asarray(values, dtype=float)
    c = np.asarray(coords, dtype=float)
    ticks = {round(float(c[0]), 9): _fmt(float(v[0])),
             0.0: "0.5",
             round(float(c[-1]), 9): _fmt(float(v[-1]))}
    pos = sorted(ticks)
    return pos, [ticks[p] for p in pos]
