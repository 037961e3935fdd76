"""Deterministic rendering defaults shared by every figure.

This package is a batch renderer: the same inputs must produce
byte-identical PNG and SVG files on reruns.  That rules out wall-clock
metadata and host-dependent style lookups, so the Agg backend is forced
before pyplot is imported and the rcParams that feed into file bytes are
pinned here rather than inherited from the environment.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

# Exact colors.  Tests identify band pixels by value, so these are part of
# the contract, not decoration.
BAND_COLOR = (0.82, 0.90, 1.00)
MEAN_COLOR = (0.10, 0.30, 0.65)
DATA_COLOR = (0.25, 0.25, 0.25)
MEMBER_COLOR = (0.55, 0.35, 0.80)
STAR_COLOR = (0.85, 0.20, 0.10)
MASKED_COLOR = (0.78, 0.78, 0.78)

_RC = {
    "figure.figsize": (6.4, 4.8),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.family": "DejaVu Sans",
    # SVG element ids are derived from this salt; pinning it keeps reruns
    # byte-identical.
    "svg.hashsalt": "mvplots",
    "axes.grid": False,
}


def new_figure():
    """Fresh figure with the pinned style, independent of ambient rcParams."""
    plt.rcdefaults()
    matplotlib.rcParams.update(_RC)
    return plt.figure()


def resolve_output(out, stem: str):
    """Map a spec's `out` to (path stem, formats to write).

    A directory (anything without a .png/.svg suffix) gets both formats as
    <out>/<stem>.png and <out>/<stem>.svg; an explicit file path gets that
    single format.  Directories are created as needed.
    """
    p = Path(out)
    suffix = p.suffix.lower()
    if suffix in (".png", ".svg"):
        p.parent.mkdir(parents=True, exist_ok=True)
        return str(p)[: -len(suffix)], (suffix[1:],)
    p.mkdir(parents=True, exist_ok=True)
    return str(p / stem), ("png", "svg")


def save_figure(fig, stem: str, formats=("png", "svg")):
    """Write the figure once per format; returns the paths written.

    SVG date metadata is suppressed so reruns are byte-identical; PNG
    carries no timestamps to begin with.
    """
    paths = []
    for ext in formats:
        path = f"{stem}.{ext}"
        if ext == "svg":
            fig.savefig(path, format="svg", metadata={"Date": None})
        else:
            fig.savefig(path, format="png")
        paths.append(path)
    return tuple(paths)
