"""Accuracy and calibration observables, and multi-run aggregation.

All functions work on plain vectors so they apply unchanged to lattice
fields, interpolated fields, and network predictions.  The CSV layout of
MetricRow is the package's stable tabular interface: one row per
(rho, gamma, seed) run, fixed column order, repr-formatted floats so
rewritten files are byte-identical.
"""

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ECE_LEVELS",
    "MetricRow",
    "mu_mse",
    "sd_mse",
    "ece",
    "aggregate_runs",
    "CellStats",
    "write_metrics_csv",
    "read_metrics_csv",
    "METRIC_COLUMNS",
]

# central-interval coverage levels 0.05 .. 0.95; k/20 keeps their float
# mean exactly 0.5, which pins the degenerate sd -> 0 case of ece()
ECE_LEVELS = np.arange(1, 20) / 20.0
ECE_LEVELS.setflags(write=False)


def _check_lengths(*arrs):
    n = {np.asarray(a).shape for a in arrs}
    if len(n) != 1 or next(iter(n)) == (0,):
        raise ValueError(f"inputs must be equal-length nonempty vectors, got {sorted(n)}")


def mu_mse(pred_mean, y) -> float:
    """Mean squared error of the predicted mean."""
    pred_mean = np.asarray(pred_mean, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_lengths(pred_mean, y)
    d = pred_mean - y
    return float(np.mean(d * d))


def sd_mse(pred_sd, pred_mean, y) -> float:
    """Mean squared gap between the predicted sd and the absolute residual."""
    pred_sd = np.asarray(pred_sd, dtype=float)
    pred_mean = np.asarray(pred_mean, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_lengths(pred_sd, pred_mean, y)
    if not np.all(pred_sd > 0):
        raise ValueError("predicted sd must be strictly positive")
    d = pred_sd - np.abs(y - pred_mean)
    return float(np.mean(d * d))


def ece(pred_mean, pred_sd, y, levels=ECE_LEVELS) -> float:
    """Expected calibration error over central Gaussian intervals.

    For each nominal coverage q the empirical fraction of y falling inside
    mu +- z_{(1+q)/2} sd is compared to q; the result is the mean absolute
    gap.  Always in [0, 1]; a vanishing sd with nonzero residuals gives
    exactly 0.5 under the default levels.
    """
    pred_mean = np.asarray(pred_mean, dtype=float)
    pred_sd = np.asarray(pred_sd, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_lengths(pred_mean, pred_sd, y)
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    if levels.size == 0 or np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must be a nonempty subset of (0, 1)")
    if np.any(pred_sd < 0):
        raise ValueError("predicted sd must be nonnegative")
    absr = np.abs(y - pred_mean)
    gaps = []
    for q in levels:
        z = ndtri(0.5 * (1.0 + q))
        covered = float(np.mean(absr <= z * pred_sd))
        gaps.append(abs(covered - q))
    return math.fsum(gaps) / len(gaps)


@dataclass
class MetricRow:
    """One run's observables at a regularization cell.

    Test-set metrics fill mu_mse/sd_mse/ece; the train_* twins support the
    diagonal model-selection rule, which scores on training data.  Smoothness
    comes in both flavors: lattice Dirichlet energies of the fitted fields
    and data-sampled geometric complexities of the predictors.
    """

    rho: float
    gamma: float
    seed: int
    mu_mse: float
    sd_mse: float
    ece: float
    train_mu_mse: float
    train_sd_mse: float
    dirichlet_mu: float
    dirichlet_lambda: float
    gc_mu: float
    gc_lambda: float
    converged: bool
    clamp_events: int

    def __post_init__(self):
        if not (0.0 <= self.rho <= 1.0 and 0.0 <= self.gamma <= 1.0):
            raise ValueError(f"rho/gamma out of [0,1]: ({self.rho}, {self.gamma})")


METRIC_COLUMNS = [f.name for f in fields(MetricRow)]
_FLOAT_METRICS = [
    "mu_mse", "sd_mse", "ece", "train_mu_mse", "train_sd_mse",
    "dirichlet_mu", "dirichlet_lambda", "gc_mu", "gc_lambda", "clamp_events",
]


@dataclass
class CellStats:
    """Converged-run moments for one (rho, gamma) cell."""

    rho: float
    gamma: float
    n_converged: int
    n_flagged: int
    mean: dict
    sd: dict


def aggregate_runs(rows) -> list:
    """Per-(rho, gamma) sample mean and sd of every metric.

    Non-converged rows are excluded from the moments and reported in
    n_flagged.  sd uses divisor n-1 and is 0 for a single run.  Cells are
    returned sorted by (rho, gamma).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to aggregate")
    cells = {}
    for row in rows:
        cells.setdefault((row.rho, row.gamma), []).append(row)
    out = []
    for (rho, gamma), group in sorted(cells.items()):
        ok = [r for r in group if r.converged]
        flagged = len(group) - len(ok)
        mean, sd = {}, {}
        for name in _FLOAT_METRICS:
            vals = np.array([float(getattr(r, name)) for r in ok], dtype=float)
            if vals.size:
                mean[name] = float(vals.mean())
                # identical values report exactly zero spread; vals.std would
                # leak rounding noise from the mean
                if vals.size == 1 or np.all(vals == vals[0]):
                    sd[name] = 0.0
                else:
                    sd[name] = float(vals.std(ddof=1))
            else:
                mean[name] = float("nan")
                sd[name] = float("nan")
        out.append(CellStats(rho, gamma, len(ok), flagged, mean, sd))
    return out


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows) -> None:
    """Write MetricRows in the fixed column order (deterministic bytes)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            d = asdict(row)
            w.writerow([_format_cell(d[c]) for c in METRIC_COLUMNS])


def read_metrics_csv(path) -> list:
    """Read rows written by write_metrics_csv."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRIC_COLUMNS:
            raise ValueError(f"unexpected metrics header in {path}: {reader.fieldnames}")
        out = []
        for rec in reader:
            out.append(MetricRow(
                rho=float(rec["rho"]),
                gamma=float(rec["gamma"]),
                seed=int(rec["seed"]),
                mu_mse=float(rec["mu_mse"]),
                sd_mse=float(rec["sd_mse"]),
                ece=float(rec["ece"]),
                train_mu_mse=float(rec["train_mu_mse"]),
                train_sd_mse=float(rec["train_sd_mse"]),
                dirichlet_mu=float(rec["dirichlet_mu"]),
                dirichlet_lambda=float(rec["dirichlet_lambda"]),
                gc_mu=float(rec["gc_mu"]),
                gc_lambda=float(rec["gc_lambda"]),
                converged=rec["converged"] == "true",
                clamp_events=int(rec["clamp_events"]),
            ))
    return out
