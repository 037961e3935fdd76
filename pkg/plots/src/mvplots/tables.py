"""Readers for the CSV artifacts the plots consume.

Everything here is schema-in, arrays-out: a table is a dict mapping column
name to a 1-D float array.  Files are opened read-only and never written;
the solver side owns the artifacts, this side only looks at them.

Recognized files:
  sweep metrics   rho, gamma, seed, <metric columns>, converged, ...
  fit curves      one of
                    x, mu_star, sigma_epi, sigma_ale, sigma_tot
                    x, mu_hat, sd_hat
                    x, mu, eta, lambda      (sd recovered as lambda**-0.5)
  training data   x, y [, true_mean, true_sd]
"""

import csv
import math

import numpy as np

# Per-run quality columns in a sweep metrics table, in header order.
# "converged" is parsed as 1/0 and can be mapped explicitly, but is not
# part of the default every-metric set.
METRIC_COLUMNS = (
    "mu_mse",
    "sd_mse",
    "ece",
    "train_mu_mse",
    "train_sd_mse",
    "dirichlet_mu",
    "dirichlet_lambda",
    "gc_mu",
    "gc_lambda",
    "clamp_events",
)


def _parse(value: str) -> float:
    s = value.strip()
    low = s.lower()
    if low == "true":
        return 1.0
    if low == "false":
        return 0.0
    if s == "":
        return math.nan
    return float(s)


def read_table(path) -> dict:
    """Read a CSV into {column name: float array}.

    Booleans become 1.0/0.0 and empty fields become NaN so every column is
    numeric; callers treat NaN as "this run produced no value".
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a CSV header") from None
        rows = [row for row in reader if row]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}"
            )
    table = {}
    for j, name in enumerate(header):
        try:
            table[name] = np.array([_parse(row[j]) for row in rows], dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: column {name!r} is not numeric: {exc}") from None
    return table


def require_columns(table, names, path) -> None:
    missing = [n for n in names if n not in table]
    if missing:
        raise ValueError(
            f"{path}: missing column(s) {', '.join(missing)}; "
            f"found {', '.join(table)}"
        )


def read_curve(path):
    """Return (x, mean, sd) from any recognized single-curve schema.

    Posterior summaries carry (mu_star, sigma_tot), network predictions
    (mu_hat, sd_hat), solver field files (mu, lambda) with the aleatoric
    sd recovered as lambda**-0.5.  Points come back sorted by x so line
    plots are well formed regardless of row order.
    """
    table = read_table(path)
    require_columns(table, ("x",), path)
    if "mu_star" in table and "sigma_tot" in table:
        mean, sd = table["mu_star"], table["sigma_tot"]
    elif "mu_hat" in table and "sd_hat" in table:
        mean, sd = table["mu_hat"], table["sd_hat"]
    elif "mu" in table and "lambda" in table:
        with np.errstate(divide="ignore"):
            mean, sd = table["mu"], table["lambda"] ** -0.5
    else:
        raise ValueError(
            f"{path}: no recognized mean/sd columns; expected mu_star/sigma_tot, "
            f"mu_hat/sd_hat, or mu/lambda alongside x"
        )
    order = np.argsort(table["x"], kind="stable")
    return table["x"][order], mean[order], sd[order]


def read_points(path):
    """Return (x, y) training points from a dataset CSV."""
    table = read_table(path)
    require_columns(table, ("x", "y"), path)
    return table["x"], table["y"]


def aggregate_cells(keys, values, how: str) -> dict:
    """Collapse duplicate keys (tuples of floats) to one value per key.

    NaN entries are runs that produced no number and are dropped before
    aggregating; a key whose values are all NaN aggregates to NaN.  "sd"
    is the population standard deviation, matching the convention that a
    single run has zero spread.
    """
    groups: dict = {}
    for key, val in zip(keys, values):
        groups.setdefault(key, []).append(val)
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals, dtype=float)
        arr = arr[np.isfinite(arr)]
        if arr.size == 0:
            out[key] = math.nan
        elif how == "mean":
            out[key] = float(arr.mean())
        else:
            out[key] = float(arr.std())
    return out
