"""Regularization grids, sweep orchestration, and diagonal model selection.

A sweep plan is a grid of (rho, gamma) cells (or the rho = 1-gamma
diagonal) crossed with a seed list, run through one backend.  Results land
in the fixed metrics CSV; reruns skip (rho, gamma, seed) keys already
present in the file, and the file is kept sorted by (cell, seed) so
identical plans produce identical bytes no matter the completion order.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .experiment import ExperimentSpec, ft_metric_row, nn_metric_row
from .metrics import MetricRow, read_metrics_csv, write_metrics_csv
from .nets import TrainConfig
from .solver import SolverConfig

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 and older
    import tomli as tomllib

__all__ = [
    "GridSpec",
    "SweepPlan",
    "logit_grid",
    "diagonal_grid",
    "plan_cells",
    "plan_from_toml",
    "plan_hash",
    "run_sweep",
    "write_sweep_manifest",
    "select_diagonal_model",
]

BACKENDS = ("ft", "nn")
PRESETS = ("desk", "paper")


@dataclass(frozen=True)
class GridSpec:
    """n values between lo and hi, both strictly inside (0, 1)."""

    n: int
    lo: float = 1e-10
    hi: float = 1.0 - 1e-5

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi < 1.0):
            raise ValueError(f"need 0 < lo < hi < 1, got ({self.lo}, {self.hi})")
        if self.n < 2:
            raise ValueError("need n >= 2")


def logit_grid(n, lo=1e-10, hi=1.0 - 1e-5) -> np.ndarray:
    """n values equispaced in logit space between lo and hi inclusive."""
    spec = n if isinstance(n, GridSpec) else GridSpec(int(n), float(lo), float(hi))
    vals = expit(np.linspace(logit(spec.lo), logit(spec.hi), spec.n))
    # the logit/expit round trip can shift the ends by an ulp; pin them
    vals[0], vals[-1] = spec.lo, spec.hi
    if np.any(np.diff(vals) <= 0):
        raise ValueError("grid too dense: adjacent values collapsed")
    return vals


def diagonal_grid(n: int = 100) -> np.ndarray:
    """rho values for the rho = 1-gamma diagonal: log-spaced tails on
    [1e-11, 0.1) and (0.9, 1-1e-11], a uniform middle on [0.1, 0.9].

    The tails take ~30% of the points each (the 100-point default splits
    30/40/30).  Values are sorted and deduplicated.
    """
    n = int(n)
    if n < 3:
        raise ValueError("need n >= 3")
    n_tail = max(1, round(0.3 * n))
    n_mid = n - 2 * n_tail
    lower = np.logspace(-11, -1, n_tail + 1)[:-1]
    middle = np.linspace(0.1, 0.9, n_mid)
    upper = 1.0 - np.logspace(-11, -1, n_tail + 1)[:-1]
    return np.unique(np.concatenate([lower, middle, upper]))


@dataclass(frozen=True)
class SweepPlan:
    """One backend, one dataset, a cell grid, and the seeds to repeat over.

    gamma=None turns the plan into the diagonal: each rho pairs with
    1-rho.  overrides are extra backend config fields (epochs, hidden, ...)
    applied on top of the chosen preset.
    """

    backend: str
    spec: ExperimentSpec
    rho: tuple
    gamma: tuple | None = None
    seeds: tuple = (0, 1, 2, 3, 4, 5)
    preset: str = "desk"
    overrides: tuple = ()

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.rho:
            raise ValueError("rho grid must be nonempty")


def plan_cells(plan: SweepPlan) -> list:
    """(rho, gamma) cells in fixed order: row-major grid, or the diagonal."""
    if plan.gamma is None:
        return [(float(r), 1.0 - float(r)) for r in plan.rho]
    return [(float(r), float(g)) for r in plan.rho for g in plan.gamma]


def _make_config(backend, preset, overrides, rho, gamma, seed):
    kw = dict(overrides)
    kw.update(rho=rho, gamma=gamma, seed=seed)
    if backend == "ft":
        base = SolverConfig.paper_preset if preset == "paper" else SolverConfig.desk_preset
    else:
        kw.setdefault("loss", "rho-gamma")
        base = TrainConfig.paper_preset if preset == "paper" else TrainConfig.desk_preset
    return base(**kw)


def _execute_cell(payload):
    backend, spec, preset, overrides, rho, gamma, seed = payload
    cfg = _make_config(backend, preset, overrides, rho, gamma, seed)
    try:
        if backend == "ft":
            row, _ = ft_metric_row(spec, cfg)
        else:
            row, _ = nn_metric_row(spec, cfg)
    except (FloatingPointError, ValueError):
        # numeric failures become non-converged rows; the sweep keeps going
        nan = float("nan")
        row = MetricRow(
            rho=rho, gamma=gamma, seed=seed,
            mu_mse=nan, sd_mse=nan, ece=nan, train_mu_mse=nan, train_sd_mse=nan,
            dirichlet_mu=nan, dirichlet_lambda=nan, gc_mu=nan, gc_lambda=nan,
            converged=False, clamp_events=0,
        )
    return row


def run_sweep(plan: SweepPlan, out_csv, jobs: int = 1, log=None) -> list:
    """Run every (cell, seed) not already present in out_csv.

    The CSV is rewritten after each completed run, always fully sorted by
    (cell index, seed), so interrupting and rerunning the same plan resumes
    where it stopped and finishes with identical bytes.  Returns all rows.
    """
    out_csv = Path(out_csv)
    cells = plan_cells(plan)
    order = {cell: i for i, cell in enumerate(cells)}
    seed_pos = {s: i for i, s in enumerate(plan.seeds)}

    rows = read_metrics_csv(out_csv) if out_csv.exists() else []
    for row in rows:
        if (row.rho, row.gamma) not in order:
            raise ValueError(
                f"{out_csv} contains cell ({row.rho}, {row.gamma}) "
                "not in this plan; refusing to mix sweeps"
            )
    done = {(r.rho, r.gamma, r.seed) for r in rows}

    def sort_key(r):
        return (order[(r.rho, r.gamma)], seed_pos.get(r.seed, len(seed_pos)), r.seed)

    todo = [
        (plan.backend, plan.spec, plan.preset, plan.overrides, rho, gamma, seed)
        for (rho, gamma) in cells
        for seed in plan.seeds
        if (rho, gamma, seed) not in done
    ]

    def absorb(row):
        rows.append(row)
        rows.sort(key=sort_key)
        write_metrics_csv(out_csv, rows)
        if log is not None:
            log(f"[{len(rows)}/{len(cells) * len(plan.seeds)}] "
                f"rho={row.rho:.3g} gamma={row.gamma:.3g} seed={row.seed} "
                f"converged={row.converged}")

    if jobs <= 1 or len(todo) <= 1:
        for payload in todo:
            absorb(_execute_cell(payload))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_execute_cell, todo):
                absorb(row)

    if not todo and rows:
        # resume over a complete file: leave the bytes untouched
        return rows
    return rows


def plan_hash(plan: SweepPlan) -> str:
    """sha256 of the plan's canonical JSON form."""
    doc = asdict(plan)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_sweep_manifest(path, plan: SweepPlan, rows) -> None:
    """Record what produced a metrics file: plan hash, shape, completed keys."""
    from . import __version__

    doc = {
        "artifact": "mvreg-sweep",
        "version": __version__,
        "plan_hash": plan_hash(plan),
        "backend": plan.backend,
        "preset": plan.preset,
        "n_cells": len(plan_cells(plan)),
        "n_seeds": len(plan.seeds),
        "completed": [[r.rho, r.gamma, r.seed] for r in rows],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plan_from_toml(path) -> SweepPlan:
    """Build a plan from a TOML file with [dataset], [grid], [backend],
    [seeds] sections; missing keys fall back to desk-scale defaults."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)

    ds = doc.get("dataset", {})
    spec = ExperimentSpec(
        dataset=str(ds.get("name", "sine")),
        data_seed=int(ds.get("seed", 0)),
        lattice_size=int(ds.get("lattice_size", 512)),
        train_n=int(ds.get("train_n", 64)),
        test_n=int(ds.get("test_n", 256)),
        heteroskedastic=bool(ds.get("heteroskedastic", True)),
    )

    g = doc.get("grid", {})
    kind = g.get("kind", "grid")
    if kind == "diagonal":
        rho = tuple(float(v) for v in diagonal_grid(int(g.get("n", 100))))
        gamma = None
    elif kind == "grid":
        rho = tuple(logit_grid(
            int(g.get("rho_n", 8)),
            float(g.get("rho_lo", 1e-10)),
            float(g.get("rho_hi", 1.0 - 1e-5)),
        ))
        gamma = tuple(logit_grid(
            int(g.get("gamma_n", g.get("rho_n", 8))),
            float(g.get("gamma_lo", g.get("rho_lo", 1e-10))),
            float(g.get("gamma_hi", g.get("rho_hi", 1.0 - 1e-5))),
        ))
    else:
        raise ValueError(f"grid kind must be 'grid' or 'diagonal', got {kind!r}")

    b = dict(doc.get("backend", {}))
    backend = str(b.pop("kind", "ft"))
    preset = str(b.pop("preset", "desk"))
    if "hidden" in b:
        b["hidden"] = tuple(int(h) for h in b["hidden"])
    overrides = tuple(sorted(b.items()))

    s = doc.get("seeds", {})
    if "list" in s:
        seeds = tuple(int(v) for v in s["list"])
    else:
        seeds = tuple(range(int(s.get("n", 6))))

    return SweepPlan(
        backend=backend, spec=spec, rho=rho, gamma=gamma,
        seeds=seeds, preset=preset, overrides=overrides,
    )


def select_diagonal_model(rows) -> tuple:
    """Pick the diagonal point between the best-train-mean and the
    best-train-sd models: their logit midpoint.

    Means are taken per rho over converged rows with finite training
    metrics; exact ties go to the smaller rho (the more regularized model).
    """
    usable = [
        r for r in rows
        if r.converged and np.isfinite(r.train_mu_mse) and np.isfinite(r.train_sd_mse)
    ]
    if not usable:
        raise ValueError("no converged rows with finite training metrics")
    groups = {}
    for r in usable:
        groups.setdefault(r.rho, []).append(r)
    mu_mean = {rho: float(np.mean([r.train_mu_mse for r in g])) for rho, g in groups.items()}
    sd_mean = {rho: float(np.mean([r.train_sd_mse for r in g])) for rho, g in groups.items()}
    rho_a = min(sorted(groups), key=lambda rho: (mu_mean[rho], rho))
    rho_b = min(sorted(groups), key=lambda rho: (sd_mean[rho], rho))
    if rho_a == rho_b:
        rho_star = float(rho_a)
    else:
        rho_star = float(expit(0.5 * (logit(rho_a) + logit(rho_b))))
    return rho_star, 1.0 - rho_star
