"""One scored run: a data bundle, a fitted model, and its metric row.

The lattice solver trains on one response per site (the site weights act
as the sampling density), while the network trainer sees train_n scattered
points.  Both are scored on an independent test draw generated on the
training scale, so rows from the two backends share one CSV schema.
"""

from dataclasses import dataclass

import numpy as np

from .datagen import Dataset, gen_synthetic, sample_field_on_lattice, synthetic_domain
from .lattice import (
    Lattice1D,
    build_uniform_lattice,
    dirichlet_energy,
    interp_field,
    interp_gradient,
)
from .metrics import MetricRow, ece, mu_mse, sd_mse
from .nets import (
    TrainConfig,
    TrainResult,
    geometric_complexity,
    mlp_forward,
    predict,
    train_two_phase,
)
from .solver import SolverConfig, SolveResult, solve_fields

__all__ = [
    "ExperimentSpec",
    "experiment_lattice",
    "ft_bundle",
    "nn_bundle",
    "ft_metric_row",
    "nn_metric_row",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """What data a run sees: the process, its seed, and the sampling sizes."""

    dataset: str = "sine"
    data_seed: int = 0
    lattice_size: int = 512
    train_n: int = 64
    test_n: int = 256
    heteroskedastic: bool = True

    def __post_init__(self):
        synthetic_domain(self.dataset)  # validates the name
        if min(self.lattice_size, self.train_n, self.test_n) < 2:
            raise ValueError("lattice_size, train_n and test_n must all be >= 2")


def experiment_lattice(spec: ExperimentSpec) -> Lattice1D:
    lo, hi = synthetic_domain(spec.dataset)
    return build_uniform_lattice(lo, hi, spec.lattice_size)


def ft_bundle(spec: ExperimentSpec) -> tuple[Lattice1D, Dataset, Dataset]:
    """Lattice, per-site training draw, and an independent scattered test draw."""
    lat = experiment_lattice(spec)
    train = sample_field_on_lattice(
        spec.dataset, lat, seed=spec.data_seed,
        heteroskedastic=spec.heteroskedastic, draw=0,
    )
    test = gen_synthetic(
        spec.dataset, n=spec.test_n, seed=spec.data_seed,
        heteroskedastic=spec.heteroskedastic, scaler=train.scaler, draw=1,
    )
    return lat, train, test


def nn_bundle(spec: ExperimentSpec) -> tuple[Dataset, Dataset]:
    """Scattered train and test draws sharing the training scale."""
    train = gen_synthetic(
        spec.dataset, n=spec.train_n, seed=spec.data_seed,
        heteroskedastic=spec.heteroskedastic, draw=0,
    )
    test = gen_synthetic(
        spec.dataset, n=spec.test_n, seed=spec.data_seed,
        heteroskedastic=spec.heteroskedastic, scaler=train.scaler, draw=1,
    )
    return train, test


def _nan_metrics() -> dict:
    keys = (
        "mu_mse", "sd_mse", "ece", "train_mu_mse", "train_sd_mse",
        "dirichlet_mu", "dirichlet_lambda", "gc_mu", "gc_lambda",
    )
    return {k: float("nan") for k in keys}


def ft_metric_row(spec: ExperimentSpec, cfg: SolverConfig) -> tuple[MetricRow, SolveResult]:
    """Solve the lattice fields and score them.

    Test predictions interpolate mu and eta linearly between sites.  Runs
    that ended with non-finite fields get NaN metrics; runs flagged as
    unbounded keep their (finite) observables so sweeps can show where the
    objective stops being minimized.
    """
    lat, train, test = ft_bundle(spec)
    res = solve_fields(cfg, train.y, lat)
    mu, eta = res.fields.mu, res.fields.eta
    if np.all(np.isfinite(mu)) and np.all(np.isfinite(eta)):
        lam = np.exp(eta)
        mu_t = interp_field(mu, lat, test.x)
        sd_t = np.exp(-0.5 * interp_field(eta, lat, test.x))
        metrics = dict(
            mu_mse=mu_mse(mu_t, test.y),
            sd_mse=sd_mse(sd_t, mu_t, test.y),
            ece=ece(mu_t, sd_t, test.y),
            train_mu_mse=mu_mse(mu, train.y),
            train_sd_mse=sd_mse(np.exp(-0.5 * eta), mu, train.y),
            dirichlet_mu=dirichlet_energy(mu, lat),
            dirichlet_lambda=dirichlet_energy(lam, lat),
            gc_mu=float(np.mean(interp_gradient(mu, lat, test.x) ** 2)),
            gc_lambda=float(np.mean(interp_gradient(lam, lat, test.x) ** 2)),
        )
    else:
        metrics = _nan_metrics()
    row = MetricRow(
        rho=cfg.rho, gamma=cfg.gamma, seed=cfg.seed,
        converged=res.converged, clamp_events=res.clamp_events, **metrics,
    )
    return row, res


def nn_metric_row(spec: ExperimentSpec, cfg: TrainConfig) -> tuple[MetricRow, TrainResult]:
    """Train the network pair and score it.

    Smoothness observables mirror the lattice backend: Dirichlet energies
    come from the nets sampled on the experiment lattice, geometric
    complexities from exact input gradients at the test points.
    """
    train, test = nn_bundle(spec)
    res = train_two_phase(train.x, train.y, cfg)
    if res.converged:
        mu_t, sd_t = predict(res.mean_net, res.prec_net, test.x)
        mu_tr, sd_tr = predict(res.mean_net, res.prec_net, train.x)
        lat = experiment_lattice(spec)
        mu_f, _ = mlp_forward(res.mean_net, lat.points)
        lam_f, _ = mlp_forward(res.prec_net, lat.points)
        metrics = dict(
            mu_mse=mu_mse(mu_t, test.y),
            sd_mse=sd_mse(sd_t, mu_t, test.y),
            ece=ece(mu_t, sd_t, test.y),
            train_mu_mse=mu_mse(mu_tr, train.y),
            train_sd_mse=sd_mse(sd_tr, mu_tr, train.y),
            dirichlet_mu=dirichlet_energy(mu_f, lat),
            dirichlet_lambda=dirichlet_energy(lam_f, lat),
            gc_mu=geometric_complexity(res.mean_net, test.x),
            gc_lambda=geometric_complexity(res.prec_net, test.x),
        )
    else:
        metrics = _nan_metrics()
    row = MetricRow(
        rho=cfg.rho, gamma=cfg.gamma, seed=cfg.seed,
        converged=res.converged, clamp_events=0, **metrics,
    )
    return row, res
