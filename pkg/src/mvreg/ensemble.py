"""Posterior-style layer over the lattice solver.

The penalized lattice objective is, up to constants, a negative log
posterior: Gaussian likelihood terms plus Gaussian Markov random field
smoothness priors on the mean field and on the precision field.
map_objective re-assembles that reading from the lattice operators and
must agree with the solver's objective to high precision.  sgld_kernel
simulates noisy gradient descent on any energy; ensemble_posterior
approximates the posterior with independently seeded solver runs, whose
member spread is the epistemic part of the predictive variance while the
mean inverse precision is the aleatoric part.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import Lattice1D, grad_centered
from .rng import stream
from .solver import (
    FieldPair,
    SolverConfig,
    field_gradient,
    save_fields_csv,
    solve_fields,
)

__all__ = [
    "EnsembleSamples",
    "PredictiveSummary",
    "map_objective",
    "gmrf_prior_energy",
    "sgld_schedule",
    "sgld_kernel",
    "sgld_sample",
    "ensemble_posterior",
    "predictive_decomposition",
    "save_ensemble_csvs",
    "save_predictive_csv",
    "load_predictive_csv",
]


def map_objective(fields: FieldPair, y, lat: Lattice1D, rho: float, gamma: float,
                  stabilizer: float = 0.0, eta_center: float = 0.0) -> float:
    """Negative log posterior of (mu, eta) under the smoothness priors.

    Assembled from the lattice operators: weighted Gaussian data terms,
    a Dirichlet prior energy on mu, and one on Lambda = e^eta (the prior
    acts on the precision itself, not its log).  With stabilizer=0 this
    equals the solver's objective; a positive stabilizer adds the optional
    ridge (stabilizer/2) sum p (eta - eta_center)^2 that tames flat
    directions of the eta landscape.
    """
    mu = np.asarray(fields.mu, dtype=float)
    eta = np.asarray(fields.eta, dtype=float)
    y = np.asarray(y, dtype=float)
    if mu.shape != (lat.size,) or eta.shape != (lat.size,) or y.shape != (lat.size,):
        raise ValueError("fields and responses must match the lattice size")
    for name, arr in (("y", y), ("mu", mu), ("eta", eta)):
        bad = np.flatnonzero(np.isnan(arr))
        if bad.size:
            raise ValueError(f"NaN in {name} at site {bad[0]}")
    p = lat.weights
    r = mu - y
    lam = np.exp(eta)
    data = 0.5 * np.sum(p * (lam * r * r - eta))
    du = grad_centered(mu, lat)
    dv = grad_centered(lam, lat)
    prior = np.sum(p * (gamma * du * du + (1.0 - gamma) * dv * dv))
    value = float(rho * data + (1.0 - rho) * prior)
    if stabilizer:
        value += 0.5 * stabilizer * float(np.sum(p * (eta - eta_center) ** 2))
    return value


def gmrf_prior_energy(f, lap, weight: float) -> float:
    """(weight/2) f^T L f for a lattice Laplacian L.

    Zero for constant fields (L annihilates constants) and equal to
    weight/2 times the forward-difference Dirichlet sum, since L factors
    as G^T W G.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or lap.shape != (f.size, f.size):
        raise ValueError(f"shape mismatch: field {f.shape}, operator {lap.shape}")
    return 0.5 * weight * float(f @ (lap @ f))


def sgld_schedule(t, a: float = 1e-4, b: float = 10.0, kappa: float = 0.55):
    """Step sizes eps_t = a (b + t)^-kappa.

    kappa in (0.5, 1] makes the step sums diverge while their squares
    converge, the usual recipe for asymptotically exact sampling.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.5 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0.5, 1], got {kappa}")
    t = np.asarray(t, dtype=float)
    out = a * (b + t) ** (-kappa)
    return float(out) if out.ndim == 0 else out


def sgld_kernel(grad_fn, z0, n_steps: int, a: float = 1e-4, b: float = 10.0,
                kappa: float = 0.55, rng=None, noise_scale: float = 1.0,
                burn_frac: float = 0.5, thin: int = 10):
    """Noisy gradient descent z <- z - eps grad + sqrt(2 eps) xi.

    Returns (samples, flag): post-burn-in states kept every `thin` steps,
    and "nonfinite" if the iterate blew up (iteration stops there).
    noise_scale=0 turns the kernel into plain decaying-step gradient
    descent, a handy test hook.
    """
    if n_steps < 1:
        raise ValueError("need n_steps >= 1")
    if not 0.0 <= burn_frac < 1.0:
        raise ValueError("burn_frac must lie in [0, 1)")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    z = np.array(z0, dtype=float)
    burn = int(burn_frac * n_steps)
    samples = []
    flag = None
    for t in range(n_steps):
        eps = a * (b + t) ** (-kappa)
        g = np.asarray(grad_fn(z), dtype=float)
        z = z - eps * g
        if noise_scale:
            z = z + noise_scale * np.sqrt(2.0 * eps) * rng.standard_normal(z.shape)
        if not np.all(np.isfinite(z)):
            flag = "nonfinite"
            break
        if t >= burn and (t - burn) % thin == 0:
            samples.append(z.copy())
    return samples, flag


def sgld_sample(y, lat: Lattice1D, rho: float, gamma: float, n_steps: int = 10_000,
                seed: int = 0, init: FieldPair | None = None, init_scale: float = 0.1,
                a: float = 1e-4, b: float = 10.0, kappa: float = 0.55,
                noise_scale: float = 1.0, burn_frac: float = 0.5, thin: int = 10):
    """Sample (mu, eta) field pairs from the posterior energy landscape.

    Interior regularization weights only: the boundary cases have
    directions with no restoring force and the chain drifts off.  Noise
    comes from the seed's dedicated sampling stream, so runs are
    reproducible.  Returns (list of FieldPair, flag).
    """
    if not (0.0 < rho < 1.0 and 0.0 < gamma < 1.0):
        raise ValueError(f"need interior weights, got rho={rho}, gamma={gamma}")
    y = np.asarray(y, dtype=float)
    if init is None:
        init = FieldPair(
            mu=stream(seed, "init", 0).normal(0.0, init_scale, lat.size),
            eta=stream(seed, "init", 1).normal(0.0, init_scale, lat.size),
        )
    d = lat.size

    def grad_fn(z):
        fp = FieldPair(mu=z[:d], eta=z[d:])
        gmu, geta = field_gradient(fp, y, lat, rho, gamma)
        return np.concatenate([gmu, geta])

    z0 = np.concatenate([init.mu, init.eta])
    rng = stream(seed, "sgld")
    states, flag = sgld_kernel(
        grad_fn, z0, n_steps, a=a, b=b, kappa=kappa, rng=rng,
        noise_scale=noise_scale, burn_frac=burn_frac, thin=thin,
    )
    return [FieldPair(mu=z[:d].copy(), eta=z[d:].copy()) for z in states], flag


@dataclass(frozen=True)
class EnsembleSamples:
    """Field pairs from repeated fits, on one common lattice."""

    members: tuple
    converged: tuple
    lat: Lattice1D

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("need at least one member")
        if len(self.converged) != len(self.members):
            raise ValueError("one converged flag per member required")
        for m in self.members:
            if m.mu.shape != (self.lat.size,) or m.eta.shape != (self.lat.size,):
                raise ValueError("member fields must match the lattice size")

    @property
    def n_members(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PredictiveSummary:
    """Pointwise predictive mean and its uncertainty split.

    sigma_tot**2 = sigma_epi**2 + sigma_ale**2 holds by construction:
    between-member variance plus mean inverse precision.
    """

    mean: np.ndarray
    sigma_epi: np.ndarray
    sigma_ale: np.ndarray
    sigma_tot: np.ndarray


def ensemble_posterior(cfg: SolverConfig, y, lat: Lattice1D, m: int = 6,
                       seeds=None) -> EnsembleSamples:
    """Fit m times, varying only the seed; collect the field pairs.

    Non-converged members are kept but marked, so downstream consumers can
    drop them; the default predictive_decomposition does.
    """
    if seeds is None:
        seeds = tuple(range(int(m)))
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    members, conv = [], []
    for s in seeds:
        res = solve_fields(cfg.with_seed(s), y, lat)
        members.append(res.fields)
        conv.append(res.converged)
    return EnsembleSamples(members=tuple(members), converged=tuple(conv), lat=lat)


def predictive_decomposition(samples: EnsembleSamples,
                             only_converged: bool = True) -> PredictiveSummary:
    """Split the predictive variance into between-member and noise parts.

    mean = average member mean; sigma_epi^2 = population variance of the
    member means (divisor M, so a single member gives exactly 0);
    sigma_ale^2 = average member inverse precision e^-eta.
    """
    keep = [
        fp for fp, ok in zip(samples.members, samples.converged)
        if ok or not only_converged
    ]
    if not keep:
        raise ValueError("no converged members to decompose")
    mu = np.stack([fp.mu for fp in keep])
    inv_prec = np.stack([np.exp(-fp.eta) for fp in keep])
    mean = mu.mean(axis=0)
    epi2 = mu.var(axis=0)
    ale2 = inv_prec.mean(axis=0)
    return PredictiveSummary(
        mean=mean,
        sigma_epi=np.sqrt(epi2),
        sigma_ale=np.sqrt(ale2),
        sigma_tot=np.sqrt(epi2 + ale2),
    )


def save_ensemble_csvs(outdir, samples: EnsembleSamples) -> list:
    """One fields CSV per member: member_00.csv, member_01.csv, ..."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, fp in enumerate(samples.members):
        path = outdir / f"member_{i:02d}.csv"
        save_fields_csv(path, samples.lat, fp)
        paths.append(path)
    return paths


_SUMMARY_HEADER = ["x", "mu_star", "sigma_epi", "sigma_ale", "sigma_tot"]


def save_predictive_csv(path, lat: Lattice1D, summary: PredictiveSummary) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_SUMMARY_HEADER)
        for i in range(lat.size):
            w.writerow([
                repr(float(lat.points[i])),
                repr(float(summary.mean[i])),
                repr(float(summary.sigma_epi[i])),
                repr(float(summary.sigma_ale[i])),
                repr(float(summary.sigma_tot[i])),
            ])


def load_predictive_csv(path):
    """Returns (x, PredictiveSummary) written by save_predictive_csv."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _SUMMARY_HEADER:
            raise ValueError(f"unexpected summary header in {path}: {reader.fieldnames}")
        cols = {name: [] for name in _SUMMARY_HEADER}
        for rec in reader:
            for name in _SUMMARY_HEADER:
                cols[name].append(float(rec[name]))
    x = np.array(cols["x"])
    summary = PredictiveSummary(
        mean=np.array(cols["mu_star"]),
        sigma_epi=np.array(cols["sigma_epi"]),
        sigma_ale=np.array(cols["sigma_ale"]),
        sigma_tot=np.array(cols["sigma_tot"]),
    )
    return x, summary
