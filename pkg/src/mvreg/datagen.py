"""Synthetic heteroskedastic datasets, standardization, and CSV I/O.

Three 1-D benchmark processes are built in; each has a mean curve, a
noise-sd curve, and a domain.  Generated responses are standardized to mean
0 / sd 1 (sample sd, divisor n-1), with the ground-truth curves carried
along in the same frame so fits can be compared against them directly.
Passing an existing Standardizer reuses a previous frame, which is how test
draws are put on the scale of the training data.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice1D
from .rng import stream

__all__ = [
    "Dataset",
    "Standardizer",
    "SYNTHETIC_NAMES",
    "gen_synthetic",
    "sample_field_on_lattice",
    "standardize",
    "subsample",
    "split",
    "save_csv",
    "load_csv",
]


def _sine_mean(x):
    return 2.0 * np.sin(4.0 * np.pi * x)


def _sine_sd(x):
    return np.sin(6.0 * np.pi * x) + 1.25


def _cubic_mean(x):
    return x**3


def _cubic_sd(x):
    x = np.asarray(x)
    return np.select(
        [x < -0.5, x < 0.0, x < 0.5], [0.1, 1.0, 3.0], default=10.0
    ).astype(float)


def _curve_mean(x):
    return x - 2.0 * x**2 + 0.5 * x**3


def _curve_sd(x):
    return x + 1.5


# name -> (mean curve, noise-sd curve, domain)
_SYNTHETIC = {
    "sine": (_sine_mean, _sine_sd, (0.0, 1.0)),
    "cubic": (_cubic_mean, _cubic_sd, (-1.0, 1.0)),
    "curve": (_curve_mean, _curve_sd, (-1.5, 1.5)),
}

SYNTHETIC_NAMES = tuple(sorted(_SYNTHETIC))


@dataclass(frozen=True)
class Standardizer:
    """Affine map v -> (v - mean) / sd fitted on a response vector."""

    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd}")

    @classmethod
    def fit(cls, v) -> "Standardizer":
        v = np.asarray(v, dtype=float)
        sd = float(v.std(ddof=1))
        if not sd > 0:
            raise ValueError("cannot standardize a constant vector")
        return cls(float(v.mean()), sd)

    def apply(self, v):
        return (np.asarray(v, dtype=float) - self.mean) / self.sd

    def apply_sd(self, s):
        """Rescale a noise-sd curve into the standardized frame."""
        return np.asarray(s, dtype=float) / self.sd

    def invert(self, v):
        return np.asarray(v, dtype=float) * self.sd + self.mean


@dataclass
class Dataset:
    """Covariates and responses, with optional ground truth and frame info.

    x has shape (n,) for the synthetic processes or (n, d) for tabular data;
    true_mean / true_sd, when present, live in the same frame as y.
    """

    x: np.ndarray
    y: np.ndarray
    true_mean: np.ndarray | None = None
    true_sd: np.ndarray | None = None
    scaler: Standardizer | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1:
            raise ValueError("y must be 1-D")
        if self.x.shape[0] != self.y.shape[0] or self.x.ndim not in (1, 2):
            raise ValueError(f"x shape {self.x.shape} incompatible with y shape {self.y.shape}")
        for name in ("true_mean", "true_sd"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != self.y.shape:
                    raise ValueError(f"{name} shape {v.shape} != y shape {self.y.shape}")
                setattr(self, name, v)

    @property
    def n(self) -> int:
        return self.y.shape[0]


def synthetic_domain(name: str) -> tuple[float, float]:
    return _SYNTHETIC[_canon(name)][2]


def _canon(name: str) -> str:
    key = name.lower()
    if key not in _SYNTHETIC:
        raise KeyError(f"unknown synthetic dataset {name!r}; known: {SYNTHETIC_NAMES}")
    return key


def _realize(name, x, seed, heteroskedastic, noise_scale, scaler, draw):
    mean_fn, sd_fn, _ = _SYNTHETIC[_canon(name)]
    mu = mean_fn(x)
    sd = sd_fn(x) if heteroskedastic else np.ones_like(x)
    y_raw = mu + noise_scale * sd * stream(seed, "noise", draw).standard_normal(x.shape[0])
    if scaler is None:
        scaler = Standardizer.fit(y_raw)
    return Dataset(
        x=x,
        y=scaler.apply(y_raw),
        true_mean=scaler.apply(mu),
        true_sd=scaler.apply_sd(noise_scale * sd),
        scaler=scaler,
    )


def gen_synthetic(
    name: str,
    n: int = 64,
    seed: int = 0,
    heteroskedastic: bool = True,
    noise_scale: float = 1.0,
    scaler: Standardizer | None = None,
    draw: int = 0,
) -> Dataset:
    """Draw n points of a named process: x i.i.d. uniform on the domain
    (sorted), y = mean(x) + noise_scale * sd(x) * N(0,1), then standardized.

    noise_scale=0 is a test hook making y equal true_mean exactly.  draw
    selects an independent realization under the same seed, so train and
    test splits (draw=0 and draw=1) never share noise.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    lo, hi = synthetic_domain(name)
    x = np.sort(stream(seed, "x", draw).uniform(lo, hi, int(n)))
    return _realize(name, x, seed, heteroskedastic, noise_scale, scaler, draw)


def sample_field_on_lattice(
    name: str,
    lat: Lattice1D,
    seed: int = 0,
    heteroskedastic: bool = True,
    noise_scale: float = 1.0,
    scaler: Standardizer | None = None,
    draw: int = 0,
) -> Dataset:
    """One noise realization per lattice site (x = the sites themselves)."""
    lo, hi = synthetic_domain(name)
    if lat.lo < lo or lat.hi > hi:
        raise ValueError(
            f"lattice domain [{lat.lo}, {lat.hi}] falls outside the "
            f"{name!r} domain [{lo}, {hi}]"
        )
    return _realize(name, lat.points.copy(), seed, heteroskedastic, noise_scale, scaler, draw)


def standardize(ds: Dataset) -> tuple[Dataset, Standardizer]:
    """Fit a Standardizer on ds.y and return the rescaled dataset with it."""
    sc = Standardizer.fit(ds.y)
    return (
        Dataset(
            x=ds.x,
            y=sc.apply(ds.y),
            true_mean=None if ds.true_mean is None else sc.apply(ds.true_mean),
            true_sd=None if ds.true_sd is None else sc.apply_sd(ds.true_sd),
            scaler=sc,
        ),
        sc,
    )


def _take(ds: Dataset, idx) -> Dataset:
    return Dataset(
        x=ds.x[idx],
        y=ds.y[idx],
        true_mean=None if ds.true_mean is None else ds.true_mean[idx],
        true_sd=None if ds.true_sd is None else ds.true_sd[idx],
        scaler=ds.scaler,
    )


def subsample(ds: Dataset, k: int, seed: int = 0) -> Dataset:
    """k rows drawn without replacement; same seed gives the same rows."""
    if not 0 < k <= ds.n:
        raise ValueError(f"need 0 < k <= {ds.n}, got {k}")
    idx = np.sort(stream(seed, "subsample").choice(ds.n, size=k, replace=False))
    return _take(ds, idx)


def split(ds: Dataset, frac: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded permutation split into (first ~frac*n rows, rest)."""
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must be in (0, 1)")
    perm = stream(seed, "subsample").permutation(ds.n)
    k = int(round(frac * ds.n))
    if k == 0 or k == ds.n:
        raise ValueError("split would leave an empty part")
    return _take(ds, np.sort(perm[:k])), _take(ds, np.sort(perm[k:]))


def _x_columns(ds: Dataset) -> list[str]:
    if ds.x.ndim == 1:
        return ["x"]
    return [f"x{j}" for j in range(ds.x.shape[1])]


def save_csv(path, ds: Dataset) -> None:
    """Write the dataset with columns x[...], y and, when present,
    true_mean, true_sd.  Values round-trip exactly through load_csv."""
    cols = _x_columns(ds) + ["y"]
    if ds.true_mean is not None:
        cols.append("true_mean")
    if ds.true_sd is not None:
        cols.append("true_sd")
    xmat = ds.x.reshape(ds.n, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(ds.n):
            row = [repr(float(v)) for v in xmat[i]]
            row.append(repr(float(ds.y[i])))
            if ds.true_mean is not None:
                row.append(repr(float(ds.true_mean[i])))
            if ds.true_sd is not None:
                row.append(repr(float(ds.true_sd[i])))
            w.writerow(row)


def load_csv(path, target: str = "y", standardize_columns: bool = False) -> Dataset:
    """Load a dataset; non-target, non-truth columns become covariates.

    With standardize_columns=True every covariate column and the target are
    rescaled to mean 0 / sd 1 (the usual treatment of tabular regression
    data); the default leaves values as stored so save/load round-trips.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty dataset file {path}") from None
        rows = [[float(v) for v in row] for row in reader if row]
    if target not in header:
        raise ValueError(f"target column {target!r} not in header {header}")
    if not rows:
        raise ValueError(f"no data rows in {path}")
    mat = np.asarray(rows, dtype=float)
    cols = {name: mat[:, j] for j, name in enumerate(header)}
    y = cols.pop(target)
    true_mean = cols.pop("true_mean", None)
    true_sd = cols.pop("true_sd", None)
    if not cols:
        raise ValueError("dataset has no covariate columns")
    xmat = np.column_stack([cols[name] for name in header if name in cols])
    x = xmat[:, 0] if xmat.shape[1] == 1 else xmat
    scaler = None
    if standardize_columns:
        xmat = np.asarray(xmat)
        xs = (xmat - xmat.mean(axis=0)) / xmat.std(axis=0, ddof=1)
        x = xs[:, 0] if xs.shape[1] == 1 else xs
        scaler = Standardizer.fit(y)
        if true_mean is not None:
            true_mean = scaler.apply(true_mean)
        if true_sd is not None:
            true_sd = scaler.apply_sd(true_sd)
        y = scaler.apply(y)
    return Dataset(x=x, y=y, true_mean=true_mean, true_sd=true_sd, scaler=scaler)
