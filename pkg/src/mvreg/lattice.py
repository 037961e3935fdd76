"""Uniform 1-D lattices with density weights, and their difference operators.

A field is a plain 1-D float array aligned with the lattice sites.  The
operators here are the shared discretization layer: the solver, the
posterior layer and the metrics all differentiate fields the same way.

Boundary handling: fields are mirror-extended by one ghost site per end
(g[-1] = f[1], g[D] = f[D-2]) before centered differencing, which realizes
a zero-flux boundary.  Consequence: the two boundary entries of the
centered gradient are exactly 0, so boundary sites never contribute to the
Dirichlet energy.  On a 2-site lattice every site is a boundary site and
the energy is identically 0.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Lattice1D",
    "build_uniform_lattice",
    "pad_reflect",
    "grad_centered",
    "dirichlet_energy",
    "weighted_laplacian_matrix",
    "interp_field",
]


@dataclass(frozen=True, eq=False)
class Lattice1D:
    """Evenly spaced sites on [lo, hi] with normalized per-site weights.

    weights is the discrete density: positive, sums to 1 within 1e-12.
    spacing is (hi - lo) / (size - 1).
    """

    lo: float
    hi: float
    size: int
    weights: np.ndarray

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")
        if self.size < 2:
            raise ValueError(f"need at least 2 sites, got {self.size}")
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.shape != (self.size,):
            raise ValueError(f"weights shape {w.shape} != ({self.size},)")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        pts = np.linspace(self.lo, self.hi, self.size)
        w.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_points", pts)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.size - 1)

    @property
    def points(self) -> np.ndarray:
        return self._points


def build_uniform_lattice(lo, hi, size, density=None) -> Lattice1D:
    """Build a lattice; `density` is an optional callable p(x) evaluated at
    the sites and normalized to sum 1 (default: uniform weights 1/size)."""
    size = int(size)
    if size < 2:
        raise ValueError(f"need at least 2 sites, got {size}")
    if density is None:
        w = np.full(size, 1.0 / size)
        w /= w.sum()  # kill accumulated rounding for non power-of-two sizes
    else:
        x = np.linspace(lo, hi, size)
        w = np.asarray(density(x), dtype=float)
        if w.shape != (size,):
            raise ValueError("density must return one value per site")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("density values must be finite and >= 0")
        total = w.sum()
        if total <= 0:
            raise ValueError("density must have positive mass on the lattice")
        w = w / total
        if np.any(w <= 0):
            raise ValueError("density must be strictly positive at every site")
    return Lattice1D(float(lo), float(hi), size, w)


def _check_field(f, lat: Lattice1D) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (lat.size,):
        raise ValueError(f"field shape {f.shape} does not match lattice size {lat.size}")
    return f


def pad_reflect(f) -> np.ndarray:
    """Mirror-extend a field by one ghost site per end.

    [1, 2, 3] -> [2, 1, 2, 3, 2];  [0, 4] -> [4, 0, 4, 0].
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.shape[0] < 2:
        raise ValueError("pad_reflect needs a 1-D field with at least 2 sites")
    return np.concatenate(([f[1]], f, [f[-2]]))


def grad_centered(f, lat: Lattice1D) -> np.ndarray:
    """Centered difference gradient with mirror ghosts; boundary entries are
    exactly 0 by construction."""
    f = _check_field(f, lat)
    g = pad_reflect(f)
    return (g[2:] - g[:-2]) / (2.0 * lat.spacing)


def dirichlet_energy(f, lat: Lattice1D) -> float:
    """Weighted squared-gradient energy sum_i p_i (grad f)_i^2."""
    g = grad_centered(f, lat)
    return float(np.sum(lat.weights * g * g))


def weighted_laplacian_matrix(lat: Lattice1D) -> sp.csr_matrix:
    """Sparse L = G^T diag(w_e) G with forward differences on edges.

    Edge weights are the mean of the endpoint site weights.  L is symmetric
    positive semidefinite with constants in its null space, and f^T L f is
    the forward-difference Dirichlet form of f.
    """
    D, h = lat.size, lat.spacing
    w = lat.weights
    we = 0.5 * (w[:-1] + w[1:])
    grad = sp.diags_array([-np.ones(D - 1) / h, np.ones(D - 1) / h],
                          offsets=[0, 1], shape=(D - 1, D), format="csr")
    lap = grad.T @ sp.diags_array(we, format="csr") @ grad
    return sp.csr_matrix(lap)


def interp_field(f, lat: Lattice1D, x) -> np.ndarray:
    """Linear interpolation of a field at query points inside the domain."""
    f = _check_field(f, lat)
    x = np.asarray(x, dtype=float)
    if np.any(x < lat.lo) or np.any(x > lat.hi):
        raise ValueError("query points fall outside the lattice domain")
    return np.interp(x, lat.points, f)


def interp_gradient(f, lat: Lattice1D, x) -> np.ndarray:
    """Slope of the piecewise-linear interpolant of f at query points.

    Queries landing exactly on a site take the slope of the segment to
    its right (the last site takes the final segment).
    """
    f = _check_field(f, lat)
    x = np.asarray(x, dtype=float)
    if np.any(x < lat.lo) or np.any(x > lat.hi):
        raise ValueError("query points fall outside the lattice domain")
    cell = np.floor((x - lat.lo) / lat.spacing).astype(int)
    cell = np.clip(cell, 0, lat.size - 2)
    return (f[cell + 1] - f[cell]) / lat.spacing
