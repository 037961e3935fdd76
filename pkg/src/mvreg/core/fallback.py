"""Numpy reference implementation of the solver core.

Both backends (this module and the compiled one) expose the same three
functions.  Arrays are 1-D float64; `fused_step` mutates the field and
moment arrays in place.

Objective on a lattice with site weights p and spacing h, residual
r = mu - y, precision lam = exp(eta), centered differences Dc with mirror
ghosts (boundary rows are zero):

    S = sum_i p_i [ rho (lam_i r_i^2 - eta_i) / 2
                    + (1-rho) (gamma (Dc mu)_i^2 + (1-gamma) (Dc lam)_i^2) ]

Gradients (adjoint of Dc applied to the weighted differences; the boundary
zeros of Dc make the adjoint the plain reversed stencil):

    dS/dmu_k  = rho p_k lam_k r_k          + 2 (1-rho) gamma     [Dc^T (p Dc mu)]_k
    dS/deta_k = rho p_k (lam_k r_k^2 - 1)/2 + 2 (1-rho) (1-gamma) lam_k [Dc^T (p Dc lam)]_k
"""

import numpy as np

BACKEND_NAME = "fallback"


def _centered(f: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(f)
    out[0] = 0.0
    out[-1] = 0.0
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    return out


def _adjoint_centered(w: np.ndarray, h: float) -> np.ndarray:
    # transpose of _centered for inputs with w[0] == w[-1] == 0
    out = np.zeros_like(w)
    out[1:] += w[:-1]
    out[:-1] -= w[1:]
    out /= 2.0 * h
    return out


def objective(mu, eta, y, p, h, rho, gamma) -> float:
    lam = np.exp(eta)
    r = mu - y
    data = 0.5 * np.sum(p * (lam * r * r - eta))
    du = _centered(mu, h)
    dv = _centered(lam, h)
    pen = np.sum(p * (gamma * du * du + (1.0 - gamma) * dv * dv))
    return float(rho * data + (1.0 - rho) * pen)


def objective_gradient(mu, eta, y, p, h, rho, gamma, gmu, geta) -> float:
    """Fill gmu, geta with the gradient; return the objective value."""
    rhobar = 1.0 - rho
    gammabar = 1.0 - gamma
    lam = np.exp(eta)
    r = mu - y
    du = _centered(mu, h)
    dv = _centered(lam, h)
    obj = rho * 0.5 * np.sum(p * (lam * r * r - eta)) + rhobar * np.sum(
        p * (gamma * du * du + gammabar * dv * dv)
    )
    gmu[:] = rho * p * lam * r + 2.0 * rhobar * gamma * _adjoint_centered(p * du, h)
    geta[:] = rho * p * 0.5 * (lam * r * r - 1.0) + 2.0 * rhobar * gammabar * lam * _adjoint_centered(p * dv, h)
    return float(obj)


def fused_step(
    mu, eta, m_mu, v_mu, m_eta, v_eta, y, p, h, rho, gamma,
    step, lr, clip_threshold, eta_min, eta_max,
    beta1=0.9, beta2=0.999, eps=1e-8,
):
    """One optimizer epoch in place: gradient, global-norm clip, Adam update
    with bias correction (`step` is 1-based), eta clamp.

    Returns (objective before the step, clip flag, would-clamp site count,
    max of the updated eta field, weighted mean squared residual before the
    step).  The last two feed the divergence detector in the solve loop.
    """
    gmu = np.empty_like(mu)
    geta = np.empty_like(eta)
    obj = objective_gradient(mu, eta, y, p, h, rho, gamma, gmu, geta)
    r = mu - y
    wr2 = float(p @ (r * r))

    norm = float(np.sqrt(gmu @ gmu + geta @ geta))
    clipped = norm > clip_threshold
    if clipped:
        scale = clip_threshold / norm
        gmu *= scale
        geta *= scale

    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for param, m, v, g in ((mu, m_mu, v_mu, gmu), (eta, m_eta, v_eta, geta)):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    clamp_count = int(np.count_nonzero((eta < eta_min) | (eta > eta_max)))
    if clamp_count:
        np.clip(eta, eta_min, eta_max, out=eta)
    return obj, bool(clipped), clamp_count, float(eta.max()), wr2
