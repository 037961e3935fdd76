# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled solver core.

Semantics mirror core/fallback.py exactly (that module is the reference);
only the summation order differs, so cross-backend agreement is tested at
tight tolerances rather than bitwise.
"""

from libc.math cimport exp, sqrt, pow

import numpy as np

BACKEND_NAME = "compiled"


def objective(const double[::1] mu, const double[::1] eta, const double[::1] y,
              const double[::1] p, double h, double rho, double gamma):
    cdef Py_ssize_t D = mu.shape[0]
    cdef Py_ssize_t i
    cdef double inv2h = 1.0 / (2.0 * h)
    cdef double rhobar = 1.0 - rho
    cdef double gammabar = 1.0 - gamma
    cdef double data = 0.0
    cdef double pen = 0.0
    cdef double r, du, dv
    cdef double[::1] lam = np.empty(D)
    for i in range(D):
        lam[i] = exp(eta[i])
    for i in range(D):
        r = mu[i] - y[i]
        data += p[i] * (lam[i] * r * r - eta[i])
        if 0 < i < D - 1:
            du = (mu[i + 1] - mu[i - 1]) * inv2h
            dv = (lam[i + 1] - lam[i - 1]) * inv2h
            pen += p[i] * (gamma * du * du + gammabar * dv * dv)
    return rho * 0.5 * data + rhobar * pen


def objective_gradient(const double[::1] mu, const double[::1] eta, const double[::1] y,
                       const double[::1] p, double h, double rho, double gamma,
                       double[::1] gmu, double[::1] geta):
    cdef Py_ssize_t D = mu.shape[0]
    cdef Py_ssize_t i
    cdef double inv2h = 1.0 / (2.0 * h)
    cdef double rhobar = 1.0 - rho
    cdef double gammabar = 1.0 - gamma
    cdef double cmu = 2.0 * rhobar * gamma
    cdef double clam = 2.0 * rhobar * gammabar
    cdef double data = 0.0
    cdef double pen = 0.0
    cdef double r, du, dv, wl, wr
    cdef double[::1] lam = np.empty(D)
    cdef double[::1] wu = np.zeros(D)
    cdef double[::1] wv = np.zeros(D)
    for i in range(D):
        lam[i] = exp(eta[i])
    for i in range(1, D - 1):
        du = (mu[i + 1] - mu[i - 1]) * inv2h
        dv = (lam[i + 1] - lam[i - 1]) * inv2h
        wu[i] = p[i] * du
        wv[i] = p[i] * dv
        pen += p[i] * (gamma * du * du + gammabar * dv * dv)
    for i in range(D):
        r = mu[i] - y[i]
        data += p[i] * (lam[i] * r * r - eta[i])
        wl = wu[i - 1] if i > 0 else 0.0
        wr = wu[i + 1] if i < D - 1 else 0.0
        gmu[i] = rho * p[i] * lam[i] * r + cmu * (wl - wr) * inv2h
        wl = wv[i - 1] if i > 0 else 0.0
        wr = wv[i + 1] if i < D - 1 else 0.0
        geta[i] = rho * p[i] * 0.5 * (lam[i] * r * r - 1.0) + clam * lam[i] * (wl - wr) * inv2h
    return rho * 0.5 * data + rhobar * pen


def fused_step(double[::1] mu, double[::1] eta,
               double[::1] m_mu, double[::1] v_mu,
               double[::1] m_eta, double[::1] v_eta,
               const double[::1] y, const double[::1] p, double h, double rho, double gamma,
               long step, double lr, double clip_threshold,
               double eta_min, double eta_max,
               double beta1=0.9, double beta2=0.999, double eps=1e-8):
    cdef Py_ssize_t D = mu.shape[0]
    cdef Py_ssize_t i
    cdef double[::1] gmu = np.empty(D)
    cdef double[::1] geta = np.empty(D)
    cdef double obj = objective_gradient(mu, eta, y, p, h, rho, gamma, gmu, geta)
    cdef double sq = 0.0
    cdef double wr2 = 0.0
    cdef double eta_hi
    cdef double norm, scale, c1, c2, g, target, r
    cdef bint clipped = 0
    cdef long clamp_count = 0
    for i in range(D):
        r = mu[i] - y[i]
        wr2 += p[i] * r * r
        sq += gmu[i] * gmu[i] + geta[i] * geta[i]
    norm = sqrt(sq)
    if norm > clip_threshold:
        clipped = 1
        scale = clip_threshold / norm
        for i in range(D):
            gmu[i] *= scale
            geta[i] *= scale
    c1 = 1.0 - pow(beta1, step)
    c2 = 1.0 - pow(beta2, step)
    eta_hi = eta_min
    for i in range(D):
        g = gmu[i]
        m_mu[i] = beta1 * m_mu[i] + (1.0 - beta1) * g
        v_mu[i] = beta2 * v_mu[i] + (1.0 - beta2) * g * g
        mu[i] -= lr * (m_mu[i] / c1) / (sqrt(v_mu[i] / c2) + eps)
        g = geta[i]
        m_eta[i] = beta1 * m_eta[i] + (1.0 - beta1) * g
        v_eta[i] = beta2 * v_eta[i] + (1.0 - beta2) * g * g
        target = eta[i] - lr * (m_eta[i] / c1) / (sqrt(v_eta[i] / c2) + eps)
        if target < eta_min:
            clamp_count += 1
            target = eta_min
        elif target > eta_max:
            clamp_count += 1
            target = eta_max
        eta[i] = target
        if target > eta_hi:
            eta_hi = target
    return obj, bool(clipped), clamp_count, eta_hi, wr2
