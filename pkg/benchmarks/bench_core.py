"""Benchmark the compiled solver kernels against the numpy fallback.

Times the two hot paths (objective+gradient, fused Adam step) on identical
inputs for each available backend and reports per-call times and speedups.
Run as:  python3 benchmarks/bench_core.py --size 512 --steps 2000
"""

import argparse
import time

import numpy as np

from mvreg.core import get_backend
from mvreg.lattice import build_uniform_lattice


def _inputs(size, seed=0):
    lat = build_uniform_lattice(0.0, 1.0, size)
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=size)
    eta = rng.normal(scale=0.5, size=size)
    y = rng.normal(scale=1.2, size=size)
    return mu, eta, y, lat.weights, lat.spacing


def bench_gradient(impl, size, steps):
    mu, eta, y, p, h, = _inputs(size)
    gmu, geta = np.empty(size), np.empty(size)
    impl.objective_gradient(mu, eta, y, p, h, 0.6, 0.4, gmu, geta)  # warmup
    t0 = time.perf_counter()
    for _ in range(steps):
        impl.objective_gradient(mu, eta, y, p, h, 0.6, 0.4, gmu, geta)
    return (time.perf_counter() - t0) / steps


def bench_fused_step(impl, size, steps):
    mu, eta, y, p, h = _inputs(size)
    m_mu, v_mu = np.zeros(size), np.zeros(size)
    m_eta, v_eta = np.zeros(size), np.zeros(size)
    impl.fused_step(mu.copy(), eta.copy(), m_mu.copy(), v_mu.copy(),
                    m_eta.copy(), v_eta.copy(), y, p, h, 0.6, 0.4,
                    1, 1e-3, 1e3, -30.0, 30.0)  # warmup
    t0 = time.perf_counter()
    for k in range(steps):
        impl.fused_step(mu, eta, m_mu, v_mu, m_eta, v_eta, y, p, h,
                        0.6, 0.4, k + 1, 1e-3, 1e3, -30.0, 30.0)
    return (time.perf_counter() - t0) / steps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512, help="lattice sites")
    ap.add_argument("--steps", type=int, default=2000, help="timed iterations")
    args = ap.parse_args(argv)

    backends = {}
    backends["fallback"] = get_backend("fallback")
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; timing fallback only")

    results = {}
    for name, impl in backends.items():
        g = bench_gradient(impl, args.size, args.steps)
        f = bench_fused_step(impl, args.size, args.steps)
        results[name] = (g, f)
        print(f"{name:9s}  gradient {g * 1e6:9.2f} us/call   "
              f"fused step {f * 1e6:9.2f} us/call")

    if len(results) == 2:
        g_speed = results["fallback"][0] / results["compiled"][0]
        f_speed = results["fallback"][1] / results["compiled"][1]
        print(f"speedup    gradient {g_speed:9.2f}x          "
              f"fused step {f_speed:9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
