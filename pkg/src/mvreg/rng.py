"""Deterministic random-stream management.

Every random draw in the package comes from a named sub-stream derived from
a single user seed through SeedSequence spawn keys.  Consumers never share a
stream, so adding a draw in one place cannot perturb any other stream.
"""

import os

import numpy as np

# Stable purpose ids.  Append only; renumbering breaks reproducibility.
_PURPOSES = {
    "x": 0,          # covariate draws
    "noise": 1,      # observation noise
    "subsample": 2,  # index subsetting and splits
    "init": 3,       # parameter / field initialization
    "sgld": 4,       # sampler injection noise
    "shuffle": 5,    # minibatch shuffling
}

SEED_ENV_VAR = "MVR_SEED"
DEFAULT_SEED = 0


def resolve_seed(seed=None) -> int:
    """Seed resolution used by the CLI: explicit value, else MVR_SEED, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return DEFAULT_SEED


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one named purpose under the given seed.

    `index` separates parallel consumers of the same purpose, e.g. the mean
    and precision nets each drawing their own init stream.
    """
    if purpose not in _PURPOSES:
        raise KeyError(f"unknown rng purpose {purpose!r}; known: {sorted(_PURPOSES)}")
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_PURPOSES[purpose], int(index))
    )
    return np.random.Generator(np.random.PCG64(ss))
