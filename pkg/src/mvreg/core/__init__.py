"""Solver core with import-time backend selection.

The compiled Cython kernels are used when the extension built; otherwise
the numpy fallback takes over with identical semantics.  Set
MVR_FORCE_FALLBACK=1 to ignore the extension (useful for benchmarking and
for reproducing pure-Python behavior).
"""

import os

from . import fallback

if os.environ.get("MVR_FORCE_FALLBACK") == "1":
    _impl = fallback
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = fallback

BACKEND = _impl.BACKEND_NAME

objective = _impl.objective
objective_gradient = _impl.objective_gradient
fused_step = _impl.fused_step


def get_backend(name: str | None = None):
    """Return a backend module: 'compiled', 'fallback', or None for active.

    Raises ImportError if the compiled backend is requested but unavailable.
    """
    if name is None:
        return _impl
    if name == "fallback":
        return fallback
    if name == "compiled":
        from . import _kernels  # raises ImportError when not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
