"""Backend selection for the compiled kernels.

``PHASEFLOW_KERNELS=numpy`` forces the vectorized numpy path; the default is
numba when it imports cleanly.  ``PHASEFLOW_THREADS`` caps the numba thread
pool.
"""

from __future__ import annotations

import os
import warnings

_REQUESTED = os.environ.get("PHASEFLOW_KERNELS", "numba").strip().lower()

try:  # pragma: no cover - exercised implicitly by the import
    import numba as _numba

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False

if _REQUESTED not in ("numba", "numpy"):
    raise ValueError(f"PHASEFLOW_KERNELS must be 'numba' or 'numpy', got {_REQUESTED!r}")

BACKEND = "numba" if (_REQUESTED == "numba" and HAVE_NUMBA) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is present, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(*args, cache=True, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def worker_count() -> int:
    """Worker count from ``PHASEFLOW_THREADS``, else the machine default."""
    raw = os.environ.get("PHASEFLOW_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    value = int(raw)
    if value < 1:
        raise ValueError("PHASEFLOW_THREADS must be a positive integer")
    return value


def configure_threads() -> int:
    """Apply ``PHASEFLOW_THREADS`` to numba and return the count in use."""
    count = worker_count()
    if HAVE_NUMBA:
        count = min(count, _numba.config.NUMBA_NUM_THREADS)
        with warnings.catch_warnings():
            # numba probes an old TBB before falling back to another threading layer
            warnings.filterwarnings("ignore", message=".*TBB.*")
            _numba.set_num_threads(count)
    return count


def use_numba(backend: str | None = None) -> bool:
    chosen = BACKEND if backend is None else backend
    if chosen not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {chosen!r}")
    return chosen == "numba" and HAVE_NUMBA
