"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback. ``use_backend`` switches explicitly (tests, benchmarks).
"""
import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_active = _compiled or _kernels_py


def backend_name() -> str:
    return "compiled" if _active is _compiled else "python"


def use_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    _active = BACKENDS[name]


def xcorr_direct(a, b, max_lag: int) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _active.xcorr_direct(a, b, int(max_lag))


def window_stats(x, starts, width: int):
    x = np.ascontiguousarray(x, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    if len(starts) and (starts.min() < 0 or starts.max() + width > len(x)):
        raise IndexError("window exceeds signal")
    return _active.window_stats(x, starts, int(width))


def points_in_polygon(px, py, vx, vy, rel_tol: float = 1e-12) -> np.ndarray:
    f = lambda v: np.ascontiguousarray(np.atleast_1d(v), dtype=np.float64)
    return _active.points_in_polygon(f(px), f(py), f(vx), f(vy), float(rel_tol))
