"""Kernel selection: compiled Cython core if importable, else the fallback.

Set ``GRAFFLOW_KERNEL=python`` to force the fallback.
"""
import os

from . import _tridiag_py

try:
    from . import _tridiag as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _tridiag_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

_requested = os.environ.get("GRAFFLOW_KERNEL", "").strip().lower()
if _requested and _requested not in _BACKENDS:
    raise ImportError(f"GRAFFLOW_KERNEL={_requested!r} is not available; have {sorted(_BACKENDS)}")
BACKEND = _requested or ("cython" if _compiled is not None else "python")


def available_backends():
    return sorted(_BACKENDS)


def get_kernel(name=None):
    return _BACKENDS[name or BACKEND]


solve_edges = get_kernel().solve_edges
