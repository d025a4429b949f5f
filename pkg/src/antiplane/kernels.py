"""Backend selection for the element kernels.

The compiled module is used when it imports; ``ANTIPLANE_KERNELS=python``
forces the numpy fallback. ``ANTIPLANE_THREADS`` caps the worker count used
to split element loops (0 or unset means a single deterministic worker).
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

_FORCE_PY = os.environ.get("ANTIPLANE_KERNELS", "").lower() in ("python", "py", "numpy")

try:
    if _FORCE_PY:
        raise ImportError("fallback requested")
    from . import _ckernels as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

_MIN_CHUNK = 4096


def worker_count():
    try:
        n = int(os.environ.get("ANTIPLANE_THREADS", "0"))
    except ValueError:
        n = 0
    return max(n, 1)


def _get(name, backend):
    if backend is None:
        return getattr(_backend, name)
    mod = _pykernels if backend == "python" else _backend
    return getattr(mod, name)


def _chunked(fn, n, *arrays):
    workers = worker_count()
    if workers == 1 or n < 2 * _MIN_CHUNK:
        return fn(*arrays)
    bounds = np.linspace(0, n, min(workers, n // _MIN_CHUNK) + 1).astype(int)
    pieces = [tuple(np.ascontiguousarray(a[lo:hi]) for a in arrays)
              for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(len(pieces)) as pool:
        results = list(pool.map(lambda args: fn(*args), pieces))
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts) for parts in zip(*results))
    return np.concatenate(results)


def p1_geometry(nodes, tris, backend=None):
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    fn = _get("p1_geometry", backend)
    return _chunked(lambda t: fn(nodes, t), len(tris), tris)


def stiffness_values(grad, area, coef, backend=None):
    return _chunked(_get("stiffness_values", backend), len(area),
                    np.ascontiguousarray(grad), np.ascontiguousarray(area),
                    np.ascontiguousarray(coef, dtype=np.float64))


def tensor_stiffness_values(grad, area, tensor, backend=None):
    return _chunked(_get("tensor_stiffness_values", backend), len(area),
                    np.ascontiguousarray(grad), np.ascontiguousarray(area),
                    np.ascontiguousarray(tensor, dtype=np.float64))


def mass_values(area, backend=None):
    return _chunked(_get("mass_values", backend), len(area), np.ascontiguousarray(area))


def advection_values(grad, area, vec, backend=None):
    return _chunked(_get("advection_values", backend), len(area),
                    np.ascontiguousarray(grad), np.ascontiguousarray(area),
                    np.ascontiguousarray(vec, dtype=np.float64))
