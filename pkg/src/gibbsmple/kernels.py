"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when importable; otherwise, or
when ``GIBBSMPLE_PURE=1`` is set, the pure-Python ``_pycore`` twin is used.
Both expose the same functions; ``use_backend`` switches at runtime (tests
and the benchmark compare the two).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _pycore

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

_impl = _pycore if (_compiled is None or os.environ.get("GIBBSMPLE_PURE")) else _compiled

OVERLAP, MULTI_STRAUSS, KNN, STRAUSS_DISC, GEYER, AREA = range(6)
MARK_UNIT, MARK_FINITE, MARK_INTERVAL = range(3)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Flat numeric description of a model, consumed by the kernels.

    Pair tables are indexed by 0-based marks ``[m1, m2]`` and are symmetric.
    """

    family: int
    p: int
    R: float
    k: int
    mmax: float
    nmarks: int
    search: float
    dmax: float
    count_col: np.ndarray
    edges: np.ndarray
    nbands: np.ndarray
    band_col: np.ndarray
    hard: np.ndarray
    area_tol: float = 1e-10


def compiled_available() -> bool:
    return _compiled is not None


def backend() -> str:
    return _impl.BACKEND


class _Restore:
    def __init__(self, prev):
        self.prev = prev

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        global _impl
        _impl = self.prev


def use_backend(name: str) -> _Restore:
    """Select ``"cython"`` or ``"python"`` kernels for subsequent calls.

    Used as a context manager, the previous backend returns on exit.
    """
    global _impl
    prev = _impl
    if name == "python":
        _impl = _pycore
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled extension gibbsmple._core is not built")
        _impl = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return _Restore(prev)


def added_disc_area(cx, cy, R, ex, ey, tol):
    return _impl.added_disc_area(cx, cy, R, ex, ey, tol)


def local_stats(spec, qx, qy, qm, cx, cy, cm):
    return _impl.local_stats(spec, qx, qy, qm, cx, cy, cm)


def node_statistics(spec, px, py, pm, qx, qy, qm, exclude=None, threads=1):
    """Statistics at query points; chunks run on ``threads`` workers.

    The compiled kernel releases the GIL, so threads give real parallelism
    there; per-node results do not depend on the chunking.
    """
    qx = np.ascontiguousarray(qx, dtype=float)
    qy = np.ascontiguousarray(qy, dtype=float)
    qm = np.ascontiguousarray(qm, dtype=float)
    if exclude is None:
        exclude = np.full(len(qx), -1, dtype=np.int_)
    exclude = np.ascontiguousarray(exclude, dtype=np.int_)
    px = np.ascontiguousarray(px, dtype=float)
    py = np.ascontiguousarray(py, dtype=float)
    pm = np.ascontiguousarray(pm, dtype=float)
    nq = len(qx)
    threads = max(1, int(threads or 1))
    if threads == 1 or nq < 2048:
        return _impl.node_statistics(spec, px, py, pm, qx, qy, qm, exclude)
    bounds = np.linspace(0, nq, threads + 1).astype(int)

    def work(i):
        s, e = bounds[i], bounds[i + 1]
        return _impl.node_statistics(spec, px, py, pm, qx[s:e], qy[s:e], qm[s:e], exclude[s:e])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(work, range(threads)))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def run_chain(spec, theta, window, mark_kind, mark_param, px, py, pm, n, uniforms, probs, counters):
    return _impl.run_chain(spec, theta, window, mark_kind, mark_param, px, py, pm, n, uniforms, probs, counters)
