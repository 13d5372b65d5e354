"""Planar geometry kernels and the square cell lattice used for blocking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInput, MisalignedWindow

_ALIGN_RTOL = 1e-9


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInput(f"window bounds must be finite, got {vals}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidInput(f"degenerate window {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    def contains(self, x, y, closed=False):
        """Membership test, vectorised over ``x`` and ``y``.

        The default half-open test ``[xmin, xmax) x [ymin, ymax)`` gives every
        point of a tiling exactly one owner; ``closed=True`` is used when
        validating points against an observation window.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if closed:
            return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        return (x >= self.xmin) & (x < self.xmax) & (y >= self.ymin) & (y < self.ymax)

    def contains_window(self, other: "Window", tol: float = 1e-9) -> bool:
        scale = tol * max(1.0, abs(self.xmin), abs(self.xmax), abs(self.ymin), abs(self.ymax))
        return (
            other.xmin >= self.xmin - scale
            and other.xmax <= self.xmax + scale
            and other.ymin >= self.ymin - scale
            and other.ymax <= self.ymax + scale
        )

    def dilate(self, r: float) -> "Window":
        return Window(self.xmin - r, self.xmax + r, self.ymin - r, self.ymax + r)

    def shifted(self, dx: float, dy: float) -> "Window":
        return Window(self.xmin + dx, self.xmax + dx, self.ymin + dy, self.ymax + dy)


def cell_index(point: Sequence[float], d: float) -> tuple[int, int]:
    """Index ``(i1, i2)`` of the half-open cell ``[d(i-1/2), d(i+1/2))`` holding ``point``."""
    if not d > 0:
        raise InvalidInput(f"cell size must be positive, got {d}")
    x, y = float(point[0]), float(point[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInput(f"non-finite coordinates {point!r}")
    return (math.floor(x / d + 0.5), math.floor(y / d + 0.5))


def cell_indices(x, y, d: float) -> np.ndarray:
    """Vectorised :func:`cell_index`; returns an ``(n, 2)`` integer array."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([np.floor(x / d + 0.5), np.floor(y / d + 0.5)], axis=-1).astype(np.int64)


def lattice_shift(window: Window, d: float) -> tuple[float, float]:
    """Translation moving the lower-left corner of ``window`` onto the cell lattice."""

    def one(lo):
        k = math.floor(lo / d + 1.0)
        s = d * (k - 0.5) - lo
        return 0.0 if abs(s) <= _ALIGN_RTOL * max(1.0, abs(lo / d)) * d else s

    return one(window.xmin), one(window.ymin)


def cell_partition(window: Window, d: float) -> list[tuple[int, int]]:
    """All cells of size ``d`` tiling ``window``, in row-major order.

    Raises :class:`MisalignedWindow` unless both sides are multiples of
    ``d``. When the window edges sit on the lattice ``{d(i - 1/2)}`` the
    indices are those of :func:`cell_index`; otherwise they index the
    lattice after translating the window by :func:`lattice_shift`.
    """
    if not d > 0:
        raise InvalidInput(f"cell size must be positive, got {d}")
    nx, ny = cells_per_side(window, d)
    sx, sy = lattice_shift(window, d)
    ix = round((window.xmin + sx) / d + 0.5)
    iy = round((window.ymin + sy) / d + 0.5)
    return [(ix + a, iy + b) for a in range(nx) for b in range(ny)]


def cells_per_side(window: Window, d: float) -> tuple[int, int]:
    """Cell counts along x and y when ``window`` sides are multiples of ``d``."""
    nx = window.width / d
    ny = window.height / d
    rx, ry = round(nx), round(ny)
    if (
        rx < 1
        or ry < 1
        or abs(nx - rx) > _ALIGN_RTOL * max(1.0, nx)
        or abs(ny - ry) > _ALIGN_RTOL * max(1.0, ny)
    ):
        raise MisalignedWindow(
            f"window sides {window.width} x {window.height} are not multiples of cell size {d}"
        )
    return rx, ry


def disc_overlap_area(r, R: float):
    """Area of ``B(0, R/2) ∩ B(x, R/2)`` with ``|x| = r``; vectorised over ``r``."""
    if not R > 0:
        raise InvalidInput(f"R must be positive, got {R}")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidInput("distance must be nonnegative")
    rc = np.minimum(r_arr, R)
    val = 0.5 * (R * R * np.arccos(rc / R) - rc * np.sqrt(R * R - rc * rc))
    val = np.where(r_arr < R, np.maximum(val, 0.0), 0.0)
    if np.ndim(val) == 0:
        return float(val)
    return val


def added_disc_area(new_center, R: float, existing: Iterable[Sequence[float]], tol: float = 1e-10) -> float:
    """Area of ``B(new_center, R)`` not covered by discs of radius ``R`` at ``existing``.

    ``tol`` is the target absolute error relative to ``pi R^2``.
    """
    if not R > 0:
        raise InvalidInput(f"R must be positive, got {R}")
    pts = np.asarray(list(existing), dtype=float).reshape(-1, 2)
    cx, cy = float(new_center[0]), float(new_center[1])
    return kernels.added_disc_area(cx, cy, float(R), pts[:, 0].copy(), pts[:, 1].copy(), float(tol))


def _sq_dist(ax, ay, bx, by):
    dx = ax - bx
    dy = ay - by
    return dx * dx + dy * dy


def knn_lists(points, k: int) -> list[list[int]]:
    """For each point, indices of its ``k`` nearest neighbours.

    Ties in distance are broken by the lexicographic order of the candidate's
    ``(x, y)``, so the result does not depend on input order.
    """
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    seen = set()
    for x, y in pts:
        key = (float(x), float(y))
        if key in seen:
            raise InvalidInput(f"duplicate point {key}: nearest-neighbour ties undefined")
        seen.add(key)
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    out = []
    for a in range(n):
        cand = sorted(
            (_sq_dist(xs[a], ys[a], xs[b], ys[b]), xs[b], ys[b], b) for b in range(n) if b != a
        )
        out.append([c[3] for c in cand[:k]])
    return out


def knn_graph(points, k: int) -> set[frozenset]:
    """Symmetrised k-nearest-neighbour graph as a set of 2-element frozensets.

    ``{a, b}`` is an edge when either endpoint is among the other's ``k``
    nearest neighbours.
    """
    edges = set()
    for a, nbrs in enumerate(knn_lists(points, k)):
        for b in nbrs:
            edges.add(frozenset((a, b)))
    return edges
