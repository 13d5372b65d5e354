"""Midpoint-rule quadrature over window x mark space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericError
from .geometry import Window
from .models import ModelSpec, node_statistics, require_theta
from .patterns import FINITE, INTERVAL, MarkSpace

DEFAULT_GRID = (256, 256)
DEFAULT_MARK_NODES = 16


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Nodes ``(x, y, m)`` with weights ``w`` approximating ``lambda^2 (x) lambda^m``.

    Nodes are ordered spatial-major: node ``s * G + g`` pairs spatial node
    ``s`` (row-major over ``x`` then ``y``) with mark node ``g``.
    """

    window: Window
    nx: int
    ny: int
    mark_space: MarkSpace
    spatial_x: np.ndarray
    spatial_y: np.ndarray
    spatial_weight: float
    mark_nodes: np.ndarray
    mark_weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.spatial_x) * len(self.mark_nodes)

    @property
    def x(self) -> np.ndarray:
        return np.repeat(self.spatial_x, len(self.mark_nodes))

    @property
    def y(self) -> np.ndarray:
        return np.repeat(self.spatial_y, len(self.mark_nodes))

    @property
    def m(self) -> np.ndarray:
        return np.tile(self.mark_nodes, len(self.spatial_x))

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(np.full(len(self.spatial_x), self.spatial_weight), len(self.mark_nodes)) * np.tile(
            self.mark_weights, len(self.spatial_x)
        )

    def describe(self) -> dict:
        return {"grid": [self.nx, self.ny], "mark_nodes": len(self.mark_nodes)}


def mark_rule(mark_space: MarkSpace, G: int = DEFAULT_MARK_NODES):
    """Mark nodes and probability weights for ``mark_space``."""
    if mark_space.kind == FINITE:
        M = mark_space.M
        return np.arange(1.0, M + 1.0), np.full(M, 1.0 / M)
    if mark_space.kind == INTERVAL:
        if not isinstance(G, (int, np.integer)) or G < 1:
            raise InvalidInput(f"mark node count must be a positive integer, got {G!r}")
        t, w = np.polynomial.legendre.leggauss(int(G))
        return 0.5 * mark_space.mmax * (t + 1.0), 0.5 * w
    return np.zeros(1), np.ones(1)


def build_quadrature(window: Window, mark_space: MarkSpace, grid=DEFAULT_GRID, mark_nodes: int = DEFAULT_MARK_NODES):
    """Midpoint rule on an ``nx x ny`` grid over ``window`` times a mark rule."""
    try:
        nx, ny = (int(g) for g in grid)
    except (TypeError, ValueError):
        raise InvalidInput(f"grid must be a pair of integers, got {grid!r}") from None
    if nx < 2 or ny < 2 or (nx, ny) != tuple(grid):
        raise InvalidInput(f"grid must be at least 2x2 integers, got {grid!r}")
    hx = window.width / nx
    hy = window.height / ny
    cx = window.xmin + hx * (np.arange(nx) + 0.5)
    cy = window.ymin + hy * (np.arange(ny) + 0.5)
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    mn, mw = mark_rule(mark_space, mark_nodes)
    return QuadratureScheme(
        window=window,
        nx=nx,
        ny=ny,
        mark_space=mark_space,
        spatial_x=gx.ravel(),
        spatial_y=gy.ravel(),
        spatial_weight=window.area / (nx * ny),
        mark_nodes=mn,
        mark_weights=mw,
    )


def energies(stats: np.ndarray, theta) -> np.ndarray:
    """``stats @ theta`` with a fixed summation order (no BLAS threading)."""
    V = np.zeros(stats.shape[0])
    for j, t in enumerate(theta):
        if t != 0.0:
            V += float(t) * stats[:, j]
    return V


def weighted_sums(we: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """``we @ vals`` column by column with numpy's pairwise summation."""
    return np.array([np.sum(we * vals[:, j]) for j in range(vals.shape[1])])


def papangelou(stats: np.ndarray, hard: np.ndarray, theta: np.ndarray, where=None) -> np.ndarray:
    """``exp(-theta . v)`` per row; 0 at hard-core rows.

    Raises :class:`NumericError` naming the first node that overflows.
    """
    V = energies(stats, theta)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-V)
    e[hard.astype(bool)] = 0.0
    bad = ~np.isfinite(e)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        loc = f" at {where(i)}" if where else ""
        raise NumericError(f"conditional intensity overflows at node {i}{loc}: energy {V[i]!r}")
    return e


def integrate_papangelou(g, model: ModelSpec, theta, phi, quad: QuadratureScheme, threads=1):
    """``sum_nodes w g(x^m, phi) exp(-V(x^m | phi; theta))``.

    ``g`` is ``None`` (constant 1), ``"stats"`` (the vector ``v``) or a
    callable ``g(stats, x, y, m)`` returning one value or row per node.
    """
    th = require_theta(model, theta)
    x, y, m, w = quad.x, quad.y, quad.m, quad.weights
    stats, hard = node_statistics(model, phi, x, y, m, threads=threads)
    e = papangelou(stats, hard, th, lambda i: (x[i], y[i], m[i]))
    we = w * e
    if g is None:
        return float(np.sum(we))
    if isinstance(g, str):
        if g != "stats":
            raise InvalidInput(f"unknown integrand {g!r}")
        vals = stats
    else:
        vals = np.asarray(g(stats, x, y, m), dtype=float)
    if vals.ndim == 1:
        return float(np.sum(we * vals))
    out = weighted_sums(we, vals)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite integral")
    return out
