"""Log-pseudolikelihood, its derivatives, and per-cell gradient blocks.

Quantities here keep the LPL sign convention::

    LPL(theta)      = -int exp(-V) dmu - sum_{x in phi_L} V(x | phi - x)
    LPL1(theta)_j   =  int v_j exp(-V) dmu - sum v_j
    LPL2(theta)_jk  =  int v_j v_k exp(-V) dmu

``LPL2`` is the positive semidefinite curvature of ``-LPL``.
The integral runs over the fit window; local statistics use the whole
observed pattern, and the data sum only the points inside the fit window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InfeasibleData
from .geometry import Window, cell_indices, cell_partition, lattice_shift
from .models import ModelSpec, data_statistics, node_statistics, require_theta
from .patterns import PointPattern
from .quadrature import QuadratureScheme, energies, papangelou, weighted_sums


def check_containment(model: ModelSpec, pattern: PointPattern, fit_window: Window):
    if not pattern.window.contains_window(fit_window.dilate(model.D)):
        raise ConfigurationError(
            f"fit window {fit_window.as_tuple()} grown by the interaction range {model.D!r} "
            f"leaves the observation window {pattern.window.as_tuple()}; erode the fit window further"
        )


class Contrast:
    """Local statistics at quadrature nodes and data points, computed once.

    Evaluating the contrast at a new ``theta`` then costs one pass over the
    stored statistics. Methods do not validate ``theta``.
    """

    def __init__(self, model: ModelSpec, pattern: PointPattern, fit_window: Window, quad: QuadratureScheme, threads=1):
        if quad.window != fit_window:
            raise ConfigurationError(
                f"quadrature window {quad.window.as_tuple()} differs from fit window {fit_window.as_tuple()}"
            )
        if quad.mark_space != model.mark_space:
            raise ConfigurationError("quadrature mark rule does not match the model's mark space")
        check_containment(model, pattern, fit_window)
        self.model = model
        self.pattern = pattern
        self.fit_window = fit_window
        self.quad = quad
        self.area = fit_window.area
        self.data_index = np.flatnonzero(fit_window.contains(pattern.x, pattern.y))
        dstats, dhard = data_statistics(model, pattern, self.data_index, threads=threads)
        if np.any(dhard):
            i = int(self.data_index[np.flatnonzero(dhard)[0]])
            raise InfeasibleData(
                f"data point {i} at ({pattern.x[i]!r}, {pattern.y[i]!r}) lies closer to another point "
                "than the model's hard-core distance"
            )
        self.data_stats = dstats
        self.data_sum = dstats.sum(axis=0) if len(dstats) else np.zeros(model.p)
        self.node_x = quad.x
        self.node_y = quad.y
        self.node_m = quad.m
        self.node_w = quad.weights
        self.node_stats, self.node_hard = node_statistics(
            model, pattern, self.node_x, self.node_y, self.node_m, threads=threads
        )

    @property
    def n_data(self) -> int:
        return len(self.data_index)

    def _weights(self, theta):
        e = papangelou(
            self.node_stats, self.node_hard, theta, lambda i: (self.node_x[i], self.node_y[i], self.node_m[i])
        )
        return self.node_w * e

    def lpl(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return -float(np.sum(self._weights(theta))) - float(energies(self.data_sum[None, :], theta)[0])

    def gradient(self, theta) -> np.ndarray:
        we = self._weights(np.asarray(theta, dtype=float))
        return weighted_sums(we, self.node_stats) - self.data_sum

    def hessian(self, theta) -> np.ndarray:
        we = self._weights(np.asarray(theta, dtype=float))
        return self._hessian(we)

    def _hessian(self, we) -> np.ndarray:
        p = self.model.p
        S = self.node_stats
        H = np.zeros((p, p))
        for j in range(p):
            wj = we * S[:, j]
            for k in range(j, p):
                H[j, k] = H[k, j] = np.sum(wj * S[:, k])
        return H

    def evaluate(self, theta):
        """``(LPL, LPL1, LPL2)`` at ``theta``."""
        theta = np.asarray(theta, dtype=float)
        we = self._weights(theta)
        val = -float(np.sum(we)) - float(energies(self.data_sum[None, :], theta)[0])
        return val, weighted_sums(we, self.node_stats) - self.data_sum, self._hessian(we)

    def cell_gradients(self, theta, d: float) -> dict:
        """``LPL1`` restricted to each cell of side ``d`` tiling the fit window."""
        if not (d > 0 and math.isfinite(d)):
            raise ConfigurationError(f"cell size must be positive, got {d!r}")
        sx, sy = lattice_shift(self.fit_window, d)
        cells = cell_partition(self.fit_window.shifted(sx, sy), d)
        (i0, j0), (i1, j1) = cells[0], cells[-1]
        nx, ny = i1 - i0 + 1, j1 - j0 + 1
        p = self.model.p
        we = self._weights(np.asarray(theta, dtype=float))
        acc = np.zeros((nx * ny, p))

        def flat(x, y):
            ij = cell_indices(x + sx, y + sy, d)
            a = np.clip(ij[:, 0] - i0, 0, nx - 1)
            b = np.clip(ij[:, 1] - j0, 0, ny - 1)
            return a * ny + b

        node_cell = flat(self.node_x, self.node_y)
        np.add.at(acc, node_cell, we[:, None] * self.node_stats)
        if self.n_data:
            data_cell = flat(self.pattern.x[self.data_index], self.pattern.y[self.data_index])
            np.subtract.at(acc, data_cell, self.data_stats)
        return {c: acc[(c[0] - i0) * ny + (c[1] - j0)].copy() for c in cells}


@dataclass(frozen=True)
class LplReport:
    lpl: float
    gradient: np.ndarray
    hessian: np.ndarray
    per_cell_gradients: dict
    fit_window: Window
    cell_size: float


def lpl(model, theta, pattern, fit_window, quad, threads=1) -> float:
    th = require_theta(model, theta)
    return Contrast(model, pattern, fit_window, quad, threads).lpl(th)


def lpl_gradient(model, theta, pattern, fit_window, quad, threads=1) -> np.ndarray:
    th = require_theta(model, theta)
    return Contrast(model, pattern, fit_window, quad, threads).gradient(th)


def lpl_hessian(model, theta, pattern, fit_window, quad, threads=1) -> np.ndarray:
    th = require_theta(model, theta)
    return Contrast(model, pattern, fit_window, quad, threads).hessian(th)


def cell_gradients(model, theta, pattern, fit_window, cell, quad, threads=1) -> dict:
    th = require_theta(model, theta)
    return Contrast(model, pattern, fit_window, quad, threads).cell_gradients(th, cell)


def lpl_report(model, theta, pattern, fit_window, quad, cell, threads=1) -> LplReport:
    th = require_theta(model, theta)
    c = Contrast(model, pattern, fit_window, quad, threads)
    val, grad, hess = c.evaluate(th)
    return LplReport(val, grad, hess, c.cell_gradients(th, cell), fit_window, float(cell))
