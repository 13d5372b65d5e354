"""Shared fixtures: one model per family and random configurations for it."""

import math

import numpy as np

from gibbsmple import ModelSpec, PointPattern, Window
from gibbsmple.patterns import FINITE, INTERVAL

MODELS = {
    "overlap_area": ModelSpec.overlap_area(1.0),
    "multi_strauss": ModelSpec.multi_strauss(
        {"1,1": [0.0, 0.5, 1.0], "1,2": [0.0, 0.7], "2,2": [0.0, 0.4, 0.9]}, M=2
    ),
    "multi_strauss_hard": ModelSpec.multi_strauss(
        {"1,1": [0.2, 0.6, 1.0], "1,2": [0.15, 0.7], "2,2": [0.3, 0.9]}, M=2, hard_core=True
    ),
    "knn_multi_strauss": ModelSpec.knn_multi_strauss(
        {"1,1": [0.0, 0.5, 1.0], "1,2": [0.0, 0.8], "2,2": [0.0, 0.6]}, k=2, M=2
    ),
    "strauss_disc": ModelSpec.strauss_disc(0.5),
    "geyer_triplet": ModelSpec.geyer_triplet(1.0),
    "area_interaction": ModelSpec.area_interaction(0.5),
}


def random_marks(model, rng, n):
    ms = model.mark_space
    if ms.kind == FINITE:
        return rng.integers(1, ms.M + 1, n).astype(float)
    if ms.kind == INTERVAL:
        return rng.uniform(0.0, ms.mmax, n)
    return np.zeros(n)


def min_hard(model):
    """Largest hard-core distance of the model (0 without a hard core)."""
    if model.family != "multi_strauss" or not model.hard_core:
        return 0.0
    return max(model.hard_distance(a, b) for (a, b), _ in model.ranges)


def random_points(model, rng, n, lo, hi, admissible=True):
    """``(x, y, m)`` arrays of at most ``n`` uniform points in ``[lo, hi]^2``.

    With ``admissible`` the points respect the model's hard core
    (sequential inhibition at the pair distances).
    """
    x = rng.uniform(lo, hi, n)
    y = rng.uniform(lo, hi, n)
    m = random_marks(model, rng, n)
    if not (admissible and min_hard(model) > 0):
        return x, y, m
    keep = []
    for i in range(n):
        ok = True
        for j in keep:
            d = math.hypot(x[i] - x[j], y[i] - y[j])
            if d < model.hard_distance(int(min(m[i], m[j])), int(max(m[i], m[j]))):
                ok = False
                break
        if ok:
            keep.append(i)
    return x[keep], y[keep], m[keep]


def random_pattern(model, rng, n, side, admissible=True):
    x, y, m = random_points(model, rng, n, 0.0, side, admissible)
    return PointPattern(x, y, m, Window(0.0, side, 0.0, side), model.mark_space)


def random_theta(model, rng):
    """A parameter vector in the interior of the admissible set."""
    th = np.empty(model.p)
    lb = model.lower_bounds
    for j in range(model.p):
        if np.isfinite(lb[j]):
            th[j] = rng.uniform(0.05, 1.0)
        else:
            th[j] = rng.uniform(-0.8, 0.8)
    if model.family == "geyer_triplet":
        th[1] = rng.uniform(-0.5, 0.5)
    return th


def lpl_fixture(model, rng, side=6.0, n=30, grid=(24, 24), mark_nodes=4):
    """Random pattern on ``[0, side]^2`` with the fit window eroded by ``D``."""
    from gibbsmple import build_quadrature, erode_window

    pat = random_pattern(model, rng, n, side)
    fw = erode_window(pat.window, model.D)
    return pat, fw, build_quadrature(fw, model.mark_space, grid, mark_nodes)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)
