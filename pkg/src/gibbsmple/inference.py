"""Maximum pseudolikelihood fitting and its asymptotic covariance."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm

from .errors import ConfigurationError, IdentifiabilityError, IllConditioned, InvalidInput
from .geometry import Window
from .models import ModelSpec, require_theta
from .patterns import PointPattern, erode_window
from .pseudolikelihood import Contrast
from .quadrature import DEFAULT_GRID, DEFAULT_MARK_NODES, build_quadrature

COND_LIMIT = 1e12
NEAR_SINGULAR = 1e-10


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    armijo: float = 1e-4
    max_halvings: int = 60
    level: float = 0.95
    theta0: tuple | None = None
    threads: int = 1


@dataclass(frozen=True)
class FitResult:
    """Output of :func:`fit_mple`; matrices are ``p x p`` numpy arrays."""

    model: ModelSpec
    theta_hat: np.ndarray
    u2: np.ndarray
    sigma_hat: np.ndarray
    vcov: np.ndarray
    ci: np.ndarray
    level: float
    converged: bool
    iterations: int
    grad_norm: float
    active: np.ndarray
    fit_window: Window
    cell: float
    dvee: float
    area: float
    n_points: int
    lpl: float
    trace: tuple = ()
    identifiability: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def names(self):
        return self.model.names

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def to_dict(self) -> dict:
        return {
            "theta_hat": _clean(self.theta_hat),
            "names": list(self.names),
            "vcov": _clean(self.vcov),
            "se": _clean(self.se),
            "ci": _clean(self.ci),
            "level": self.level,
            "sigma_hat": _clean(self.sigma_hat),
            "u2": _clean(self.u2),
            "diagnostics": {
                "converged": self.converged,
                "iterations": self.iterations,
                "grad_norm": _clean(self.grad_norm),
                "lpl": _clean(self.lpl),
                "active_bounds": [n for n, a in zip(self.names, self.active) if a],
                "objective_trace": _clean(list(self.trace)),
                "identifiability": _clean(self.identifiability),
            },
            "geometry": {
                "fit_window": list(self.fit_window.as_tuple()),
                "cell": self.cell,
                "dvee": self.dvee,
                "area": self.area,
                "n_points": self.n_points,
            },
            "config": self.config,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=kw.pop("indent", 2), allow_nan=False, **kw)


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# ---------------------------------------------------------------------------
# covariance pieces


def neighbour_radius(cell: float, dvee: float) -> int:
    """``ceil(dvee / cell)``, robust to rounding in the ratio."""
    return max(0, math.ceil(dvee / cell - 1e-9))


def sigma_hat(per_cell_gradients: dict, cell: float, dvee: float, area: float) -> np.ndarray:
    """``|L|^-1 sum_i sum_{j : |j - i|_inf <= r} g_i g_j^T`` with ``r = ceil(dvee / cell)``."""
    if not per_cell_gradients:
        raise InvalidInput("no cells")
    keys = list(per_cell_gradients)
    ij = np.array(keys, dtype=np.int64)
    i0, j0 = ij.min(axis=0)
    nx, ny = ij.max(axis=0) - (i0, j0) + 1
    p = len(np.atleast_1d(per_cell_gradients[keys[0]]))
    G = np.zeros((nx, ny, p))
    for (a, b), g in per_cell_gradients.items():
        G[a - i0, b - j0] = g
    r = neighbour_radius(cell, dvee)
    # box sums N_i = sum_{|j - i| <= r} g_j, one shifted copy at a time
    N = np.zeros_like(G)
    for da in range(-min(r, nx - 1), min(r, nx - 1) + 1):
        for db in range(-min(r, ny - 1), min(r, ny - 1) + 1):
            sa = slice(max(0, da), nx + min(0, da))
            ta = slice(max(0, -da), nx + min(0, -da))
            sb = slice(max(0, db), ny + min(0, db))
            tb = slice(max(0, -db), ny + min(0, -db))
            N[ta, tb] += G[sa, sb]
    S = np.zeros((p, p))
    for a, b in ((a - i0, b - j0) for a, b in keys):
        S += np.outer(G[a, b], N[a, b])
    S = 0.5 * (S + S.T)
    return S / area


def sandwich_covariance(u2, sigma, area: float) -> np.ndarray:
    """``|L|^-1 u2^-1 sigma u2^-1``."""
    u2 = np.atleast_2d(np.asarray(u2, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    cond = np.linalg.cond(u2)
    if not (cond < COND_LIMIT):
        raise IdentifiabilityError(f"u2 is numerically singular (condition {cond:.3g})", cond)
    X = np.linalg.solve(u2, sigma)
    V = np.linalg.solve(u2, X.T).T / area
    return 0.5 * (V + V.T)


def confidence_intervals(theta_or_fit, vcov=None, level: float = 0.95) -> np.ndarray:
    """Rows ``[lo, hi] = theta_j -/+ z sqrt(vcov_jj)`` at two-sided ``level``."""
    if isinstance(theta_or_fit, FitResult):
        theta, vcov = theta_or_fit.theta_hat, theta_or_fit.vcov
    else:
        theta = theta_or_fit
    if not (0.0 < level < 1.0):
        raise InvalidInput(f"level must lie in (0, 1), got {level!r}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    z = norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(np.clip(np.diag(np.atleast_2d(vcov)), 0.0, None))
    return np.column_stack([theta - half, theta + half])


def _eig_report(A) -> dict:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        return {"eigenvalues": [math.nan] * len(A), "condition": math.inf, "near_singular": True}
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    tr = float(np.sum(np.abs(ev)))
    top = float(np.max(np.abs(ev))) if len(ev) else 0.0
    low = float(np.min(ev)) if len(ev) else 0.0
    cond = top / low if low > 0 else math.inf
    flag = bool(tr == 0.0 or low < NEAR_SINGULAR * tr)
    return {"eigenvalues": ev.tolist(), "condition": cond, "near_singular": flag}


def identifiability_diagnostic(fit_or_u2, sigma=None) -> dict:
    """Eigenvalues and condition numbers of ``u2`` and ``sigma_hat``.

    ``identifiable`` is false when an eigenvalue of either falls below
    ``1e-10`` times the trace.
    """
    if isinstance(fit_or_u2, FitResult):
        u2, sigma = fit_or_u2.u2, fit_or_u2.sigma_hat
    else:
        u2 = fit_or_u2
    out = {"u2": _eig_report(u2)}
    if sigma is not None:
        out["sigma_hat"] = _eig_report(sigma)
    out["identifiable"] = not any(v["near_singular"] for v in out.values())
    return out


# ---------------------------------------------------------------------------
# fitting


def default_cell(model: ModelSpec) -> float:
    return model.D if model.D > 0 else 1.0


def _factor(H):
    try:
        return cho_factor(H, lower=True), 0.0
    except LinAlgError:
        pass
    tr = float(np.trace(H))
    lam = NEAR_SINGULAR * tr if tr > 0 else NEAR_SINGULAR
    try:
        return cho_factor(H + lam * np.eye(len(H)), lower=True), lam
    except LinAlgError:
        cond = np.linalg.cond(H) if np.all(np.isfinite(H)) else math.inf
        raise IllConditioned(f"Hessian is singular beyond regularisation (condition {cond:.3g})", cond) from None


def _newton(contrast: Contrast, theta0, opts: FitOptions):
    """Projected Newton with Armijo backtracking on ``U = -LPL / |L|``."""
    model = contrast.model
    A = contrast.area
    lb = model.lower_bounds
    bounded = np.isfinite(lb)

    def project(t):
        return np.where(bounded, np.maximum(t, np.where(bounded, lb, 0.0)), t)

    theta = project(np.asarray(theta0, dtype=float))
    lpl, g1, H1 = contrast.evaluate(theta)
    U, g, H = -lpl / A, -g1 / A, H1 / A
    trace = [U]
    converged = False
    it = 0
    pg = np.zeros_like(g)
    while True:
        at_bound = bounded & (theta <= lb) & (g > 0)
        free = ~at_bound
        pg = np.where(free, g, 0.0)
        d = np.zeros_like(theta)
        if np.any(free):
            Hf = H[np.ix_(free, free)]
            fac, _ = _factor(Hf)
            d[free] = -cho_solve(fac, g[free])
        gnorm = float(np.max(np.abs(pg))) if len(pg) else 0.0
        small_step = float(np.max(np.abs(d))) <= 1e-6 * (1.0 + float(np.max(np.abs(theta))))
        if gnorm < opts.tol and small_step:
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        t = 1.0
        accepted = False
        for _ in range(opts.max_halvings):
            cand = project(theta + t * d)
            try:
                lpl_c = contrast.lpl(cand)
            except ArithmeticError:
                lpl_c = -math.inf
            U_c = -lpl_c / A
            if math.isfinite(U_c) and U_c <= U + opts.armijo * float(g @ (cand - theta)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no further decrease representable: stationary to rounding
            converged = gnorm < opts.tol
            break
        theta = cand
        lpl, g1, H1 = contrast.evaluate(theta)
        U, g, H = -lpl / A, -g1 / A, H1 / A
        trace.append(U)
    active = bounded & (theta <= lb)
    return theta, converged, it, float(np.max(np.abs(pg))) if len(pg) else 0.0, active, tuple(trace), lpl, H


def fit_mple(
    model: ModelSpec,
    pattern: PointPattern,
    fit_window: Window | None = None,
    quad=None,
    cell: float | None = None,
    dvee: float | None = None,
    options: FitOptions | None = None,
    config: dict | None = None,
) -> FitResult:
    """Maximum pseudolikelihood estimate with its sandwich covariance.

    Defaults: ``dvee = D``, fit window = observation window eroded by
    ``dvee``, ``cell = D`` (1 for interaction-free models), a 256 x 256
    midpoint grid.
    """
    opts = options or FitOptions()
    dvee = model.D if dvee is None else float(dvee)
    if dvee < model.D * (1 - 1e-12):
        raise ConfigurationError(f"dvee = {dvee!r} is below the interaction range D = {model.D!r}")
    if fit_window is None:
        fit_window = erode_window(pattern.window, dvee)
    cell = default_cell(model) if cell is None else float(cell)
    if quad is None:
        quad = build_quadrature(fit_window, model.mark_space, DEFAULT_GRID, DEFAULT_MARK_NODES)
    contrast = Contrast(model, pattern, fit_window, quad, opts.threads)
    theta0 = np.zeros(model.p) if opts.theta0 is None else np.asarray(opts.theta0, dtype=float)
    if len(theta0) != model.p:
        raise InvalidInput(f"initial theta has {len(theta0)} components, model needs {model.p}")
    theta, converged, it, gnorm, active, trace, lpl_val, u2 = _newton(contrast, theta0, opts)
    cells = contrast.cell_gradients(theta, cell)
    sig = sigma_hat(cells, cell, dvee, contrast.area)
    diag = identifiability_diagnostic(u2, sig)
    try:
        vcov = sandwich_covariance(u2, sig, contrast.area)
    except IdentifiabilityError as exc:
        vcov = np.full((model.p, model.p), np.nan)
        diag["sandwich_error"] = str(exc)
    ci = confidence_intervals(theta, vcov, opts.level)
    echo = {
        "model": model.to_dict(),
        "grid": [quad.nx, quad.ny],
        "mark_nodes": len(quad.mark_nodes),
        "cell": cell,
        "dvee": dvee,
        "level": opts.level,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
    }
    echo.update(config or {})
    return FitResult(
        model=model,
        theta_hat=theta,
        u2=u2,
        sigma_hat=sig,
        vcov=vcov,
        ci=ci,
        level=opts.level,
        converged=converged,
        iterations=it,
        grad_norm=gnorm,
        active=active,
        fit_window=fit_window,
        cell=cell,
        dvee=dvee,
        area=contrast.area,
        n_points=contrast.n_data,
        lpl=lpl_val,
        trace=trace,
        identifiability=diag,
        config=echo,
    )


# ---------------------------------------------------------------------------
# residuals


def gnz_residual(model, theta, pattern, fit_window, quad, h="raw", threads=1):
    """``sum_{x in phi_L} g(x, phi - x) - int g(x, phi) exp(-V(x | phi)) dmu``.

    ``h`` selects ``g``: ``"raw"`` (g = 1), an index ``j`` (g = v_j), or
    ``"stats"`` for the vector over all ``j``.
    """
    th = require_theta(model, theta)
    c = Contrast(model, pattern, fit_window, quad, threads)
    return residual_from_contrast(c, th, h)


def residual_from_contrast(c: Contrast, theta, h="raw"):
    we = c._weights(np.asarray(theta, dtype=float))
    if h == "raw":
        return float(c.n_data - np.sum(we))
    grad = -(np.array([np.sum(we * c.node_stats[:, j]) for j in range(c.model.p)]) - c.data_sum)
    if h == "stats":
        return grad
    if isinstance(h, (int, np.integer)) and 0 <= h < c.model.p:
        return float(grad[h])
    raise InvalidInput(f"unknown test function {h!r}; use 'raw', 'stats' or a component index")
