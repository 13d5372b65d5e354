"""Exponential-family energy models and their sufficient statistics.

A model is a :class:`ModelSpec`; the energy is ``theta . v(phi)`` and the
local energy of ``x^m`` is ``theta . v(x^m | phi)`` with
``v(x^m | phi) = v(phi + x^m) - v(phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import ConfigurationError, InvalidInput, InvalidParameter, ModelDataMismatch
from .geometry import disc_overlap_area
from .patterns import MarkSpace, PointPattern

OVERLAP_AREA = "overlap_area"
MULTI_STRAUSS = "multi_strauss"
KNN_MULTI_STRAUSS = "knn_multi_strauss"
STRAUSS_DISC = "strauss_disc"
GEYER_TRIPLET = "geyer_triplet"
AREA_INTERACTION = "area_interaction"

FAMILIES = (OVERLAP_AREA, MULTI_STRAUSS, KNN_MULTI_STRAUSS, STRAUSS_DISC, GEYER_TRIPLET, AREA_INTERACTION)

_FAMILY_CODE = {
    OVERLAP_AREA: kernels.OVERLAP,
    MULTI_STRAUSS: kernels.MULTI_STRAUSS,
    KNN_MULTI_STRAUSS: kernels.KNN,
    STRAUSS_DISC: kernels.STRAUSS_DISC,
    GEYER_TRIPLET: kernels.GEYER,
    AREA_INTERACTION: kernels.AREA,
}

AREA_TOL = 1e-10


class Bound(NamedTuple):
    """Per-component constants: ``-kappa_inf <= v_i <= kappa_sup * n^k``."""

    kappa_inf: float
    kappa_sup: float
    k: int


def _pairs(M):
    return [(a, b) for a in range(1, M + 1) for b in range(a, M + 1)]


def _parse_ranges(ranges, M):
    """Normalise range grids to ``{(m1, m2): tuple}`` with ``m1 <= m2``."""
    if M is None:
        raise ConfigurationError("multi-type models need the number of marks")
    pairs = _pairs(M)
    if isinstance(ranges, dict):
        out = {}
        for key, val in ranges.items():
            if isinstance(key, str):
                try:
                    a, b = (int(t) for t in key.replace(" ", "").split(","))
                except ValueError:
                    raise ConfigurationError(f"range key {key!r} is not 'm1,m2'") from None
            else:
                a, b = (int(t) for t in key)
            a, b = min(a, b), max(a, b)
            if (a, b) not in pairs:
                raise ConfigurationError(f"range key {key!r} outside marks 1..{M}")
            if (a, b) in out:
                raise ConfigurationError(f"range for pair ({a},{b}) given twice")
            out[(a, b)] = val
    else:
        seq = list(ranges)
        if M == 1 and seq and not isinstance(seq[0], (list, tuple, np.ndarray)):
            seq = [seq]
        if len(seq) != len(pairs):
            raise ConfigurationError(f"expected {len(pairs)} range grids (pairs m1<=m2), got {len(seq)}")
        out = dict(zip(pairs, seq))
    missing = [p for p in pairs if p not in out]
    if missing:
        raise ConfigurationError(f"missing range grids for pairs {missing}")
    clean = {}
    for p, val in out.items():
        try:
            grid = tuple(float(v) for v in val)
        except (TypeError, ValueError):
            raise ConfigurationError(f"range grid for pair {p} must be a list of numbers") from None
        if not grid:
            raise ConfigurationError(f"range grid for pair {p} is empty")
        if not all(math.isfinite(v) for v in grid) or grid[0] < 0:
            raise ConfigurationError(f"range grid for pair {p} must be finite and start at >= 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError(f"range grid for pair {p} must be strictly increasing")
        clean[p] = grid
    return tuple(sorted(clean.items()))


def _positive(name, v):
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {v!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise ConfigurationError(f"{name} must be finite and positive, got {v!r}")
    return v


@dataclass(frozen=True)
class ModelSpec:
    """One of the six energy families with its fixed hyperparameters.

    Use the family constructors (``ModelSpec.overlap_area(R)`` and so on) or
    :meth:`from_dict`. For the multi-type families ``ranges`` maps each
    pair ``m1 <= m2`` to its grid ``D_1 < ... < D_p``; band ``i`` counts
    pairs at distance in ``[D_{i-1}, D_i)``. With ``hard_core`` set, a
    pair whose grid starts at ``D_1 > 0`` forbids distances below ``D_1``.
    """

    family: str
    R: float | None = None
    M: int | None = None
    ranges: tuple = field(default=())
    hard_core: bool = False
    k: int | None = None
    mmax: float | None = None

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ConfigurationError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
        if fam in (OVERLAP_AREA, GEYER_TRIPLET, AREA_INTERACTION):
            object.__setattr__(self, "R", _positive("R", self.R))
        if fam == STRAUSS_DISC:
            object.__setattr__(self, "mmax", _positive("mmax", self.mmax))
        if fam in (MULTI_STRAUSS, KNN_MULTI_STRAUSS):
            if not isinstance(self.M, (int, np.integer)) or self.M < 1:
                raise ConfigurationError(f"number of marks must be a positive integer, got {self.M!r}")
            object.__setattr__(self, "M", int(self.M))
            rng = self.ranges
            if isinstance(rng, tuple) and rng and isinstance(rng[0], tuple) and len(rng[0]) == 2 and isinstance(rng[0][0], tuple):
                rng = dict(rng)
            object.__setattr__(self, "ranges", _parse_ranges(rng, self.M))
        if fam == KNN_MULTI_STRAUSS:
            if not isinstance(self.k, (int, np.integer)) or self.k < 1:
                raise ConfigurationError(f"k must be a positive integer, got {self.k!r}")
            object.__setattr__(self, "k", int(self.k))
            if self.hard_core:
                raise ConfigurationError("the k-nearest-neighbour family has no hard core")
            if self.dmax <= 0:
                raise ConfigurationError("k-nearest-neighbour ranges must have a positive largest range")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def overlap_area(cls, R):
        return cls(OVERLAP_AREA, R=R)

    @classmethod
    def multi_strauss(cls, ranges, M=1, hard_core=False):
        return cls(MULTI_STRAUSS, M=M, ranges=_parse_ranges(ranges, M), hard_core=bool(hard_core))

    @classmethod
    def strauss(cls, R, hard_core=None):
        """Single-type Strauss model; optional hard core ``hard_core < R``."""
        if hard_core:
            return cls.multi_strauss([hard_core, R], M=1, hard_core=True)
        return cls.multi_strauss([0.0, R], M=1)

    @classmethod
    def poisson(cls, M=1):
        """Multi-type model without interactions: ``v`` holds the per-mark counts."""
        return cls.multi_strauss({p: [0.0] for p in _pairs(M)}, M=M)

    @classmethod
    def knn_multi_strauss(cls, ranges, k, M=1):
        return cls(KNN_MULTI_STRAUSS, M=M, ranges=_parse_ranges(ranges, M), k=k)

    @classmethod
    def strauss_disc(cls, mmax):
        return cls(STRAUSS_DISC, mmax=mmax)

    @classmethod
    def geyer_triplet(cls, R):
        return cls(GEYER_TRIPLET, R=R)

    @classmethod
    def area_interaction(cls, R):
        return cls(AREA_INTERACTION, R=R)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ModelSpec":
        cfg = dict(cfg)
        fam = cfg.pop("family", None)
        cfg.pop("theta", None)
        if fam is None:
            raise ConfigurationError("model config lacks 'family'")
        allowed = {
            OVERLAP_AREA: {"R"},
            GEYER_TRIPLET: {"R"},
            AREA_INTERACTION: {"R"},
            STRAUSS_DISC: {"mmax"},
            MULTI_STRAUSS: {"marks", "ranges", "hard_core"},
            KNN_MULTI_STRAUSS: {"marks", "ranges", "k"},
        }.get(fam)
        if allowed is None:
            raise ConfigurationError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
        extra = set(cfg) - allowed
        if extra:
            raise ConfigurationError(f"unknown keys for {fam}: {sorted(extra)}")
        if fam in (MULTI_STRAUSS, KNN_MULTI_STRAUSS):
            if "ranges" not in cfg:
                raise ConfigurationError(f"{fam} needs 'ranges'")
            M = cfg.get("marks", 1)
            if fam == MULTI_STRAUSS:
                return cls.multi_strauss(cfg["ranges"], M=M, hard_core=cfg.get("hard_core", False))
            if "k" not in cfg:
                raise ConfigurationError("knn_multi_strauss needs 'k'")
            return cls.knn_multi_strauss(cfg["ranges"], k=cfg["k"], M=M)
        if fam == STRAUSS_DISC:
            return cls.strauss_disc(cfg.get("mmax"))
        return cls(fam, R=cfg.get("R"))

    def to_dict(self) -> dict:
        if self.family in (MULTI_STRAUSS, KNN_MULTI_STRAUSS):
            out = {
                "family": self.family,
                "marks": self.M,
                "ranges": {f"{a},{b}": list(g) for (a, b), g in self.ranges},
            }
            if self.family == MULTI_STRAUSS:
                out["hard_core"] = self.hard_core
            else:
                out["k"] = self.k
            return out
        if self.family == STRAUSS_DISC:
            return {"family": self.family, "mmax": self.mmax}
        return {"family": self.family, "R": self.R}

    # -- derived quantities ---------------------------------------------------

    @property
    def multitype(self) -> bool:
        return self.family in (MULTI_STRAUSS, KNN_MULTI_STRAUSS)

    @cached_property
    def range_map(self) -> dict:
        return dict(self.ranges)

    @cached_property
    def dmax(self) -> float:
        """Largest range ``max D_p`` over mark pairs (multi-type families)."""
        return max(g[-1] for _, g in self.ranges) if self.ranges else 0.0

    def hard_distance(self, m1: int, m2: int) -> float:
        if self.family != MULTI_STRAUSS or not self.hard_core:
            return 0.0
        return self.range_map[(min(m1, m2), max(m1, m2))][0]

    @cached_property
    def layout(self) -> tuple:
        """Component descriptors in canonical order.

        Multi-type: for each mark ``m``, its count followed by the bands of
        pairs ``(m, m), (m, m+1), ..., (m, M)``.
        """
        fam = self.family
        if fam == GEYER_TRIPLET:
            return (("count",), ("pairs",), ("triangles",))
        if not self.multitype:
            second = {OVERLAP_AREA: "overlap", STRAUSS_DISC: "pairs", AREA_INTERACTION: "area"}[fam]
            return (("count",), (second,))
        out = []
        for m1 in range(1, self.M + 1):
            out.append(("count", m1))
            for m2 in range(m1, self.M + 1):
                grid = self.range_map[(m1, m2)]
                for i in range(2, len(grid) + 1):
                    out.append(("band", m1, m2, i))
        return tuple(out)

    @property
    def p(self) -> int:
        return len(self.layout)

    @cached_property
    def names(self) -> tuple:
        out = []
        for j, d in enumerate(self.layout):
            if d[0] == "count" and len(d) == 2:
                out.append(f"theta1[{d[1]},{d[1]}]")
            elif d[0] == "band":
                out.append(f"theta{d[3]}[{d[1]},{d[2]}]")
            else:
                out.append(f"theta{j + 1}")
        return tuple(out)

    @cached_property
    def D(self) -> float:
        """Interaction range: local statistics only see points within ``D``."""
        fam = self.family
        if fam in (OVERLAP_AREA, GEYER_TRIPLET):
            return self.R
        if fam == AREA_INTERACTION:
            return 2.0 * self.R
        if fam == STRAUSS_DISC:
            return 2.0 * self.mmax
        if fam == KNN_MULTI_STRAUSS:
            return 2.0 * self.dmax
        return self.dmax

    @cached_property
    def mark_space(self) -> MarkSpace:
        if self.multitype:
            return MarkSpace.finite(self.M)
        if self.family == STRAUSS_DISC:
            return MarkSpace.interval(self.mmax)
        return MarkSpace.unit()

    @cached_property
    def lower_bounds(self) -> np.ndarray:
        """Lower end of each component's admissible range (-inf if free)."""
        lb = np.full(self.p, -np.inf)
        fam = self.family
        if fam in (OVERLAP_AREA, STRAUSS_DISC):
            lb[1] = 0.0
        elif fam == GEYER_TRIPLET:
            lb[2] = 0.0
        elif fam == MULTI_STRAUSS:
            for j, d in enumerate(self.layout):
                if d[0] == "band" and self.hard_distance(d[1], d[2]) <= 0:
                    lb[j] = 0.0
        return lb

    @cached_property
    def strict_lower(self) -> np.ndarray:
        """Components whose lower bound is excluded (Geyer's third)."""
        s = np.zeros(self.p, dtype=bool)
        if self.family == GEYER_TRIPLET:
            s[2] = True
        return s

    def _packing(self, m, other):
        """Max number of mark-``other`` points within ``D`` of a mark-``m`` point."""
        d_oo = self.hard_distance(other, other)
        if d_oo <= 0:
            return math.inf
        n = math.floor((2.0 * self.D / d_oo + 1.0) ** 2)
        if self.hard_distance(m, other) >= d_oo:
            n -= 1
        return n

    @cached_property
    def bounds(self) -> tuple:
        """:class:`Bound` per component, as used by the integrability check."""
        fam = self.family
        one = Bound(0.0, 1.0, 0)
        if fam == OVERLAP_AREA:
            return (one, Bound(0.0, math.pi * self.R**2 / 4.0, 1))
        if fam == STRAUSS_DISC:
            return (one, Bound(0.0, 1.0, 1))
        if fam == GEYER_TRIPLET:
            return (one, Bound(0.0, 1.0, 1), Bound(0.0, 1.0, 2))
        if fam == AREA_INTERACTION:
            return (one, Bound(0.0, math.pi * self.D**2, 0))
        out = []
        for d in self.layout:
            if d[0] == "count":
                out.append(one)
            elif fam == KNN_MULTI_STRAUSS:
                out.append(Bound(13.0 * self.k, 13.0 * self.k, 0))
            else:
                kap = max(self._packing(d[1], d[2]), self._packing(d[2], d[1]))
                out.append(Bound(0.0, float(kap), 0) if math.isfinite(kap) else Bound(0.0, 1.0, 1))
        return tuple(out)

    @cached_property
    def kernel_spec(self) -> kernels.KernelSpec:
        fam = self.family
        if not self.multitype:
            search = self.D
            return kernels.KernelSpec(
                family=_FAMILY_CODE[fam],
                p=self.p,
                R=float(self.R or 0.0),
                k=0,
                mmax=float(self.mmax or 0.0),
                nmarks=1,
                search=search,
                dmax=0.0,
                count_col=np.zeros(1, dtype=np.intc),
                edges=np.zeros((1, 1, 2)),
                nbands=np.zeros((1, 1), dtype=np.intc),
                band_col=np.zeros((1, 1, 1), dtype=np.intc),
                hard=np.zeros((1, 1)),
                area_tol=AREA_TOL,
            )
        M = self.M
        maxb = max(1, max(len(g) - 1 for _, g in self.ranges))
        count_col = np.zeros(M, dtype=np.intc)
        edges = np.zeros((M, M, maxb + 1))
        nbands = np.zeros((M, M), dtype=np.intc)
        band_col = np.full((M, M, maxb), -1, dtype=np.intc)
        hard = np.zeros((M, M))
        for j, d in enumerate(self.layout):
            if d[0] == "count":
                count_col[d[1] - 1] = j
            else:
                a, b, i = d[1] - 1, d[2] - 1, d[3]
                band_col[a, b, i - 2] = band_col[b, a, i - 2] = j
        for (m1, m2), g in self.ranges:
            a, b = m1 - 1, m2 - 1
            for e in (edges[a, b], edges[b, a]):
                e[: len(g)] = g
            nbands[a, b] = nbands[b, a] = len(g) - 1
            hard[a, b] = hard[b, a] = self.hard_distance(m1, m2)
        return kernels.KernelSpec(
            family=_FAMILY_CODE[fam],
            p=self.p,
            R=0.0,
            k=int(self.k or 0),
            mmax=0.0,
            nmarks=M,
            search=self.D,
            dmax=self.dmax,
            count_col=count_col,
            edges=edges,
            nbands=nbands,
            band_col=band_col,
            hard=hard,
            area_tol=AREA_TOL,
        )

    def describe(self) -> str:
        cfg = self.to_dict()
        fam = cfg.pop("family")
        return f"{fam}({', '.join(f'{k}={v!r}' for k, v in cfg.items())})"


# ---------------------------------------------------------------------------
# configurations


def _as_arrays(model: ModelSpec, phi):
    """``(x, y, m)`` float arrays for a pattern or an iterable of points."""
    if isinstance(phi, PointPattern):
        if phi.mark_space != model.mark_space:
            raise ModelDataMismatch(
                f"pattern marks are {phi.mark_space.describe()} but {model.family} needs "
                f"{model.mark_space.describe()}"
            )
        return np.asarray(phi.x), np.asarray(phi.y), np.asarray(phi.marks)
    pts = [tuple(p) for p in phi]
    if not pts:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    default = 1.0 if model.multitype else 0.0
    xs = np.array([float(p[0]) for p in pts])
    ys = np.array([float(p[1]) for p in pts])
    ms = np.array([float(p[2]) if len(p) > 2 else default for p in pts])
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidInput("non-finite coordinates")
    for m in ms:
        if not model.mark_space.is_valid(m):
            raise ModelDataMismatch(f"mark {m!r} outside {model.mark_space.describe()}")
    return xs, ys, ms


def _point(model: ModelSpec, xm):
    x, y = float(xm[0]), float(xm[1])
    m = float(xm[2]) if len(xm) > 2 else (1.0 if model.multitype else 0.0)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInput(f"non-finite coordinates {tuple(xm)!r}")
    if not model.mark_space.is_valid(m):
        raise ModelDataMismatch(f"mark {m!r} outside {model.mark_space.describe()}")
    return x, y, m


def _band(model: ModelSpec, m1: int, m2: int, d: float) -> int:
    g = model.range_map[(min(m1, m2), max(m1, m2))]
    if d < g[0]:
        return -1
    for i in range(1, len(g)):
        if d < g[i]:
            return model.layout.index(("band", min(m1, m2), max(m1, m2), i + 1))
    return -1


def global_statistics(model: ModelSpec, phi) -> np.ndarray:
    """Sufficient statistics ``v(phi)``, evaluated directly from their definitions."""
    x, y, m = _as_arrays(model, phi)
    n = len(x)
    v = np.zeros(model.p)
    if n == 0:
        return v
    fam = model.family
    pts = np.column_stack([x, y])
    if fam == AREA_INTERACTION:
        # union area built up one disc at a time
        v[0] = n
        for i in range(n):
            v[1] += kernels.added_disc_area(x[i], y[i], model.R, x[:i].copy(), y[:i].copy(), AREA_TOL)
        return v
    if fam == KNN_MULTI_STRAUSS:
        from .geometry import knn_lists

        for i in range(n):
            v[model.layout.index(("count", int(m[i])))] += 1
        for a, nbrs in enumerate(knn_lists(pts, model.k)):
            for b in nbrs:
                d = math.hypot(x[a] - x[b], y[a] - y[b])
                col = _band(model, int(m[a]), int(m[b]), d)
                if col >= 0:
                    v[col] += 1
        return v
    tree = cKDTree(pts)
    pairs = sorted(tuple(p) for p in tree.query_pairs(model.D * (1 + 1e-9))) if model.D > 0 else []
    if fam == MULTI_STRAUSS:
        for i in range(n):
            v[model.layout.index(("count", int(m[i])))] += 1
        for a, b in pairs:
            col = _band(model, int(m[a]), int(m[b]), math.hypot(x[a] - x[b], y[a] - y[b]))
            if col >= 0:
                v[col] += 1
        return v
    v[0] = n
    if fam == OVERLAP_AREA:
        for a, b in pairs:
            v[1] += disc_overlap_area(math.hypot(x[a] - x[b], y[a] - y[b]), model.R)
    elif fam == STRAUSS_DISC:
        for a, b in pairs:
            if math.hypot(x[a] - x[b], y[a] - y[b]) <= m[a] + m[b]:
                v[1] += 1
    elif fam == GEYER_TRIPLET:
        R = model.R
        close = [set() for _ in range(n)]
        for a, b in pairs:
            if math.hypot(x[a] - x[b], y[a] - y[b]) <= R:
                close[a].add(b)
                close[b].add(a)
                v[1] += 1
        for a in range(n):
            for b in close[a]:
                if b > a:
                    v[2] += sum(1 for c in close[a] & close[b] if c > b)
    return v


def hard_core_violations(model: ModelSpec, phi) -> list:
    """Pairs ``(i, j)`` of ``phi`` closer than their hard-core distance."""
    if model.family != MULTI_STRAUSS or not model.hard_core:
        return []
    x, y, m = _as_arrays(model, phi)
    if len(x) < 2:
        return []
    tree = cKDTree(np.column_stack([x, y]))
    out = []
    for a, b in sorted(tuple(p) for p in tree.query_pairs(model.D * (1 + 1e-9))):
        if math.hypot(x[a] - x[b], y[a] - y[b]) < model.hard_distance(int(m[a]), int(m[b])):
            out.append((a, b))
    return out


def _local(model: ModelSpec, xm, phi):
    qx, qy, qm = _point(model, xm)
    x, y, m = _as_arrays(model, phi)
    if np.any((x == qx) & (y == qy)):
        raise InvalidInput(f"point ({qx!r}, {qy!r}) already belongs to the configuration")
    s, hard = kernels.local_stats(
        model.kernel_spec, qx, qy, qm, np.ascontiguousarray(x), np.ascontiguousarray(y), np.ascontiguousarray(m)
    )
    return np.asarray(s, dtype=float), bool(hard)


def local_statistics(model: ModelSpec, xm, phi) -> np.ndarray:
    """``v(x^m | phi) = v(phi + x^m) - v(phi)`` from the neighbours of ``x``."""
    return _local(model, xm, phi)[0]


def check_theta(model: ModelSpec, theta) -> list:
    """Violated parameter constraints, as messages naming each component."""
    th = np.asarray(theta, dtype=float).reshape(-1)
    if len(th) != model.p:
        raise InvalidParameter(f"theta has {len(th)} components, {model.family} needs {model.p}")
    th = [float(t) for t in th]
    out = []
    for j in range(model.p):
        name = model.names[j]
        if not math.isfinite(th[j]):
            out.append(f"{name} = {th[j]!r} is not finite")
        elif model.strict_lower[j] and th[j] <= model.lower_bounds[j]:
            out.append(f"{name} = {th[j]!r} must be > {model.lower_bounds[j]:g}")
        elif th[j] < model.lower_bounds[j]:
            out.append(f"{name} = {th[j]!r} must be >= {model.lower_bounds[j]:g}")
    return out


class ThetaCheck(NamedTuple):
    ok: bool
    violations: tuple


def validate_theta(model: ModelSpec, theta) -> ThetaCheck:
    bad = check_theta(model, theta)
    return ThetaCheck(not bad, tuple(bad))


def require_theta(model: ModelSpec, theta) -> np.ndarray:
    """``theta`` as a float array, or :class:`InvalidParameter` naming the violation."""
    bad = check_theta(model, theta)
    if bad:
        raise InvalidParameter("; ".join(bad))
    return np.asarray(theta, dtype=float).reshape(-1).copy()


def local_energy(model: ModelSpec, theta, xm, phi) -> float:
    """``theta . v(x^m | phi)``; ``inf`` when ``x^m`` breaks a hard core."""
    th = require_theta(model, theta)
    s, hard = _local(model, xm, phi)
    if hard:
        return math.inf
    return float(sum(float(a) * float(b) for a, b in zip(th, s)))


def _geyer_min_triangles(n: int) -> int:
    # B(0, R) is covered by 7 sets of diameter <= R: the disc of radius R/2
    # and six 60 degree sectors of the annulus R/2..R. Points sharing a set
    # are pairwise within R, so triangles with 0 number at least the pairs
    # inside sets, minimised by spreading the n points evenly.
    q, r = divmod(n, 7)
    return r * (q + 1) * q // 2 + (7 - r) * q * (q - 1) // 2


def _component_ranges(model: ModelSpec, mark: int):
    """``(col, lo, hi)`` bounds of ``v_col(0^mark | phi)`` over all ``phi``."""
    fam = model.family
    out = []
    if not model.multitype:
        out.append((0, 1.0, 1.0))
        if fam == AREA_INTERACTION:
            out.append((1, 0.0, math.pi * model.D**2))
        else:
            out.append((1, 0.0, math.inf))
        return out
    for j, d in enumerate(model.layout):
        if d[0] == "count":
            if d[1] == mark:
                out.append((j, 1.0, 1.0))
        elif fam == KNN_MULTI_STRAUSS:
            out.append((j, -13.0 * model.k, 13.0 * model.k))
        elif mark in (d[1], d[2]):
            other = d[2] if d[1] == mark else d[1]
            out.append((j, 0.0, float(model._packing(mark, other))))
    return out


def stability_bound(model: ModelSpec, theta) -> float:
    """``K >= 0`` with ``V(0^m | phi; theta) >= -K`` for every mark and configuration."""
    th = require_theta(model, theta)
    if model.family == GEYER_TRIPLET:
        t1, t2, t3 = (float(v) for v in th)
        nmax = 14 * (math.ceil(abs(t2) / t3) + 2) if t2 < 0 else 0
        return max(max(0.0, -t1 - t2 * n - t3 * _geyer_min_triangles(n)) for n in range(nmax + 1))
    marks = range(1, model.M + 1) if model.multitype else [0]
    K = 0.0
    for mk in marks:
        total = 0.0
        for j, lo, hi in _component_ranges(model, mk):
            t = float(th[j])
            if t == 0.0:
                continue
            if t < 0 and not math.isfinite(hi):
                raise InvalidParameter(
                    f"{model.names[j]} = {t!r} < 0 leaves the local energy unbounded below "
                    "(needs a hard core on both marks of the pair)"
                )
            total += max(-t * lo, -t * hi, 0.0)
        K = max(K, total)
    return K


# ---------------------------------------------------------------------------
# batch evaluation


def node_statistics(model: ModelSpec, phi, qx, qy, qm, exclude=None, threads=1):
    """Local statistics at many query points against ``phi``.

    Returns ``(stats, hard)`` with ``stats`` of shape ``(nq, p)``.
    ``exclude[i]`` names the index of ``phi`` to leave out for query ``i``.
    """
    x, y, m = _as_arrays(model, phi)
    return kernels.node_statistics(model.kernel_spec, x, y, m, qx, qy, qm, exclude, threads)


def data_statistics(model: ModelSpec, phi, index=None, threads=1):
    """``v(x_i | phi - x_i)`` for the points ``index`` of ``phi`` (all by default)."""
    x, y, m = _as_arrays(model, phi)
    idx = np.arange(len(x)) if index is None else np.asarray(index, dtype=np.int_)
    return kernels.node_statistics(model.kernel_spec, x, y, m, x[idx], y[idx], m[idx], idx, threads)
