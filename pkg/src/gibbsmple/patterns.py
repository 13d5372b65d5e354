"""Marked point configurations, mark spaces and CSV I/O."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, PatternParseError, WindowTooSmall
from .geometry import Window

UNIT, FINITE, INTERVAL = "unit", "finite", "interval"


@dataclass(frozen=True)
class MarkSpace:
    """Mark space with its probability measure.

    ``unit``: the single mark 0 (unmarked models). ``finite``: labels
    ``1..M`` with weight ``1/M`` each. ``interval``: ``[0, mmax]`` with the
    uniform density ``1/mmax``.
    """

    kind: str = UNIT
    M: int | None = None
    mmax: float | None = None

    def __post_init__(self):
        if self.kind == UNIT:
            if self.M is not None or self.mmax is not None:
                raise InvalidInput("unit mark space takes no parameters")
        elif self.kind == FINITE:
            if not isinstance(self.M, (int, np.integer)) or self.M < 1:
                raise InvalidInput(f"finite mark space needs an integer M >= 1, got {self.M!r}")
            object.__setattr__(self, "M", int(self.M))
        elif self.kind == INTERVAL:
            if self.mmax is None or not (math.isfinite(self.mmax) and self.mmax > 0):
                raise InvalidInput(f"interval mark space needs 0 < mmax < inf, got {self.mmax!r}")
            object.__setattr__(self, "mmax", float(self.mmax))
        else:
            raise InvalidInput(f"unknown mark space kind {self.kind!r}")

    @classmethod
    def unit(cls):
        return cls(UNIT)

    @classmethod
    def finite(cls, M: int):
        return cls(FINITE, M=M)

    @classmethod
    def interval(cls, mmax: float):
        return cls(INTERVAL, mmax=mmax)

    def is_valid(self, m) -> bool:
        try:
            m = float(m)
        except (TypeError, ValueError):
            return False
        if self.kind == UNIT:
            return m == 0.0
        if self.kind == FINITE:
            return m == int(m) and 1 <= m <= self.M
        return 0.0 <= m <= self.mmax

    def to_dict(self) -> dict:
        if self.kind == FINITE:
            return {"kind": FINITE, "M": self.M}
        if self.kind == INTERVAL:
            return {"kind": INTERVAL, "mmax": self.mmax}
        return {"kind": UNIT}

    def describe(self) -> str:
        if self.kind == FINITE:
            return f"finite(M={self.M})"
        if self.kind == INTERVAL:
            return f"interval(0, {self.mmax!r})"
        return "unit"


class MarkedPoint(NamedTuple):
    x: float
    y: float
    mark: float = 0.0


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float).reshape(-1)
    a.flags.writeable = False
    return a


class PointPattern:
    """Immutable finite marked configuration observed on ``window``.

    Coordinates and marks are held as read-only float arrays ``x, y, marks``
    (marks are 0.0 for the unit mark space).
    """

    __slots__ = ("x", "y", "marks", "window", "mark_space")

    def __init__(self, x, y, marks=None, window: Window | None = None, mark_space: MarkSpace | None = None):
        x = _readonly(x)
        y = _readonly(y)
        if len(x) != len(y):
            raise InvalidInput("x and y differ in length")
        mark_space = mark_space or MarkSpace.unit()
        if marks is None:
            if mark_space.kind == INTERVAL or (mark_space.kind == FINITE and mark_space.M != 1):
                raise InvalidInput(f"marks are required for mark space {mark_space.describe()}")
            marks = np.full(len(x), 1.0 if mark_space.kind == FINITE else 0.0)
        marks = _readonly(marks)
        if len(marks) != len(x):
            raise InvalidInput("marks differ in length from coordinates")
        if window is None:
            raise InvalidInput("an observation window is required")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("non-finite coordinates")
        inside = window.contains(x, y, closed=True)
        if not np.all(inside):
            i = int(np.flatnonzero(~inside)[0])
            raise InvalidInput(f"point {i} ({x[i]!r}, {y[i]!r}) lies outside window {window.as_tuple()}")
        for i, m in enumerate(marks):
            if not mark_space.is_valid(m):
                raise InvalidInput(f"point {i} has mark {m!r} outside {mark_space.describe()}")
        if len(x) > 1:
            order = np.lexsort((y, x))
            same = (np.diff(x[order]) == 0) & (np.diff(y[order]) == 0)
            if np.any(same):
                i = int(order[np.flatnonzero(same)[0]])
                raise InvalidInput(f"duplicate location ({x[i]!r}, {y[i]!r})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "mark_space", mark_space)

    def __setattr__(self, name, value):
        raise AttributeError("PointPattern is immutable")

    @classmethod
    def from_points(cls, points, window: Window, mark_space: MarkSpace | None = None):
        pts = [MarkedPoint(*p) for p in points]
        if not pts:
            return cls([], [], [], window, mark_space)
        xs, ys, ms = zip(*pts)
        return cls(xs, ys, ms, window, mark_space)

    def __len__(self):
        return len(self.x)

    def __iter__(self):
        for i in range(len(self.x)):
            yield MarkedPoint(float(self.x[i]), float(self.y[i]), float(self.marks[i]))

    def __getitem__(self, i) -> MarkedPoint:
        return MarkedPoint(float(self.x[i]), float(self.y[i]), float(self.marks[i]))

    @property
    def points(self) -> tuple:
        return tuple(self)

    def __eq__(self, other):
        if not isinstance(other, PointPattern):
            return NotImplemented
        return (
            self.window == other.window
            and self.mark_space == other.mark_space
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.marks, other.marks)
        )

    __hash__ = None

    def __repr__(self):
        return f"PointPattern(n={len(self)}, window={self.window.as_tuple()}, marks={self.mark_space.describe()})"

    def subset(self, mask) -> "PointPattern":
        mask = np.asarray(mask)
        return PointPattern(self.x[mask], self.y[mask], self.marks[mask], self.window, self.mark_space)

    def with_window(self, window: Window) -> "PointPattern":
        return PointPattern(self.x, self.y, self.marks, window, self.mark_space)

    def shifted(self, dx: float, dy: float) -> "PointPattern":
        return PointPattern(self.x + dx, self.y + dy, self.marks, self.window.shifted(dx, dy), self.mark_space)


def restrict(pattern: PointPattern, region: Window) -> PointPattern:
    """Points lying in ``region`` (half-open membership).

    The result is observed on ``region`` intersected with the original window
    (or on ``region`` when they do not overlap, in which case it is empty).
    """
    mask = region.contains(pattern.x, pattern.y)
    w = pattern.window
    lo_x, hi_x = max(w.xmin, region.xmin), min(w.xmax, region.xmax)
    lo_y, hi_y = max(w.ymin, region.ymin), min(w.ymax, region.ymax)
    window = Window(lo_x, hi_x, lo_y, hi_y) if (hi_x > lo_x and hi_y > lo_y) else region
    return PointPattern(pattern.x[mask], pattern.y[mask], pattern.marks[mask], window, pattern.mark_space)


def erode_window(window: Window, D: float) -> Window:
    """Shrink ``window`` by ``D`` on every side."""
    if not (math.isfinite(D) and D >= 0):
        raise InvalidInput(f"erosion distance must be finite and >= 0, got {D!r}")
    if D == 0:
        return window
    xmin, xmax = window.xmin + D, window.xmax - D
    ymin, ymax = window.ymin + D, window.ymax - D
    if not (xmax > xmin and ymax > ymin):
        raise WindowTooSmall(f"window {window.as_tuple()} eroded by {D!r} is empty")
    return Window(xmin, xmax, ymin, ymax)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_pattern(pattern: PointPattern, dest=None) -> str:
    """Write ``pattern`` as CSV to ``dest`` (path, text or binary stream).

    Returns the CSV text. Coordinates use 17 significant digits, which
    round-trips every double exactly.
    """
    lines = []
    kind = pattern.mark_space.kind
    if kind == UNIT:
        lines.append("x,y")
        for p in pattern:
            lines.append(f"{_fmt(p.x)},{_fmt(p.y)}")
    else:
        lines.append("x,y,mark")
        for p in pattern:
            m = str(int(p.mark)) if kind == FINITE else _fmt(p.mark)
            lines.append(f"{_fmt(p.x)},{_fmt(p.y)},{m}")
    text = "\n".join(lines) + "\n"
    if dest is None:
        return text
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    elif isinstance(dest, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(dest, "mode", ""):
        dest.write(text.encode("utf-8"))
    else:
        dest.write(text)
    return text


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, str):
        return data.lstrip("\ufeff")
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise PatternParseError(f"not valid UTF-8: {exc}") from None


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise PatternParseError(f"cannot parse {what} {text!r}", line) from None
    if not math.isfinite(v):
        raise PatternParseError(f"{what} must be finite, got {text!r}", line)
    return v


def read_pattern(source, mark_space: MarkSpace, window: Window) -> PointPattern:
    """Parse a pattern CSV with header ``x,y,mark`` or ``x,y``.

    ``source`` may be a path, raw bytes, or a binary or text stream. LF and
    CRLF line endings are accepted; blank lines are skipped. A unit mark
    space ignores any mark column; a finite space with ``M = 1`` accepts a
    file without one.
    """
    text = _read_text(source)
    rows = list(csv.reader(io.StringIO(text, newline="")))
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not numbered:
        raise PatternParseError("missing header line", 1)
    hline, header = numbered[0]
    header = [h.strip().lower() for h in header]
    if header == ["x", "y", "mark"]:
        has_mark = True
    elif header == ["x", "y"]:
        has_mark = False
        if mark_space.kind == INTERVAL or (mark_space.kind == FINITE and mark_space.M != 1):
            raise PatternParseError(f"header lacks a mark column required by {mark_space.describe()}", hline)
    else:
        raise PatternParseError(f"expected header 'x,y,mark' or 'x,y', got {','.join(header)!r}", hline)
    ncol = 3 if has_mark else 2
    xs, ys, ms = [], [], []
    seen = {}
    for line, row in numbered[1:]:
        if len(row) != ncol:
            raise PatternParseError(f"expected {ncol} fields, got {len(row)}", line)
        x = _parse_float(row[0].strip(), "x", line)
        y = _parse_float(row[1].strip(), "y", line)
        if mark_space.kind == UNIT:
            m = 0.0
        elif not has_mark:
            m = 1.0
        else:
            m = _parse_float(row[2].strip(), "mark", line)
            if not mark_space.is_valid(m):
                raise PatternParseError(f"mark {row[2].strip()!r} outside {mark_space.describe()}", line)
        if not window.contains(x, y, closed=True):
            raise PatternParseError(f"point ({x!r}, {y!r}) outside window {window.as_tuple()}", line)
        if (x, y) in seen:
            raise PatternParseError(f"duplicate location ({x!r}, {y!r}), first seen at line {seen[(x, y)]}", line)
        seen[(x, y)] = line
        xs.append(x)
        ys.append(y)
        ms.append(m)
    return PointPattern(xs, ys, ms, window, mark_space)
