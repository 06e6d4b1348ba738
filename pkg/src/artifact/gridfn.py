"""Functions on a finite integer grid and their difference calculus.

A grid function assigns a real value to each point of ``{0, ..., m - 1}``.
This module provides the forward difference operators, the hinge and
interval primitives that generate the convex cone, an exact second-order
expansion of any grid function into hinges, and canonical dyadic covers
of intervals.  These are the raw ingredients the sparse basis in
:mod:`artifact.cvxbasis` is built from.

Conventions
-----------
* ``delta(f)`` has length ``m - 1`` and ``delta2(f)`` has length ``m - 2``.
* ``relu(i, m)`` is the grid function ``y -> max(y - i, 0)``.
* ``interval_indicator(a, b, m)`` is 1 on ``{a, ..., b}`` and 0 elsewhere.
* A function is *admissible* when its second differences are nonnegative
  and its slopes lie in ``[-1, 1]``; see
  :func:`is_discrete_convex_lipschitz`.

Grid sizes are unrestricted here.  Operations that rely on dyadic
structure (:func:`dyadic_decompose` and the basis builders downstream)
require ``m`` to be a power of two and check it explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainTooSmallError,
    IndexOutOfRangeError,
    InvalidIntervalError,
    ShapeError,
)

__all__ = [
    "GridFunction",
    "DyadicInterval",
    "delta",
    "delta2",
    "is_discrete_convex_lipschitz",
    "relu",
    "interval_indicator",
    "taylor_expand",
    "reconstruct_from_taylor",
    "dyadic_decompose",
    "to_csv_row",
    "from_csv_row",
    "random_convex_lipschitz",
    "random_lipschitz",
]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real-valued function on ``{0, ..., m - 1}``.

    Parameters
    ----------
    m:
        Number of grid points, at least 1.
    values:
        Array of ``m`` finite floats; ``values[y]`` is the value at ``y``.

    The value array is copied and frozen so instances behave as values.
    """

    m: int
    values: np.ndarray

    def __post_init__(self):
        if self.m < 1:
            raise DomainTooSmallError(f"grid needs at least one point, got m={self.m}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.m,):
            raise ShapeError(f"expected {self.m} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ShapeError("grid function values must be finite")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __call__(self, y: int) -> float:
        if not 0 <= y < self.m:
            raise IndexOutOfRangeError(f"point {y} outside grid of size {self.m}")
        return float(self.values[y])

    def __repr__(self):  # keep reprs short for large grids
        head = np.array2string(self.values[:4], precision=4)
        tail = "" if self.m <= 4 else " ..."
        return f"GridFunction(m={self.m}, values={head}{tail})"


def delta(f: GridFunction) -> GridFunction:
    """First forward difference, ``delta(f)(y) = f(y + 1) - f(y)``.

    The result lives on a grid of ``m - 1`` points; ``m >= 2`` required.
    """
    if f.m < 2:
        raise DomainTooSmallError("first difference needs m >= 2")
    return GridFunction(f.m - 1, np.diff(f.values))


def delta2(f: GridFunction) -> GridFunction:
    """Second forward difference, ``f(y + 2) - 2 f(y + 1) + f(y)``.

    The result lives on a grid of ``m - 2`` points; ``m >= 3`` required.
    """
    if f.m < 3:
        raise DomainTooSmallError("second difference needs m >= 3")
    return GridFunction(f.m - 2, np.diff(f.values, n=2))


def is_discrete_convex_lipschitz(f: GridFunction, tol: float = 0.0) -> bool:
    """Check curvature and slope constraints up to an additive slack.

    Returns True when every second difference is ``>= -tol`` and every
    first difference has magnitude ``<= 1 + tol``.  Grids too small to
    have a constraint of one kind simply skip it, so the check is total:
    any single-point function passes.
    """
    if f.m >= 2:
        d1 = np.diff(f.values)
        if np.max(np.abs(d1)) > 1.0 + tol:
            return False
    if f.m >= 3:
        if np.min(np.diff(f.values, n=2)) < -tol:
            return False
    return True


def relu(i: int, m: int) -> GridFunction:
    """Hinge function ``y -> max(y - i, 0)`` on a grid of ``m`` points."""
    if not 0 <= i <= m - 1:
        raise IndexOutOfRangeError(f"hinge location {i} outside grid of size {m}")
    y = np.arange(m, dtype=np.float64)
    return GridFunction(m, np.maximum(y - i, 0.0))


def interval_indicator(a: int, b: int, m: int) -> GridFunction:
    """Indicator of ``{a, ..., b}`` on a grid of ``m`` points.

    Equals the difference of consecutive hinges shifted to ``a``:
    for ``a >= 1``, ``relu(a - 1, m) - relu(a, m)`` is the indicator of
    ``{a, ..., m - 1}``, and subtracting the analogous tail at ``b + 1``
    carves out the window.  That identity is what lets hinge
    approximations be assembled from interval approximations downstream.
    """
    if not (0 <= a <= b <= m - 1):
        raise InvalidIntervalError(f"bad interval [{a}, {b}] on grid of size {m}")
    vals = np.zeros(m, dtype=np.float64)
    vals[a : b + 1] = 1.0
    return GridFunction(m, vals)


def taylor_expand(f: GridFunction) -> tuple[float, float, np.ndarray]:
    """Exact second-order expansion of ``f`` into hinges.

    Returns ``(c0, c1, c2)`` with ``c0 = f(0)``, ``c1 = delta(f)(0)`` and
    ``c2[i] = delta2(f)(i)`` for ``i in {0, ..., m - 3}``, so that

    ``f(y) = c0 + c1 * y + sum_i c2[i] * relu(i + 1)(y)``

    holds exactly at every grid point.  Requires ``m >= 3``; smaller
    grids have no curvature term to expand.
    """
    if f.m < 3:
        raise DomainTooSmallError("expansion needs m >= 3")
    c0 = float(f.values[0])
    c1 = float(f.values[1] - f.values[0])
    c2 = np.diff(f.values, n=2)
    return c0, c1, c2


def reconstruct_from_taylor(c0: float, c1: float, c2: np.ndarray, m: int) -> GridFunction:
    """Rebuild the grid function encoded by :func:`taylor_expand`.

    ``c2`` must have length ``m - 2``.  Reconstruction runs two
    cumulative sums: the inner one recovers the slope sequence, the
    outer one recovers the values.
    """
    c2 = np.asarray(c2, dtype=np.float64)
    if m < 3:
        raise DomainTooSmallError("reconstruction needs m >= 3")
    if c2.shape != (m - 2,):
        raise ShapeError(f"curvature vector must have length {m - 2}, got {c2.shape}")
    slopes = np.empty(m - 1, dtype=np.float64)
    slopes[0] = c1
    slopes[1:] = c1 + np.cumsum(c2)
    vals = np.empty(m, dtype=np.float64)
    vals[0] = c0
    vals[1:] = c0 + np.cumsum(slopes)
    return GridFunction(m, vals)


@dataclass(frozen=True)
class DyadicInterval:
    """An aligned block ``{a * 2^h, ..., (a + 1) * 2^h - 1}`` inside a grid.

    ``level`` is the block height ``h`` and ``offset`` the block index
    ``a``; ``m`` is the grid size, a power of two.  Start and end points
    are exposed as ``lo`` and ``hi``.
    """

    level: int
    offset: int
    m: int

    def __post_init__(self):
        if self.m < 2 or self.m & (self.m - 1):
            raise ShapeError(f"dyadic structure needs m a power of two, got {self.m}")
        r = self.m.bit_length() - 1
        if not 0 <= self.level <= r:
            raise InvalidIntervalError(f"level {self.level} outside [0, {r}]")
        if not 0 <= self.offset < self.m >> self.level:
            raise InvalidIntervalError(
                f"offset {self.offset} outside [0, {(self.m >> self.level) - 1}] at level {self.level}"
            )

    @property
    def lo(self) -> int:
        return self.offset << self.level

    @property
    def hi(self) -> int:
        return ((self.offset + 1) << self.level) - 1

    @property
    def length(self) -> int:
        return 1 << self.level


def dyadic_decompose(a: int, b: int, m: int) -> list[DyadicInterval]:
    """Canonical cover of ``{a, ..., b}`` by disjoint aligned blocks.

    Greedy from the left: at position ``p`` take the largest block whose
    start is aligned to its size and whose end does not pass ``b``.
    The cover is unique under that rule and uses at most
    ``2 * log2(m)`` blocks.
    """
    if m < 2 or m & (m - 1):
        raise ShapeError(f"dyadic structure needs m a power of two, got {m}")
    if not (0 <= a <= b <= m - 1):
        raise InvalidIntervalError(f"bad interval [{a}, {b}] on grid of size {m}")
    out: list[DyadicInterval] = []
    p = a
    while p <= b:
        h = (p & -p).bit_length() - 1 if p else m.bit_length() - 1
        while p + (1 << h) - 1 > b:
            h -= 1
        out.append(DyadicInterval(h, p >> h, m))
        p += 1 << h
    return out


def to_csv_row(f: GridFunction) -> str:
    """Serialize as ``m,v0,...,v_{m-1}`` with full float precision."""
    parts = [str(f.m)] + [repr(float(v)) for v in f.values]
    return ",".join(parts)


def from_csv_row(row: str) -> GridFunction:
    """Parse the format written by :func:`to_csv_row`."""
    parts = row.strip().split(",")
    try:
        m = int(parts[0])
        vals = np.array([float(p) for p in parts[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ShapeError(f"unparseable grid function row: {exc}") from exc
    if len(vals) != m:
        raise ShapeError(f"row announces {m} values but carries {len(vals)}")
    return GridFunction(m, vals)


def random_convex_lipschitz(m: int, rng: np.random.Generator) -> GridFunction:
    """Sample an admissible function with nonnegative curvature.

    Draws a total curvature budget in ``[0, 2]``, splits it across the
    interior points with random proportions, and places the initial
    slope so every slope stays in ``[-1, 1]``.
    """
    if m < 3:
        raise DomainTooSmallError("sampler needs m >= 3")
    total = rng.uniform(0.0, 2.0)
    w = rng.uniform(0.0, 1.0, size=m - 2)
    s = w.sum()
    c2 = total * w / s if s > 0 else np.zeros(m - 2)
    c1 = rng.uniform(-1.0, 1.0 - total)
    c0 = rng.uniform(-1.0, 1.0)
    return reconstruct_from_taylor(c0, c1, c2, m)


def random_lipschitz(m: int, rng: np.random.Generator) -> GridFunction:
    """Sample a 1-Lipschitz function with sign-mixed slopes.

    Used as a control: curvature changes sign, so the function is not
    admissible, and approximation machinery tuned to the convex cone
    should do visibly worse on it.
    """
    if m < 2:
        raise DomainTooSmallError("sampler needs m >= 2")
    slopes = rng.uniform(-1.0, 1.0, size=m - 1)
    vals = np.concatenate([[rng.uniform(-1.0, 1.0)], np.cumsum(slopes)])
    vals[1:] += vals[0]
    return GridFunction(m, vals)
