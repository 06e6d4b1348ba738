"""Finite synthetic data distributions with exact expectations.

A distribution here is a finite list of domain points with marginal
weights and, per point, a histogram law for the label on a shared grid
of values in [0, 1].  Everything downstream (calibration error,
multiaccuracy, regret) can then be computed exactly by enumeration,
which is what the acceptance checks rely on; sampling is still
available for estimator tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, ShapeError

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SyntheticDistribution:
    """Joint law of (x, y) on a finite domain and a finite label grid.

    ``cond[i, j]`` is P(y = y_values[j] | x = xs[i]).  Rows of ``cond``
    and the marginal ``x_weights`` must each sum to 1.
    """

    xs: tuple
    x_weights: np.ndarray
    y_values: np.ndarray
    cond: np.ndarray
    name: str = "synthetic"

    def __post_init__(self):
        w = np.asarray(self.x_weights, dtype=np.float64)
        yv = np.asarray(self.y_values, dtype=np.float64)
        c = np.asarray(self.cond, dtype=np.float64)
        n, g = len(self.xs), yv.size
        if n == 0 or g == 0:
            raise InvalidConfigError("distribution needs at least one point and one label")
        if w.shape != (n,) or c.shape != (n, g):
            raise ShapeError(f"weights {w.shape} / conditionals {c.shape} do not match {n} points, {g} labels")
        if np.any(w < -_TOL) or abs(w.sum() - 1.0) > _TOL:
            raise InvalidConfigError("x weights must be non-negative and sum to 1")
        if np.any(c < -_TOL) or np.max(np.abs(c.sum(axis=1) - 1.0)) > _TOL:
            raise InvalidConfigError("conditional rows must be non-negative and sum to 1")
        if np.min(yv) < -_TOL or np.max(yv) > 1.0 + _TOL:
            raise InvalidConfigError("label values must lie in [0, 1]")
        for arr in (w, yv, c):
            arr.flags.writeable = False
        object.__setattr__(self, "x_weights", w)
        object.__setattr__(self, "y_values", yv)
        object.__setattr__(self, "cond", c)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.xs)})

    @property
    def n_points(self) -> int:
        return len(self.xs)

    def x_index(self, x) -> int:
        try:
            return self._index[x]
        except (KeyError, TypeError):
            raise InvalidConfigError(f"point {x!r} is not in the domain") from None

    def stat_means(self, family) -> np.ndarray:
        """Exact E[s_i(y) | x] for the non-constant statistics, shape (d, n)."""
        S = family.evaluate(self.y_values)[1:]
        return S @ self.cond.T

    def label_means(self) -> np.ndarray:
        """Exact E[y | x], shape (n,)."""
        return self.cond @ self.y_values

    def expected_action_loss(self, loss, actions) -> float:
        """Exact E[loss(y, a(x))] for per-point actions (length n)."""
        if len(actions) != self.n_points:
            raise ShapeError(f"need one action per point, got {len(actions)}")
        cache: dict = {}
        total = 0.0
        for i, t in enumerate(actions):
            if t not in cache:
                cache[t] = np.asarray(loss.fn(self.y_values, t), dtype=np.float64)
            total += self.x_weights[i] * float(cache[t] @ self.cond[i])
        return total

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw n i.i.d. pairs; returns (x indices, label values)."""
        idx = rng.choice(self.n_points, size=n, p=self.x_weights)
        ys = np.empty(n, dtype=np.float64)
        for i in np.unique(idx):
            mask = idx == i
            ys[mask] = rng.choice(self.y_values, size=int(mask.sum()), p=self.cond[i])
        return idx, ys


def two_point_label_dist(y0: float, y1: float, mass0: float = 0.5, x=0.0) -> SyntheticDistribution:
    """Single domain point whose label takes two values."""
    return SyntheticDistribution(
        (x,), np.array([1.0]), np.array([y0, y1]), np.array([[mass0, 1.0 - mass0]]), name="two_point"
    )


def beta_shape_histogram(a: float, b: float, y_values: np.ndarray) -> np.ndarray:
    """Histogram proportional to y^(a-1) (1-y)^(b-1) on the given grid.

    Realizes beta-like conditional laws as finite histograms so exact
    expectations stay available; grid endpoints are nudged inward to
    keep the density finite for shape parameters below 1.
    """
    if a <= 0 or b <= 0:
        raise InvalidConfigError("shape parameters must be positive")
    y = np.clip(np.asarray(y_values, dtype=np.float64), 1e-6, 1.0 - 1e-6)
    w = y ** (a - 1.0) * (1.0 - y) ** (b - 1.0)
    return w / w.sum()


def random_histogram_dist(
    n_points: int = 64, grid_size: int = 17, seed: int = 0, name: str = "synthetic"
) -> SyntheticDistribution:
    """Smooth family of beta-like conditionals over equally spaced points.

    Domain points are n equally spaced features in [0, 1]; each point's
    label law is a beta-shape histogram whose mean drifts with the
    feature, with seeded jitter so no two seeds give the same table.
    """
    if n_points < 1 or grid_size < 2:
        raise InvalidConfigError("need at least one point and a two-value label grid")
    rng = np.random.default_rng(seed)
    xs = tuple(np.linspace(0.0, 1.0, n_points).tolist())
    raw = rng.uniform(0.5, 1.5, size=n_points)
    weights = raw / raw.sum()
    y_values = np.linspace(0.0, 1.0, grid_size)
    rows = []
    for i, x in enumerate(xs):
        mean = 0.2 + 0.6 * x + rng.uniform(-0.08, 0.08)
        mean = float(np.clip(mean, 0.05, 0.95))
        conc = rng.uniform(2.0, 8.0)
        rows.append(beta_shape_histogram(mean * conc, (1.0 - mean) * conc, y_values))
    return SyntheticDistribution(xs, weights, y_values, np.array(rows), name=name)
