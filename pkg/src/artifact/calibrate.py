"""Binning, calibration-error estimation, and recalibration.

Predictors over a finite domain are dense arrays of shape (d, n), one
column per domain point, aligned with a SyntheticDistribution's point
order.  Bin bookkeeping is sparse: only occupied bins are ever stored,
so memory tracks the data and never the full bin lattice.

The exhaustive paths (exact ECE, exact recalibration, the simulated
label distribution) enumerate the domain and share one aggregation
routine, which makes the exhaustive estimate literally equal to the
exact oracle rather than merely close to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBudgetError, InvalidConfigError, ShapeError
from .synthdist import SyntheticDistribution

_TOL = 1e-9


def _check_delta(delta: float) -> None:
    if not (0.0 < delta <= 1.0):
        raise InvalidConfigError(f"bin width must be in (0, 1], got {delta}")


def _check_predictor(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"predictor table must be 2-d (stats x points), got shape {p.shape}")
    if p.size and np.max(np.abs(p)) > 1.0 + _TOL:
        raise InvalidConfigError("predictions must lie in [-1, 1] per coordinate")
    return p


def bin_indices(p, delta: float) -> np.ndarray:
    """Integer bin coordinates, floored and clipped to the legal range."""
    _check_delta(delta)
    p = _check_predictor(p)
    top = math.ceil(1.0 / delta)
    return np.clip(np.floor(p / delta), -top, top - 1).astype(np.int64)


def discretize_predictor(p, delta: float) -> np.ndarray:
    """Each coordinate floored to its bin's lower corner."""
    return bin_indices(p, delta) * delta


@dataclass(frozen=True, eq=False)
class BinTable:
    """Occupied-bin statistics: mass, statistic mean, and corner per bin."""

    delta: float
    d: int
    keys: tuple
    mass: np.ndarray
    means: np.ndarray
    corners: np.ndarray

    def __post_init__(self):
        k = len(self.keys)
        if self.mass.shape != (k,) or self.means.shape != (k, self.d) or self.corners.shape != (k, self.d):
            raise ShapeError("bin table arrays do not agree on the number of bins")
        object.__setattr__(self, "_row", {key: i for i, key in enumerate(self.keys)})

    def row(self, key):
        return self._row.get(key)

    def gap(self) -> float:
        """Mass-weighted mean sup-gap between bin means and corners."""
        total = float(self.mass.sum())
        if total <= 0:
            return 0.0
        gaps = np.max(np.abs(self.means - self.corners), axis=1)
        return float((self.mass / total) @ gaps)

    def merge(self, other: "BinTable") -> "BinTable":
        """Commutative fold of two shard tables (mass-weighted means)."""
        if other.delta != self.delta or other.d != self.d:
            raise ShapeError("cannot merge bin tables with different widths or dimensions")
        keys = list(self.keys)
        mass = list(self.mass)
        sums = [m * w for m, w in zip(self.means, self.mass)]
        corners = list(self.corners)
        pos = {k: i for i, k in enumerate(keys)}
        for k, w, mean, corner in zip(other.keys, other.mass, other.means, other.corners):
            if k in pos:
                i = pos[k]
                mass[i] += w
                sums[i] = sums[i] + mean * w
            else:
                pos[k] = len(keys)
                keys.append(k)
                mass.append(w)
                sums.append(mean * w)
                corners.append(corner)
        mass_arr = np.array(mass)
        means = np.array([s / m if m > 0 else s for s, m in zip(sums, mass_arr)])
        return BinTable(self.delta, self.d, tuple(keys), mass_arr, means, np.array(corners))


def _fold_domain(keys: list, rep: np.ndarray, weights: np.ndarray, stat_means: np.ndarray):
    """Group domain columns by key, in first-seen order.

    Returns (ordered keys, mass, mean, representative) arrays.  The
    representative of a group is its first column of ``rep`` (all
    columns in a group share it by construction of the callers).
    """
    order: list = []
    acc: dict = {}
    for i, key in enumerate(keys):
        if key not in acc:
            order.append(key)
            acc[key] = [0.0, np.zeros(rep.shape[0]), rep[:, i]]
        slot = acc[key]
        slot[0] += float(weights[i])
        slot[1] = slot[1] + weights[i] * stat_means[:, i]
    mass = np.array([acc[k][0] for k in order])
    sums = np.stack([acc[k][1] for k in order])
    reps = np.stack([acc[k][2] for k in order])
    means = np.where(mass[:, None] > 0, sums / np.maximum(mass[:, None], 1e-300), reps)
    return order, mass, means, reps


def _gap_of_fold(mass: np.ndarray, means: np.ndarray, reps: np.ndarray) -> float:
    total = float(mass.sum())
    gaps = np.max(np.abs(means - reps), axis=1)
    return float((mass / max(total, 1e-300)) @ gaps)


def _column_keys(arr: np.ndarray) -> list:
    return [tuple(arr[:, i].tolist()) for i in range(arr.shape[1])]


def exact_ece(p, dist: SyntheticDistribution, family) -> float:
    """E[ || E[s(y) | p(x)] - p(x) ||_inf ], exactly, by enumeration."""
    p = _check_predictor(p)
    if p.shape != (family.d, dist.n_points):
        raise ShapeError(f"predictor shape {p.shape} does not match (d={family.d}, n={dist.n_points})")
    _, mass, means, reps = _fold_domain(_column_keys(p), p, dist.x_weights, dist.stat_means(family))
    return _gap_of_fold(mass, means, reps)


def aggregate_exact(p, delta: float, dist: SyntheticDistribution, family) -> BinTable:
    """Exact per-bin masses and conditional statistic means."""
    j = bin_indices(p, delta)
    corners = j * delta
    keys = [tuple(j[:, i].tolist()) for i in range(j.shape[1])]
    order, mass, means, reps = _fold_domain(keys, corners, dist.x_weights, dist.stat_means(family))
    return BinTable(delta, p.shape[0], tuple(order), mass, means, reps)


def aggregate_samples(p, delta: float, x_idx: np.ndarray, stats: np.ndarray) -> BinTable:
    """Per-bin counts and empirical statistic means from a sample batch."""
    j = bin_indices(p, delta)
    j_samp = j[:, x_idx]
    uniq, inv = np.unique(j_samp.T, axis=0, return_inverse=True)
    counts = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    means = np.empty((len(uniq), stats.shape[0]))
    for k in range(stats.shape[0]):
        means[:, k] = np.bincount(inv, weights=stats[k], minlength=len(uniq)) / counts
    keys = tuple(tuple(row.tolist()) for row in uniq)
    return BinTable(delta, p.shape[0], keys, counts, means, uniq * delta)


@dataclass(eq=False)
class LabelSource:
    """Seeded i.i.d. (x, s(y)) sampler over a finite distribution."""

    dist: SyntheticDistribution
    family: object
    seed: int = 0

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    @property
    def d(self) -> int:
        return self.family.d

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        idx, ys = self.dist.sample(n, self.rng)
        return idx, self.family.evaluate(ys)[1:]


def default_sample_size(d: int, delta: float, mu: float, c_est: float = 1.0, budget: int = 10**8) -> int:
    """Bin-resolving sample size; refuses budgets the box cannot hold.

    The count scales as d log^2(d/delta) / (delta^d mu^3), exponential
    in d through the bin term.  Beyond ``budget`` the caller must pass
    an explicit override, acknowledging the cost.
    """
    _check_delta(delta)
    if not (0.0 < mu <= 1.0):
        raise InvalidConfigError(f"accuracy must be in (0, 1], got {mu}")
    try:
        n = c_est * d * math.log(d / delta) ** 2 / (delta**d * mu**3)
    except OverflowError:
        n = math.inf
    if not math.isfinite(n) or n > budget:
        raise InfeasibleBudgetError(
            f"default sample size {n:.3g} exceeds the budget of {budget:.3g} "
            f"(d={d}, delta={delta}, mu={mu}); pass n_override to proceed anyway"
        )
    return max(1, math.ceil(n))


def est_ece(
    p,
    delta: float,
    mu: float,
    source: LabelSource,
    n_override: int | None = None,
    *,
    repeats: int = 1,
    exhaustive: bool = False,
    c_est: float = 1.0,
    budget: int = 10**8,
) -> float:
    """Estimate the calibration error of the delta-discretized predictor.

    Draws bin statistics from the source and averages sup-gaps between
    empirical bin means and bin corners; ``repeats`` > 1 takes a median
    of independent estimates.  With ``exhaustive=True`` the sample is
    replaced by full enumeration and the result equals the exact oracle.
    """
    p = _check_predictor(p)
    if exhaustive:
        j = bin_indices(p, delta)
        corners = j * delta
        keys = [tuple(j[:, i].tolist()) for i in range(j.shape[1])]
        _, mass, means, reps = _fold_domain(keys, corners, source.dist.x_weights, source.dist.stat_means(source.family))
        return _gap_of_fold(mass, means, reps)
    n = n_override if n_override is not None else default_sample_size(p.shape[0], delta, mu, c_est, budget)
    if repeats < 1:
        raise InvalidConfigError("repeats must be at least 1")
    estimates = []
    for _ in range(repeats):
        x_idx, stats = source.draw(n)
        estimates.append(aggregate_samples(p, delta, x_idx, stats).gap())
    return float(np.median(estimates))


def recal(
    p,
    delta: float,
    source: LabelSource,
    n_override: int | None = None,
    *,
    exhaustive: bool = False,
    c_est: float = 1.0,
    budget: int = 10**8,
) -> np.ndarray:
    """Replace each prediction with its bin's statistic mean.

    Bins never seen during estimation fall back to the bin corner, the
    uncorrected discretized prediction.  Exhaustive mode yields the
    exact bin-conditional means.
    """
    p = _check_predictor(p)
    if exhaustive:
        table = aggregate_exact(p, delta, source.dist, source.family)
    else:
        n = n_override if n_override is not None else default_sample_size(p.shape[0], delta, delta, c_est, budget)
        x_idx, stats = source.draw(n)
        table = aggregate_samples(p, delta, x_idx, stats)
    j = bin_indices(p, delta)
    out = j * delta
    for i in range(p.shape[1]):
        row = table.row(tuple(j[:, i].tolist()))
        if row is not None:
            out[:, i] = table.means[row]
    return out


def simulate_dtilde(p, dist: SyntheticDistribution, name_suffix: str = "~") -> SyntheticDistribution:
    """Resample labels from the predictor's level sets.

    Points sharing a prediction vector get the common mixture of their
    conditional laws, weighted by marginal mass; the x marginal is kept.
    """
    p = _check_predictor(p)
    if p.shape[1] != dist.n_points:
        raise ShapeError(f"predictor covers {p.shape[1]} points, distribution has {dist.n_points}")
    keys = _column_keys(p)
    groups: dict = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    new_cond = np.array(dist.cond, copy=True)
    for idx in groups.values():
        w = dist.x_weights[idx]
        total = float(w.sum())
        if total > 0:
            new_cond[idx] = (w @ dist.cond[idx]) / total
    return SyntheticDistribution(dist.xs, dist.x_weights, dist.y_values, new_cond, name=dist.name + name_suffix)


def l1_distance(weights, p, q) -> float:
    """Mass-weighted mean sup-norm distance between two predictor tables."""
    return float(np.asarray(weights) @ np.max(np.abs(np.asarray(p) - np.asarray(q)), axis=0))
