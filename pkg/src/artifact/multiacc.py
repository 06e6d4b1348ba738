"""Weak agnostic learning and the multiaccuracy boosting loop.

A test class is a finite set of maps b: X -> [-1, 1].  When tests come
from composing per-loss coefficient functions with hypotheses, their raw
values can exceed the unit box; the class is then scaled down by its
measured sup kappa and the factor is carried so callers can translate
normalized guarantees back to the raw class.

The weak learner surface has two implementations with one contract
(current predictor in, signed test or bottom out): an exact variant
that enumerates a finite domain, and a sampled variant that draws the
batch size implied by its accept/reject margins.  The boosting loop
itself is learner-agnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateMarginError,
    InvalidConfigError,
    NonTerminationError,
    ShapeError,
)
from .synthdist import SyntheticDistribution

_BOUND_SLACK = 1e-9
_DROP_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class TestFunction:
    """One named test map; ``fn`` takes a single domain point."""

    name: str
    fn: Callable


@dataclass(frozen=True, eq=False)
class TestClass:
    """Finite test class with a recorded normalization factor.

    ``matrix(xs)`` returns the normalized values, one row per test, and
    enforces the unit bound on whatever sample it is given.  A batch
    evaluator may be attached by builders that can vectorize better
    than per-point calls.
    """

    __test__ = False  # bare name would otherwise trip pytest collection

    tests: tuple
    kappa: float = 1.0
    source: str = "raw"
    _evaluator: Callable | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.tests:
            raise InvalidConfigError("test class must contain at least one test")
        if self.kappa < 1.0:
            raise InvalidConfigError("normalization factor cannot be below 1")

    def __len__(self):
        return len(self.tests)

    def raw_values(self, xs) -> np.ndarray:
        if self._evaluator is not None:
            return self._evaluator(xs)
        return np.array([[float(t.fn(x)) for x in xs] for t in self.tests])

    def matrix(self, xs) -> np.ndarray:
        """Normalized test values, shape (num tests, len(xs)); cached."""
        key = tuple(xs)
        if key not in self._cache:
            vals = self.raw_values(xs) / self.kappa
            if vals.size and np.max(np.abs(vals)) > 1.0 + _BOUND_SLACK:
                raise InvalidConfigError(
                    f"normalized test values exceed [-1, 1] on this sample (max {np.max(np.abs(vals)):.6g})"
                )
            vals.flags.writeable = False
            self._cache[key] = vals
        return self._cache[key]


def raw_test_class(named_fns: Sequence[tuple[str, Callable]]) -> TestClass:
    return TestClass(tuple(TestFunction(name, fn) for name, fn in named_fns))


def compose_tests(uas: Sequence, hypotheses: Sequence[tuple[str, Callable]], xs_audit) -> TestClass:
    """Tests r_i(c(x)) for every loss coefficient i >= 1 and hypothesis c.

    Identically-zero rows (on the audit sample) are dropped; the rest
    are normalized by the measured sup, recorded as kappa.
    """
    records = []  # (ua, i, c_name, c_fn)
    for ua in uas:
        for i in range(1, ua.family.d + 1):
            for name, fn in hypotheses:
                records.append((ua, i, name, fn))

    def evaluate(records_, xs):
        rows = []
        per_pair: dict = {}
        for ua, i, name, fn in records_:
            pair = (id(ua), name)
            if pair not in per_pair:
                actions = [fn(x) for x in xs]
                coefs = {t: np.asarray(ua.r(t), dtype=np.float64) for t in set(actions)}
                per_pair[pair] = np.stack([coefs[t] for t in actions])  # (n, d+1)
            rows.append(per_pair[pair][:, i])
        return np.stack(rows)

    values = evaluate(records, xs_audit)
    keep = [k for k in range(len(records)) if np.max(np.abs(values[k])) > _DROP_TOL]
    if not keep:
        raise InvalidConfigError("all composed tests vanish on the audit sample")
    records = [records[k] for k in keep]
    kappa = max(1.0, float(np.max(np.abs(values[keep]))))

    tests = tuple(
        TestFunction(f"{ua.loss_id}.r{i}*{name}", (lambda ua, i, fn: lambda x: float(ua.r(fn(x))[i]))(ua, i, fn))
        for ua, i, name, fn in records
    )
    frozen = list(records)
    return TestClass(tests, kappa, source="composed", _evaluator=lambda xs: evaluate(frozen, xs))


@dataclass(frozen=True)
class WeakLearnerSpec:
    """Accept/reject margins and seeding for the sampled learner."""

    rho: float
    sigma: float
    seed: int = 0
    confidence: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.sigma <= self.rho):
            raise InvalidConfigError(f"need 0 < sigma <= rho, got sigma={self.sigma}, rho={self.rho}")

    def sample_size(self, n_tests: int) -> int:
        if self.rho == self.sigma:
            raise DegenerateMarginError(
                "sampled weak learning needs rho > sigma; equal margins leave no room for estimation error"
            )
        return math.ceil(2.0 * math.log(2.0 * n_tests / self.confidence) / (self.rho - self.sigma) ** 2)


@dataclass(frozen=True)
class SignedTest:
    """A returned test: class index, orientation, and the score seen."""

    index: int
    sign: float
    estimate: float
    name: str


def exhaustive_weak_learner(tc: TestClass, spec: WeakLearnerSpec, residual_source, *, matrix, rng=None):
    """Scan every test on one shared sample batch; return the best or bottom.

    ``residual_source(n, rng)`` must yield domain indices and labels z
    with E[z | x] equal to the residual and |z| <= 1.  The batch size is
    the Hoeffding size declared by ``spec``; the acceptance margin sits
    halfway between the two thresholds so both weak-learning conditions
    follow from one deviation bound.
    """
    n = spec.sample_size(len(tc))
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    x_idx, z = residual_source(n, rng)
    z = np.asarray(z, dtype=np.float64)
    if np.max(np.abs(z)) > 1.0 + _BOUND_SLACK:
        raise InvalidConfigError("residual labels must lie in [-1, 1]")
    est = matrix[:, x_idx] @ z / n
    best = int(np.argmax(np.abs(est)))
    if abs(est[best]) >= (spec.rho + spec.sigma) / 2.0:
        return SignedTest(best, math.copysign(1.0, est[best]), float(abs(est[best])), tc.tests[best].name)
    return None


@dataclass(eq=False)
class ExactWeakLearner:
    """Enumerating learner on a finite domain: no sampling, one threshold.

    Returns the largest-correlation test whenever that correlation
    reaches ``rho``; after a bottom answer every test is certified
    below ``rho`` exactly, so completeness and soundness coincide.
    """

    matrix: np.ndarray
    weights: np.ndarray
    target: np.ndarray
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidConfigError("threshold must be positive")

    @property
    def sigma(self) -> float:
        return self.rho

    def __call__(self, q: np.ndarray):
        f = 0.5 * (self.target - q)
        corr = self.matrix @ (self.weights * f)
        best = int(np.argmax(np.abs(corr)))
        if abs(corr[best]) >= self.rho:
            sign = math.copysign(1.0, corr[best])
            return sign * self.matrix[best], SignedTest(best, sign, float(abs(corr[best])), str(best))
        return None


@dataclass(eq=False)
class SampledWeakLearner:
    """Sampling learner bound to one statistic dimension of a source."""

    tc: TestClass
    spec: WeakLearnerSpec
    dist: SyntheticDistribution
    family: object
    dim: int

    def __post_init__(self):
        self.rng = np.random.default_rng(self.spec.seed)
        self.matrix = self.tc.matrix(self.dist.xs)

    @property
    def rho(self) -> float:
        return self.spec.rho

    @property
    def sigma(self) -> float:
        return self.spec.sigma

    def __call__(self, q: np.ndarray):
        def residual(n, rng):
            idx, ys = self.dist.sample(n, rng)
            s = self.family.evaluate(ys)[1 + self.dim]
            return idx, 0.5 * (s - q[idx])

        found = exhaustive_weak_learner(self.tc, self.spec, residual, matrix=self.matrix, rng=self.rng)
        if found is None:
            return None
        return found.sign * self.matrix[found.index], found


@dataclass(frozen=True)
class MaResult:
    q: np.ndarray
    iterations: int
    wl_calls: int
    trace: tuple


def ma_loop(q0, wl, alpha: float | None = None, *, sigma: float, cap: int | None = None) -> MaResult:
    """Boost one statistic dimension until the learner returns bottom.

    Each accepted test moves the predictor by ``sigma`` times the test
    and projects back into [-1, 1].  The iteration cap defaults to
    16 / sigma^2; exceeding it raises with the recorded trace.
    """
    if sigma <= 0:
        raise InvalidConfigError("step size must be positive")
    if alpha is not None and getattr(wl, "rho", 0.0) > alpha + 1e-12:
        raise InvalidConfigError(f"learner threshold {wl.rho} exceeds the accuracy target {alpha}")
    cap = math.ceil(16.0 / sigma**2) if cap is None else cap
    q = np.array(q0, dtype=np.float64)
    trace = []
    for t in range(cap + 1):
        found = wl(q)
        if found is None:
            return MaResult(q, t, t + 1, tuple(trace))
        b_values, signed = found
        q = np.clip(q + sigma * b_values, -1.0, 1.0)
        trace.append((t, signed.name, signed.sign, signed.estimate))
    raise NonTerminationError(
        f"multiaccuracy loop exceeded its cap of {cap} iterations", trace=trace
    )


def measure_multiaccuracy(p, family, tc: TestClass, dist: SyntheticDistribution, *, mode: str = "exact", n: int = 20000, seed: int = 0):
    """Largest absolute residual correlation over dimensions and tests.

    Exact mode enumerates the domain.  Sampled mode returns the
    estimate together with the standard error of the selected cell.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (family.d, dist.n_points):
        raise ShapeError(f"predictor shape {p.shape} does not match (d={family.d}, n={dist.n_points})")
    M = tc.matrix(dist.xs)
    if mode == "exact":
        resid = dist.stat_means(family) - p
        corr = M @ (dist.x_weights[:, None] * resid.T)
        return float(np.max(np.abs(corr)))
    if mode != "sample":
        raise InvalidConfigError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    idx, ys = dist.sample(n, rng)
    resid = family.evaluate(ys)[1:] - p[:, idx]
    prods = M[:, idx][:, None, :] * resid[None, :, :]
    est = prods.mean(axis=2)
    cell = np.unravel_index(int(np.argmax(np.abs(est))), est.shape)
    se = float(prods[cell].std(ddof=1) / math.sqrt(n))
    return float(np.abs(est[cell])), se


def l2_sq(weights, a, b) -> float:
    """Weighted squared l2 distance between two per-point vectors."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.asarray(weights) @ (diff * diff))


def predictor_potential(weights, p_star, q) -> float:
    """Sum of per-dimension squared l2 distances to the statistic map."""
    p_star = np.atleast_2d(np.asarray(p_star, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return float(sum(l2_sq(weights, p_star[i], q[i]) for i in range(p_star.shape[0])))
