"""Concrete loss families and their coefficient builders.

Each builder returns a :class:`~artifact.stats.UniformApproximation`
whose certificate numbers are measured, not assumed: residuals come from
dense audit grids and coefficient masses from full scans of the action
space.  Families:

* exact binomial expansion of even-power losses over moment statistics;
* Chebyshev-compressed even powers, trading exactness for degree about
  the square root of the power;
* generalized linear models, exact by construction;
* arbitrary per-action convex 1-slope losses routed through the grid
  basis and lifted statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil, comb, log, sqrt

import numpy as np
from numpy.polynomial.chebyshev import chebval

from .cvxbasis import (
    Basis,
    approximate_convex,
    build_cvx_basis,
    lift_to_unit_interval,
    lifted_element_order,
)
from .errors import (
    DegreeTooLargeError,
    GuaranteeViolationError,
    IneligibleLossError,
    InvalidConfigError,
    ShapeError,
    UnsupportedError,
)
from .gridfn import GridFunction
from .stats import (
    AUDIT_GRID,
    ActionSpace,
    StatisticsFamily,
    UniformApproximation,
    action_grid,
    measure_lambdas,
    moment_family,
    verify_uniform_approx,
)

__all__ = [
    "Loss",
    "ChebyshevApprox",
    "newsvendor",
    "l1_loss",
    "lp_loss",
    "lp_monomial_family",
    "chebyshev_monomial",
    "lp_cheb_family",
    "glm_family",
    "cvx_family",
]


@dataclass(frozen=True, eq=False)
class Loss:
    """A loss evaluator with its declared magnitude bound.

    ``fn`` maps (label array, action) to a value array; ``bound`` is the
    declared cap on ``|fn|`` over the audit ranges.
    """

    loss_id: str
    fn: object
    bound: float


def newsvendor(c: float) -> Loss:
    """Order cost ``c * t`` against sales ``min(t, y)``; 1-slope in y."""
    if not 0.0 <= c <= 1.0:
        raise InvalidConfigError(f"unit cost must lie in [0, 1], got {c}")
    return Loss(f"newsvendor{c:g}", lambda y, t: c * t - np.minimum(t, np.asarray(y, dtype=np.float64)), 1.0)


def l1_loss() -> Loss:
    return Loss("l1", lambda y, t: np.abs(np.asarray(y, dtype=np.float64) - t), 1.0)


def lp_loss(p: int) -> Loss:
    return Loss(f"l{p}", lambda y, t: (np.asarray(y, dtype=np.float64) - t) ** p, 1.0)


def lp_monomial_family(p: int, action_space: ActionSpace | None = None) -> UniformApproximation:
    """Exact expansion of ``(y - t)^p`` over ``{1, y, ..., y^p}``.

    The statistic ``y^j`` carries coefficient ``comb(p, j) * (-t)^(p - j)``,
    an algebraic identity, so the residual is zero and the coefficient
    mass at ``t = 1`` is exactly ``2^p``.
    """
    if p % 2 or not 2 <= p <= 16:
        raise UnsupportedError(f"even power in [2, 16] required, got {p}")
    space = action_space or action_grid(101)
    family = moment_family(p)
    binoms = np.array([comb(p, j) for j in range(p + 1)], dtype=np.float64)
    powers = np.arange(p, -1, -1)

    def r(t):
        return binoms * (-float(t)) ** powers

    loss = lp_loss(p)
    ua = UniformApproximation(family, loss.loss_id, r, 0.0, 0.0, 0.0, space, loss=loss)
    delta, lam = verify_uniform_approx(ua, loss, AUDIT_GRID, space)
    if delta > 1e-12:
        # the expansion is an algebraic identity; anything beyond float
        # roundoff means the coefficients are wrong
        raise GuaranteeViolationError(f"binomial expansion drifted: measured gap {delta}")
    _, lam_tail = measure_lambdas(ua)
    return UniformApproximation(family, loss.loss_id, r, lam, lam_tail, 0.0, space, loss=loss)


@dataclass(frozen=True, eq=False)
class ChebyshevApprox:
    """Truncated Chebyshev expansion of ``x^n`` on [-1, 1].

    ``coeffs`` maps kept degrees ``j`` (same parity as ``n``) to their
    weights.  ``grid_error`` is the measured sup gap against ``x^n`` on
    the dense audit grid; the truncation rule targets ``eps`` but the
    achieved value is what is recorded.
    """

    n: int
    eps: float
    d: int
    coeffs: dict[int, float]
    grid_error: float

    def __call__(self, x):
        cvec = np.zeros(max(self.coeffs) + 1)
        for j, c in self.coeffs.items():
            cvec[j] = c
        return chebval(np.asarray(x, dtype=np.float64), cvec)


def truncation_degree(n: int, eps: float) -> int:
    return ceil(sqrt(n * log(1.0 / eps)))


def _cheb_weights(n: int, d: int) -> dict[int, Fraction]:
    """Exact weights of ``x^n`` on ``T_j`` for kept degrees ``j <= d``."""
    scale = Fraction(1, 2 ** (n - 1))
    out: dict[int, Fraction] = {}
    for j in range(n % 2, min(d, n) + 1, 2):
        w = Fraction(comb(n, (n - j) // 2)) * scale
        if j == 0:
            w /= 2
        out[j] = w
    return out


def chebyshev_monomial(n: int, eps: float) -> ChebyshevApprox:
    """Drop high Chebyshev degrees of ``x^n`` past ``sqrt(n ln(1/eps))``.

    Weights are exact binomials over a power-of-two denominator,
    computed in exact arithmetic and rounded to float once.  The
    measured grid error is recorded on the result for callers to judge;
    construction itself never fails on accuracy.
    """
    if n < 1:
        raise InvalidConfigError(f"degree must be positive, got {n}")
    if not 0.0 < eps < 1.0:
        raise InvalidConfigError(f"target error must lie in (0, 1), got {eps}")
    d = truncation_degree(n, eps)
    weights = _cheb_weights(n, d)
    coeffs = {j: float(w) for j, w in weights.items()}
    approx = ChebyshevApprox(n, eps, d, coeffs, 0.0)
    grid = np.linspace(-1.0, 1.0, 10_000)
    err = float(np.max(np.abs(approx(grid) - grid**n)))
    return ChebyshevApprox(n, eps, d, coeffs, err)


def _cheb_power_coeffs(weights: dict[int, Fraction]) -> list[Fraction]:
    """Power-basis coefficients of ``sum_j w_j T_j`` in exact arithmetic."""
    top = max(weights)
    # T_j recurrence over integer coefficient lists
    polys = [[1], [0, 1]]
    while len(polys) <= top:
        prev, cur = polys[-2], polys[-1]
        nxt = [0] + [2 * c for c in cur]
        for i, c in enumerate(prev):
            nxt[i] -= c
        polys.append(nxt)
    out = [Fraction(0)] * (top + 1)
    for j, w in weights.items():
        for i, c in enumerate(polys[j]):
            out[i] += w * c
    return out


def lp_cheb_family(p: int, delta: float, action_space: ActionSpace | None = None) -> UniformApproximation:
    """Compressed even-power loss over moments of degree about ``sqrt(p)``.

    Expands the truncated Chebyshev surrogate ``q`` of ``x^p`` at
    ``x = y - t`` into per-action polynomials with exact integer
    numerators, converting to float only at evaluation.  The recorded
    residual is measured against the true power loss, so it covers both
    the truncation and the expansion.
    """
    if p % 2 or not 2 <= p <= 16:
        raise UnsupportedError(f"even power in [2, 16] required, got {p}")
    if not 0.0 < delta < 1.0:
        raise InvalidConfigError(f"target error must lie in (0, 1), got {delta}")
    space = action_space or action_grid(101)
    d = truncation_degree(p, delta)
    weights = _cheb_weights(p, d)
    a = _cheb_power_coeffs(weights)  # q(x) = sum_k a[k] x^k, exact
    deg = len(a) - 1
    # r_i holds the coefficient on y^i: sum over k >= i of a[k] C(k,i) (-t)^(k-i)
    table: list[list[Fraction]] = [[Fraction(0)] * (deg + 1) for _ in range(deg + 1)]
    for k in range(deg + 1):
        if a[k] == 0:
            continue
        for i in range(k + 1):
            table[i][k - i] += a[k] * comb(k, i) * (-1) ** (k - i)
    flat = [c for row in table for c in row]
    if max(abs(c.numerator) for c in flat) >= 2**53 or max(c.denominator for c in flat) >= 2**53:
        raise DegreeTooLargeError(f"exact expansion of degree {deg} exceeds float precision")
    poly = np.array([[float(c) for c in row] for row in table])  # (d+1) x (deg+1)

    def r(t):
        tp = float(t) ** np.arange(deg + 1)
        return poly @ tp

    family = moment_family(deg)
    loss = lp_loss(p)
    ua = UniformApproximation(family, loss.loss_id, r, 0.0, 0.0, 0.0, space, loss=loss)
    err, lam = verify_uniform_approx(ua, loss, AUDIT_GRID, space)
    _, lam_tail = measure_lambdas(ua)
    return UniformApproximation(family, loss.loss_id, r, lam, lam_tail, err, space, loss=loss)


def glm_family(g, S: StatisticsFamily, A: ActionSpace, loss_id: str = "glm") -> UniformApproximation:
    """Linear-plus-link losses ``g(t) - <s(y), t>``, exact by structure.

    Actions are ``d``-vectors (scalars for ``d = 1``) inside
    ``[-1, 1]^d`` with ``|g| <= 1`` over the action space.  The loss
    evaluator routes through the same coefficient arithmetic as the
    expansion, so the residual is structurally zero; the audit still
    measures it.
    """
    d = S.d

    def t_vec(t):
        vec = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if vec.shape != (d,):
            raise ShapeError(f"action {t!r} is not a {d}-vector")
        return vec

    for t in A.actions:
        vec = t_vec(t)
        if np.max(np.abs(vec)) > 1.0 + 1e-12:
            raise InvalidConfigError(f"action {t!r} leaves [-1, 1]^{d}")
        if abs(float(g(t))) > 1.0 + 1e-12:
            raise InvalidConfigError(f"|g| exceeds 1 at action {t!r}")

    def r(t):
        return np.concatenate([[float(g(t))], -t_vec(t)])

    def fn(y, t):
        return r(t) @ S.evaluate(np.asarray(y, dtype=np.float64))

    loss = Loss(loss_id, fn, 1.0 + d)
    ua = UniformApproximation(S, loss_id, r, 0.0, 0.0, 0.0, A, loss=loss)
    delta, lam = verify_uniform_approx(ua, loss, AUDIT_GRID, A)
    _, lam_tail = measure_lambdas(ua)
    ua = UniformApproximation(S, loss_id, r, lam, lam_tail, delta, A, loss=loss)
    if lam > d + 1 + 1e-9:
        raise InvalidConfigError(f"coefficient mass {lam} exceeds d + 1")
    return ua


def cvx_family(delta: float, seed: int = 0):
    """Statistics spanning all convex 1-slope losses, plus their builder.

    The grid accuracy is pre-scaled by ``2/3`` so the end-to-end chain
    (snap to grid, approximate on the grid, divide by ``m``) lands at
    ``delta``.  The returned builder takes ``(loss, action_space)`` and
    produces coefficients per action by discretizing the loss and
    certifying its hinge expansion; losses steeper than unit slope are
    admitted by a recorded global rescale, and convexity violations
    raise with the offending action named.

    Returns ``(family, build)``; ``build`` caches by loss id.
    """
    basis: Basis = build_cvx_basis(2.0 * delta / 3.0, seed=seed)
    family = lift_to_unit_interval(basis, 2.0 * delta / 3.0)
    order = np.array(lifted_element_order(basis))
    m = basis.m
    grid_labels = np.arange(m, dtype=np.float64) / m
    cache: dict[str, UniformApproximation] = {}

    def build(loss: Loss, action_space: ActionSpace) -> UniformApproximation:
        if loss.loss_id in cache:
            cached = cache[loss.loss_id]
            if cached.action_space is action_space or cached.action_space.actions == action_space.actions:
                return cached
        grids = []
        slope = 0.0
        for t in action_space.actions:
            vals = m * np.asarray(loss.fn(grid_labels, t), dtype=np.float64)
            if not np.all(np.isfinite(vals)):
                raise IneligibleLossError(f"loss '{loss.loss_id}' is not finite at action {t!r}")
            if np.min(np.diff(vals, n=2)) < -1e-8:
                raise IneligibleLossError(f"loss '{loss.loss_id}' is not convex in the label at action {t!r}")
            slope = max(slope, float(np.max(np.abs(np.diff(vals)))))
            grids.append(vals)
        scale = slope if slope > 1.0 + 1e-9 else 1.0
        rows = []
        for t, vals in zip(action_space.actions, grids):
            cert = approximate_convex(
                basis, GridFunction(m, vals / scale), tol=1e-8, target_name=f"{loss.loss_id}@{t!r}"
            )
            rows.append(cert.coef_vec[order] / m)
        table = {t: row for t, row in zip(action_space.actions, rows)}
        scaled = Loss(loss.loss_id, lambda y, t: np.asarray(loss.fn(y, t), dtype=np.float64) / scale, loss.bound / scale)
        ua = UniformApproximation(family, loss.loss_id, lambda t: table[t], 0.0, 0.0, 0.0, action_space, loss=scaled, scale=scale)
        err, lam = verify_uniform_approx(ua, scaled, AUDIT_GRID, action_space)
        _, lam_tail = measure_lambdas(ua)
        ua = UniformApproximation(
            family, loss.loss_id, lambda t: table[t], lam, lam_tail, err, action_space, loss=scaled, scale=scale
        )
        cache[loss.loss_id] = ua
        return ua

    return family, build
