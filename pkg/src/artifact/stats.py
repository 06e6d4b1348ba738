"""Statistics families, coefficient families, and action selection.

A statistics family is a short list of bounded maps ``s_i : [0,1] -> [-1,1]``
with ``s_0`` the constant 1.  A uniform approximation for a loss supplies,
per action ``t``, coefficients ``r_i(t)`` such that

    loss(y, t)  ~=  r_0(t) + sum_i r_i(t) * s_i(y)

uniformly in ``y`` up to a certified ``delta``, with certified bounds on
the coefficient mass.  Acting on a statistics estimate ``v`` then means
scoring each action by ``r_0(t) + <r_{1:}(t), v>`` and taking the argmin.

Two coefficient masses are tracked: ``lam`` sums ``|r_i(t)|`` over all
``i`` including the constant, ``lam_tail`` over ``i >= 1`` only.  Bound
chains downstream consume the tail value; the full value is certified
because the defining inequality is stated with it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DomainTooSmallError,
    FamilyMismatchError,
    InvalidConfigError,
    ShapeError,
)

__all__ = [
    "AUDIT_GRID",
    "StatisticsFamily",
    "ActionSpace",
    "UniformApproximation",
    "Prediction",
    "moment_family",
    "eval_lhat",
    "choose_action",
    "verify_uniform_approx",
    "measure_lambdas",
    "boolean_family",
    "expected_loss",
    "write_family_table",
    "read_family_table",
]

# fixed audit grid for boundedness and residual certification
AUDIT_GRID = np.linspace(0.0, 1.0, 10_000)

_BOUND_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class StatisticsFamily:
    """Bounded statistics ``s_0 .. s_d`` with ``s_0`` constant 1.

    ``statistics`` holds vectorized callables over label arrays.  A
    family loaded from a coefficient table on disk carries no callables
    (``statistics=None``); it can act but not re-verify.
    """

    name: str
    statistics: tuple[Callable, ...] | None
    d: int

    def __post_init__(self):
        if self.statistics is None:
            return
        if len(self.statistics) != self.d + 1:
            raise ShapeError(f"expected {self.d + 1} statistics, got {len(self.statistics)}")
        vals = self.evaluate(AUDIT_GRID)
        if not np.allclose(vals[0], 1.0, atol=_BOUND_SLACK):
            raise InvalidConfigError("s_0 must be the constant 1")
        if np.max(np.abs(vals)) > 1.0 + _BOUND_SLACK:
            raise InvalidConfigError(f"statistics of family '{self.name}' exceed [-1, 1] on the audit grid")

    def evaluate(self, ys) -> np.ndarray:
        """Matrix of shape (d + 1, len(ys)); row i is s_i over ys."""
        if self.statistics is None:
            raise FamilyMismatchError(f"family '{self.name}' is table-only and cannot evaluate labels")
        ys = np.asarray(ys, dtype=np.float64)
        return np.stack([np.broadcast_to(np.asarray(s(ys), dtype=np.float64), ys.shape) for s in self.statistics])


@dataclass(frozen=True, eq=False)
class ActionSpace:
    """Finite ordered action list; order fixes tie-breaking."""

    actions: tuple

    def __post_init__(self):
        if not self.actions:
            raise DomainTooSmallError("action space must be non-empty")
        object.__setattr__(self, "_lookup", {a: i for i, a in enumerate(self.actions)})

    def index(self, t) -> int:
        try:
            return self._lookup[t]
        except (KeyError, TypeError):
            raise FamilyMismatchError(f"action {t!r} is not in the action space") from None

    def __len__(self):
        return len(self.actions)


def action_grid(n: int = 101, lo: float = 0.0, hi: float = 1.0) -> ActionSpace:
    """Uniform scalar action grid; endpoints included."""
    return ActionSpace(tuple(np.linspace(lo, hi, n).tolist()))


@dataclass(frozen=True, eq=False)
class UniformApproximation:
    """Per-action coefficients for one loss over one statistics family.

    ``r`` maps an action to the length ``d + 1`` coefficient vector.
    ``lam`` and ``lam_tail`` are certified over the action space;
    ``delta`` is the certified residual on the audit grid.  ``loss``
    optionally keeps the loss object the coefficients were built for,
    and ``scale`` records any internal rescaling applied to admit it.
    """

    family: StatisticsFamily
    loss_id: str
    r: Callable
    lam: float
    lam_tail: float
    delta: float
    action_space: ActionSpace
    loss: object = None
    scale: float = 1.0
    _table: dict = field(default_factory=dict, repr=False)

    def coefficient_table(self) -> np.ndarray:
        """All coefficients, shape (n_actions, d + 1); cached."""
        if "R" not in self._table:
            rows = [np.asarray(self.r(t), dtype=np.float64) for t in self.action_space.actions]
            for row in rows:
                if row.shape != (self.family.d + 1,):
                    raise ShapeError(f"coefficient vector has shape {row.shape}, expected ({self.family.d + 1},)")
            self._table["R"] = np.stack(rows)
        return self._table["R"]


@dataclass(frozen=True, eq=False)
class Prediction:
    """A statistics estimate, clamped into [-1, 1] per entry."""

    v: np.ndarray

    def __post_init__(self):
        v = np.clip(np.asarray(self.v, dtype=np.float64), -1.0, 1.0)
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


def _as_vector(v, d: int) -> np.ndarray:
    vec = v.v if isinstance(v, Prediction) else np.asarray(v, dtype=np.float64)
    if vec.shape != (d,):
        raise ShapeError(f"prediction has shape {vec.shape}, expected ({d},)")
    return vec


def eval_lhat(ua: UniformApproximation, v, t) -> float:
    """Score ``r_0(t) + <r_{1:}(t), v>`` for one action."""
    ua.action_space.index(t)  # membership check
    vec = _as_vector(v, ua.family.d)
    r = np.asarray(ua.r(t), dtype=np.float64)
    return float(r[0] + r[1:] @ vec)


def choose_action(ua: UniformApproximation, v):
    """Argmin of the score over the action space, first index on ties."""
    vec = _as_vector(v, ua.family.d)
    R = ua.coefficient_table()
    scores = R[:, 0] + R[:, 1:] @ vec
    return ua.action_space.actions[int(np.argmin(scores))]


def verify_uniform_approx(ua: UniformApproximation, loss, y_grid, action_space: ActionSpace) -> tuple[float, float]:
    """Measure the residual and coefficient mass from scratch.

    Returns ``(max_error, max_lambda)`` where the error is the largest
    absolute gap between the coefficient expansion and ``loss.fn`` over
    ``y_grid x actions``, and the mass includes the constant term.
    """
    ys = np.asarray(y_grid, dtype=np.float64)
    if ys.size == 0 or len(action_space) == 0:
        raise DomainTooSmallError("verification needs non-empty grids")
    S = ua.family.evaluate(ys)
    max_err = 0.0
    max_lam = 0.0
    for t in action_space.actions:
        r = np.asarray(ua.r(t), dtype=np.float64)
        resid = r @ S - loss.fn(ys, t)
        max_err = max(max_err, float(np.max(np.abs(resid))))
        max_lam = max(max_lam, float(np.sum(np.abs(r))))
    return max_err, max_lam


def measure_lambdas(ua: UniformApproximation) -> tuple[float, float]:
    """Largest full and tail coefficient masses over the action space."""
    R = np.abs(ua.coefficient_table())
    return float(R.sum(axis=1).max()), float(R[:, 1:].sum(axis=1).max())


def boolean_family():
    """The two-statistic family for labels in {0, 1}, plus its builder.

    Any loss is represented exactly on boolean labels by interpolation:
    ``r_0(t) = loss(0, t)`` and ``r_1(t) = loss(1, t) - loss(0, t)``.
    The returned builder certifies over the two-point label grid.
    """
    family = StatisticsFamily("boolean", (lambda y: np.ones_like(y), lambda y: y), 1)

    def build(loss, action_space: ActionSpace) -> UniformApproximation:
        def r(t):
            l0 = float(loss.fn(np.array([0.0]), t)[0])
            l1 = float(loss.fn(np.array([1.0]), t)[0])
            return np.array([l0, l1 - l0])

        ua = UniformApproximation(family, loss.loss_id, r, 0.0, 0.0, 0.0, action_space, loss=loss)
        delta, lam = verify_uniform_approx(ua, loss, np.array([0.0, 1.0]), action_space)
        _, lam_tail = measure_lambdas(ua)
        return UniformApproximation(family, loss.loss_id, r, lam, lam_tail, delta, action_space, loss=loss)

    return family, build


def expected_loss(samples: Sequence[tuple[float, float]], loss, t) -> float:
    """Weighted mean of ``loss.fn`` over ``(label, weight)`` pairs."""
    if not samples:
        raise DomainTooSmallError("expected loss of an empty sample")
    ys = np.array([s[0] for s in samples], dtype=np.float64)
    ws = np.array([s[1] for s in samples], dtype=np.float64)
    if np.any(ws < 0) or ws.sum() <= 0:
        raise ShapeError("weights must be non-negative with positive total")
    return float(np.sum(ws * loss.fn(ys, t)) / ws.sum())


def moment_family(p: int) -> StatisticsFamily:
    """Statistics ``{1, y, y^2, ..., y^p}`` on labels in [0, 1]."""
    if p < 1:
        raise InvalidConfigError(f"moment family needs p >= 1, got {p}")

    def power(i):
        return lambda y: np.asarray(y) ** i

    stats = (lambda y: np.ones_like(np.asarray(y, dtype=float)),) + tuple(power(i) for i in range(1, p + 1))
    return StatisticsFamily(f"moments{p}", stats, p)


_TABLE_SCHEMA = 1


def write_family_table(ua: UniformApproximation, path) -> None:
    """Persist the per-action coefficient table as versioned TOML."""
    R = ua.coefficient_table()
    lines = [
        f"schema_version = {_TABLE_SCHEMA}",
        f'family = "{ua.family.name}"',
        f"d = {ua.family.d}",
        f'loss_id = "{ua.loss_id}"',
        f"lam = {ua.lam!r}",
        f"lam_tail = {ua.lam_tail!r}",
        f"delta = {ua.delta!r}",
        f"scale = {ua.scale!r}",
        "actions = [" + ", ".join(repr(float(t)) for t in ua.action_space.actions) + "]",
        "coefficients = [",
    ]
    for row in R:
        lines.append("    [" + ", ".join(repr(float(c)) for c in row) + "],")
    lines.append("]")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_family_table(path) -> UniformApproximation:
    """Load a coefficient table; the result acts but cannot re-verify."""
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - version dependent
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if data.get("schema_version") != _TABLE_SCHEMA:
        raise InvalidConfigError(f"unknown coefficient table schema: {data.get('schema_version')!r}")
    d = int(data["d"])
    family = StatisticsFamily(data["family"], None, d)
    actions = ActionSpace(tuple(float(t) for t in data["actions"]))
    R = np.asarray(data["coefficients"], dtype=np.float64)
    if R.shape != (len(actions), d + 1):
        raise ShapeError(f"coefficient table shape {R.shape} does not match actions x (d + 1)")
    lookup = {t: R[i] for i, t in enumerate(actions.actions)}
    return UniformApproximation(
        family,
        data["loss_id"],
        lambda t: lookup[t],
        float(data["lam"]),
        float(data["lam_tail"]),
        float(data["delta"]),
        actions,
        scale=float(data.get("scale", 1.0)),
    )
