"""Outer training loop: boost each statistic, then recalibrate.

The trainer alternates a per-dimension multiaccuracy pass with a
calibration check; when the estimated calibration error of the binned
predictor is small enough it stops and returns the binned predictor,
otherwise it recalibrates to bin means and goes around again.  On
finite domains every quantity (calibration error, correlations,
potentials) is computed exactly, so the loop's progress inequalities
can be audited rather than trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calibrate import (
    BinTable,
    LabelSource,
    aggregate_exact,
    discretize_predictor,
    est_ece,
    exact_ece,
    recal,
)
from .errors import (
    FamilyMismatchError,
    InvalidConfigError,
    NonTerminationError,
    ShapeError,
)
from .multiacc import (
    ExactWeakLearner,
    SampledWeakLearner,
    TestClass,
    WeakLearnerSpec,
    ma_loop,
    measure_multiaccuracy,
)
from .stats import UniformApproximation, choose_action, verify_uniform_approx
from .synthdist import SyntheticDistribution

_EQ_TOL = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Derived thresholds for one training run.

    ``alpha`` is the per-dimension correlation target, ``beta`` the
    calibration target, ``delta_bin`` the bin width, and ``rho`` /
    ``sigma`` the weak-learner thresholds in normalized test units
    (raw thresholds divided by ``kappa``).
    """

    epsilon: float
    d: int
    lam: float
    kappa: float
    alpha: float
    beta: float
    delta_bin: float
    rho: float
    sigma: float
    mode: str = "exact"
    seed: int = 0
    max_loops: int | None = None
    ma_cap: int | None = None
    est_repeats: int = 1
    est_n_override: int | None = None
    c_est: float = 1.0
    sample_budget: int = 10**8

    def __post_init__(self):
        if self.epsilon <= 0 or self.d < 1 or self.lam <= 0 or self.kappa < 1.0:
            raise InvalidConfigError("need epsilon > 0, d >= 1, lam > 0, kappa >= 1")
        if self.mode not in ("exact", "sample"):
            raise InvalidConfigError(f"unknown training mode {self.mode!r}")
        if abs(self.alpha - self.epsilon / (6 * self.d)) > _EQ_TOL:
            raise InvalidConfigError("alpha must equal epsilon / 6d")
        if abs(self.beta - self.epsilon / (6 * self.lam)) > _EQ_TOL:
            raise InvalidConfigError("beta must equal epsilon / 6 lam")
        if self.delta_bin != self.beta * self.beta / 32.0:
            raise InvalidConfigError("bin width must equal beta^2 / 32 exactly")
        if not (0.0 < self.sigma <= self.rho):
            raise InvalidConfigError("need 0 < sigma <= rho")
        if self.rho > self.epsilon / (12 * self.lam * self.kappa) + _EQ_TOL:
            raise InvalidConfigError("rho may not exceed epsilon / 12 lam (normalized)")
        if self.rho > (self.alpha / self.kappa - self.delta_bin) / 2.0 + _EQ_TOL:
            raise InvalidConfigError("rho too large to certify the accuracy target after binning")

    @classmethod
    def derive(cls, epsilon: float, d: int, lam: float, kappa: float = 1.0, **kw) -> "TrainConfig":
        """Fill in the threshold chain from the headline target."""
        alpha = epsilon / (6 * d)
        beta = epsilon / (6 * lam)
        delta_bin = beta * beta / 32.0
        rho = min(epsilon / (12 * lam * kappa), (alpha / kappa - delta_bin) / 2.0)
        if rho <= 0:
            raise InvalidConfigError(
                f"derived weak-learner threshold is not positive (epsilon={epsilon}, d={d}, lam={lam}, kappa={kappa})"
            )
        sigma = rho if kw.get("mode", "exact") == "exact" else rho / 2.0
        return cls(epsilon, d, lam, kappa, alpha, beta, delta_bin, rho, sigma, **kw)

    @property
    def ma_target(self) -> float:
        """Normalized per-dimension accuracy passed to the boosting loop."""
        return self.alpha / self.kappa - self.delta_bin


@dataclass(frozen=True)
class RecalEvent:
    """One recalibration: exact potentials and the gap that fired it."""

    potential_before: float | None
    potential_after: float | None
    ece_disc: float
    delta_bin: float


@dataclass(frozen=True)
class LoopRecord:
    index: int
    ma_iterations: tuple
    wl_calls: int
    est_value: float
    potential_after_ma: float | None
    recal: RecalEvent | None


@dataclass
class TrainLog:
    """Append-only trace of a training run."""

    p0_potential: float | None
    loop_bound: float | None
    records: list = field(default_factory=list)

    @property
    def loops(self) -> int:
        return len(self.records)

    @property
    def total_wl_calls(self) -> int:
        return sum(r.wl_calls for r in self.records)

    @property
    def recal_events(self) -> list:
        return [r.recal for r in self.records if r.recal is not None]


@dataclass(frozen=True, eq=False)
class OmniModel:
    """Trained statistic predictor plus per-loss post-processing inputs."""

    family: object
    config: TrainConfig
    tc: TestClass
    xs: tuple
    q: np.ndarray
    bin_table: BinTable
    log: TrainLog
    name: str = "omni"

    def __post_init__(self):
        if self.q.shape != (self.family.d, len(self.xs)):
            raise ShapeError(f"prediction table {self.q.shape} does not match (d, n)")
        q = np.asarray(self.q, dtype=np.float64)
        q.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.xs)})

    def predict(self, x) -> np.ndarray:
        try:
            return self.q[:, self._index[x]]
        except (KeyError, TypeError):
            raise InvalidConfigError(f"point {x!r} was not in the training domain") from None


def _check_family_match(a, b) -> None:
    if a is b:
        return
    if getattr(a, "name", None) != getattr(b, "name", None) or getattr(a, "d", None) != getattr(b, "d", None):
        raise FamilyMismatchError(
            f"family {getattr(a, 'name', a)!r} (d={getattr(a, 'd', '?')}) does not match "
            f"{getattr(b, 'name', b)!r} (d={getattr(b, 'd', '?')})"
        )


def _potential(weights, p_star, q) -> float:
    diff = p_star - q
    return float(np.sum(weights * diff * diff))


def learn_omni(
    p0,
    config: TrainConfig,
    dist: SyntheticDistribution,
    family,
    tc: TestClass,
) -> OmniModel:
    """Train until the binned predictor is both accurate and calibrated.

    Per loop: one boosting pass per statistic dimension at the binning-
    adjusted accuracy, then a calibration estimate at accuracy beta/4;
    estimates above 3 beta / 4 trigger recalibration to bin means,
    anything lower ends training with the bin-cornered predictor.
    """
    if family.d != config.d:
        raise InvalidConfigError(f"family dimension {family.d} does not match config d={config.d}")
    if abs(tc.kappa - config.kappa) > 1e-9:
        raise InvalidConfigError(f"test-class factor {tc.kappa} does not match config kappa={config.kappa}")
    exact = config.mode == "exact"
    n = dist.n_points
    q = np.zeros((config.d, n)) if p0 is None else np.array(p0, dtype=np.float64)
    if q.shape != (config.d, n):
        raise ShapeError(f"initial predictor shape {q.shape} does not match ({config.d}, {n})")
    p_star = dist.stat_means(family)
    M = tc.matrix(dist.xs)
    w = dist.x_weights
    source = LabelSource(dist, family, seed=config.seed)
    if not exact and config.est_n_override is None:
        # fail before any training work if the estimator can never run
        from .calibrate import default_sample_size

        default_sample_size(config.d, config.delta_bin, config.beta / 4.0, config.c_est, config.sample_budget)

    pot0 = _potential(w, p_star, q) if exact else None
    loop_bound = 1.0 + 8.0 * pot0 / config.beta**2 if exact else None
    log = TrainLog(p0_potential=pot0, loop_bound=loop_bound)
    cap = config.max_loops
    if cap is None:
        cap = math.ceil(loop_bound) + 1 if loop_bound is not None else 64

    for loop in range(1, cap + 1):
        iters = []
        calls = 0
        for i in range(config.d):
            if exact:
                wl = ExactWeakLearner(M, w, p_star[i], rho=config.rho)
            else:
                spec = WeakLearnerSpec(config.rho, config.sigma, seed=config.seed * 1009 + loop * 37 + i)
                wl = SampledWeakLearner(tc, spec, dist, family, dim=i)
            res = ma_loop(q[i], wl, alpha=config.ma_target, sigma=config.sigma, cap=config.ma_cap)
            q[i] = res.q
            iters.append(res.iterations)
            calls += res.wl_calls
        pot_ma = _potential(w, p_star, q) if exact else None
        est = est_ece(
            q,
            config.delta_bin,
            config.beta / 4.0,
            source,
            n_override=config.est_n_override,
            repeats=config.est_repeats,
            exhaustive=exact,
            c_est=config.c_est,
            budget=config.sample_budget,
        )
        if est > 3.0 * config.beta / 4.0:
            ece_disc = est if not exact else exact_ece(discretize_predictor(q, config.delta_bin), dist, family)
            q_new = recal(
                q,
                config.delta_bin,
                source,
                n_override=config.est_n_override,
                exhaustive=exact,
                c_est=config.c_est,
                budget=config.sample_budget,
            )
            event = RecalEvent(
                potential_before=pot_ma,
                potential_after=_potential(w, p_star, q_new) if exact else None,
                ece_disc=ece_disc,
                delta_bin=config.delta_bin,
            )
            log.records.append(LoopRecord(loop, tuple(iters), calls, est, pot_ma, event))
            q = q_new
        else:
            log.records.append(LoopRecord(loop, tuple(iters), calls, est, pot_ma, None))
            q_final = discretize_predictor(q, config.delta_bin)
            table = aggregate_exact(q, config.delta_bin, dist, family)
            return OmniModel(family, config, tc, dist.xs, q_final, table, log, name=dist.name)
    raise NonTerminationError(
        f"training did not converge within {cap} loops", trace=list(log.records)
    )


def omnipredict(model: OmniModel, ua: UniformApproximation, x):
    """Post-process the trained prediction for one loss; no data access."""
    _check_family_match(ua.family, model.family)
    return choose_action(ua, model.predict(x))


@dataclass(frozen=True)
class RegretRow:
    loss_id: str
    omni_loss: float
    best_name: str
    best_loss: float
    regret: float
    delta_support: float
    bound: float | None
    within_bound: bool | None
    epsilon: float | None
    within_epsilon: bool | None
    stderr: float | None = None


def _omni_actions(model: OmniModel, ua: UniformApproximation) -> list:
    return [choose_action(ua, model.q[:, i]) for i in range(len(model.xs))]


def evaluate_omni(
    model: OmniModel,
    uas: Sequence[UniformApproximation],
    hypotheses: Sequence[tuple[str, object]],
    dist: SyntheticDistribution,
    *,
    tc: TestClass | None = None,
    epsilon: float | None = None,
    mode: str = "exact",
    n: int = 200000,
    seed: int = 0,
) -> list[RegretRow]:
    """Per-loss regret of the model against the best single hypothesis.

    Exact mode enumerates; sampled mode reports a standard error.  When
    a test class is supplied the composite regret bound
    3 (d alpha + lam beta + delta) is evaluated with measured constants
    and each row records whether it held.
    """
    if tuple(dist.xs) != tuple(model.xs):
        raise InvalidConfigError("evaluation distribution does not cover the training domain")
    alpha_exact = beta_exact = None
    if tc is not None:
        alpha_exact = tc.kappa * measure_multiaccuracy(model.q, model.family, tc, dist)
        beta_exact = exact_ece(model.q, dist, model.family)
    rows = []
    rng = np.random.default_rng(seed)
    for ua in uas:
        _check_family_match(ua.family, model.family)
        actions = _omni_actions(model, ua)
        delta_support, _ = verify_uniform_approx(ua, ua.loss, dist.y_values, ua.action_space)
        if mode == "exact":
            omni_loss = dist.expected_action_loss(ua.loss, actions)
            per_c = [(name, dist.expected_action_loss(ua.loss, [fn(x) for x in dist.xs])) for name, fn in hypotheses]
            stderr = None
        elif mode == "sample":
            idx, ys = dist.sample(n, rng)
            vals = np.array([float(ua.loss.fn(np.array([y]), actions[i])[0]) for i, y in zip(idx, ys)])
            omni_loss = float(vals.mean())
            stderr = float(vals.std(ddof=1) / math.sqrt(n))
            per_c = []
            for name, fn in hypotheses:
                cv = np.array([float(ua.loss.fn(np.array([y]), fn(dist.xs[i]))[0]) for i, y in zip(idx, ys)])
                per_c.append((name, float(cv.mean())))
        else:
            raise InvalidConfigError(f"unknown mode {mode!r}")
        best_name, best_loss = min(per_c, key=lambda kv: kv[1])
        regret = omni_loss - best_loss
        bound = within = None
        if tc is not None:
            bound = 3.0 * (model.config.d * alpha_exact + ua.lam_tail * beta_exact + delta_support)
            within = bool(regret <= bound + 1e-9)
        rows.append(
            RegretRow(
                ua.loss_id,
                omni_loss,
                best_name,
                best_loss,
                regret,
                delta_support,
                bound,
                within,
                epsilon,
                None if epsilon is None else bool(regret <= epsilon + 1e-9),
                stderr,
            )
        )
    return rows


@dataclass(frozen=True)
class IndistReport:
    """Exact audit of the simulation-distribution inequalities."""

    loss_id: str
    identity_gap: float
    sim_loss_gap: float
    sim_loss_bound: float
    cma_gap: float
    cma_bound: float
    alpha_exact: float
    beta_exact: float

    @property
    def ok(self) -> bool:
        return (
            self.identity_gap <= 1e-9
            and self.sim_loss_gap <= self.sim_loss_bound + 1e-9
            and self.cma_gap <= self.cma_bound + 1e-9
        )


def indistinguishability_check(
    model: OmniModel,
    ua: UniformApproximation,
    dist: SyntheticDistribution,
    hypotheses: Sequence[tuple[str, object]] = (),
    tc: TestClass | None = None,
) -> IndistReport:
    """Exact gaps behind the regret chain, with measured constants.

    The three parts: swapping true labels for bin-resampled ones is an
    identity for linear scores; replacing label statistics with the
    prediction costs at most the coefficient mass times the exact
    calibration error; and for hypothesis-indexed actions the cost is
    at most d times the exact multiaccuracy plus the calibration term.
    """
    from .calibrate import simulate_dtilde

    _check_family_match(ua.family, model.family)
    if tuple(dist.xs) != tuple(model.xs):
        raise InvalidConfigError("distribution does not cover the training domain")
    p = model.q
    w = dist.x_weights
    fam = model.family
    ms = dist.stat_means(fam)
    dt = simulate_dtilde(p, dist)
    mt = dt.stat_means(fam)
    beta_exact = exact_ece(p, dist, fam)
    alpha_exact = tc.kappa * measure_multiaccuracy(p, fam, tc, dist) if tc is not None else 0.0

    def score(stat_cols, action_list) -> float:
        total = 0.0
        cache: dict = {}
        for i, t in enumerate(action_list):
            if t not in cache:
                cache[t] = np.asarray(ua.r(t), dtype=np.float64)
            r = cache[t]
            total += w[i] * (r[0] + r[1:] @ stat_cols[:, i])
        return total

    k_actions = _omni_actions(model, ua)
    lhs = score(ms, k_actions)
    rhs = score(mt, k_actions)
    plug = score(p, k_actions)
    identity_gap = abs(lhs - rhs)
    sim_loss_gap = abs(rhs - plug)
    cma_gap = abs(lhs - plug)
    for name, fn in hypotheses:
        acts = [fn(x) for x in dist.xs]
        cma_gap = max(cma_gap, abs(score(ms, acts) - score(p, acts)))
    return IndistReport(
        ua.loss_id,
        identity_gap,
        sim_loss_gap,
        ua.lam_tail * beta_exact,
        cma_gap,
        model.config.d * alpha_exact + ua.lam_tail * beta_exact,
        alpha_exact,
        beta_exact,
    )
