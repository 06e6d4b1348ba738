"""Statistics families, score evaluation, action choice, tables."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from artifact.errors import (
    DomainTooSmallError,
    FamilyMismatchError,
    InvalidConfigError,
    ShapeError,
)
from artifact.stats import (
    ActionSpace,
    Prediction,
    StatisticsFamily,
    UniformApproximation,
    action_grid,
    boolean_family,
    choose_action,
    eval_lhat,
    expected_loss,
    measure_lambdas,
    moment_family,
    read_family_table,
    verify_uniform_approx,
    write_family_table,
)


class SimpleLoss:
    def __init__(self, fn, loss_id="test"):
        self.fn = fn
        self.loss_id = loss_id


SQUARED = SimpleLoss(lambda y, t: (np.asarray(y) - t) ** 2, "squared")


def squared_moment_ua(actions=None):
    # exact expansion of (y - t)^2 over {1, y, y^2}
    family = moment_family(2)
    space = actions or action_grid(11)

    def r(t):
        return np.array([t * t, -2.0 * t, 1.0])

    return UniformApproximation(family, "squared", r, 4.0, 3.0, 0.0, space, loss=SQUARED)


class TestFamilies:
    def test_moment_family_shape(self):
        fam = moment_family(3)
        vals = fam.evaluate(np.array([0.0, 0.5, 1.0]))
        assert vals.shape == (4, 3)
        assert_allclose(vals[0], 1.0)
        assert_allclose(vals[2], [0.0, 0.25, 1.0])

    def test_unbounded_statistic_rejected(self):
        with pytest.raises(InvalidConfigError):
            StatisticsFamily("bad", (lambda y: np.ones_like(y), lambda y: 2.0 * y), 1)

    def test_wrong_s0_rejected(self):
        with pytest.raises(InvalidConfigError):
            StatisticsFamily("bad", (lambda y: y, lambda y: y), 1)

    def test_count_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            StatisticsFamily("bad", (lambda y: np.ones_like(y),), 1)


class TestEvalLhat:
    def test_hand_arithmetic(self):
        ua = squared_moment_ua(ActionSpace((0.5,)))
        assert eval_lhat(ua, np.array([0.5, 0.3]), 0.5) == pytest.approx(0.05)

    def test_zero_vector_gives_constant_term(self):
        ua = squared_moment_ua(ActionSpace((0.3,)))
        assert eval_lhat(ua, np.zeros(2), 0.3) == pytest.approx(0.09)

    def test_glm_shape(self):
        # r_0 = g(t), r_i = -t_i reproduces g(t) - <v, t>
        family = moment_family(1)
        space = ActionSpace((0.25,))
        ua = UniformApproximation(
            family, "glm", lambda t: np.array([t * t / 2.0, -t]), 1.0, 1.0, 0.0, space
        )
        v = np.array([0.8])
        assert eval_lhat(ua, v, 0.25) == pytest.approx(0.25**2 / 2 - 0.8 * 0.25)

    def test_unknown_action_rejected(self):
        ua = squared_moment_ua(ActionSpace((0.5,)))
        with pytest.raises(FamilyMismatchError):
            eval_lhat(ua, np.zeros(2), 0.75)

    def test_prediction_wrapper_clamps(self):
        p = Prediction(np.array([2.0, -3.0]))
        assert_allclose(p.v, [1.0, -1.0])
        ua = squared_moment_ua(ActionSpace((1.0,)))
        # t^2 - 2 t v1 + v2 at t = 1, v = (1, -1)
        assert eval_lhat(ua, p, 1.0) == pytest.approx(-2.0)


class TestChooseAction:
    def test_single_action(self):
        ua = squared_moment_ua(ActionSpace((0.7,)))
        assert choose_action(ua, np.zeros(2)) == 0.7

    def test_squared_loss_tracks_first_moment(self):
        ua = squared_moment_ua(action_grid(11))
        assert choose_action(ua, np.array([0.62, 0.5])) == pytest.approx(0.6)

    def test_matches_exhaustive_scan(self):
        ua = squared_moment_ua(action_grid(31))
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = rng.uniform(-1, 1, size=2)
            best = min(
                range(31),
                key=lambda i: eval_lhat(ua, v, ua.action_space.actions[i]),
            )
            assert choose_action(ua, v) == ua.action_space.actions[best]

    def test_tie_breaks_to_smaller_index(self):
        family = moment_family(1)
        space = ActionSpace((0.1, 0.9))
        ua = UniformApproximation(family, "flat", lambda t: np.array([1.0, 0.0]), 1.0, 0.0, 0.0, space)
        assert choose_action(ua, np.array([0.5])) == 0.1

    def test_invariance_under_rescaling_and_shift(self):
        base = squared_moment_ua(action_grid(21))
        family = base.family
        shifted = UniformApproximation(
            family, "s", lambda t: np.array([5 * (t * t) + 3.0, 5 * -2 * t, 5.0]), 99.0, 99.0, 0.0, base.action_space
        )
        rng = np.random.default_rng(7)
        for _ in range(10):
            v = rng.uniform(-1, 1, size=2)
            assert choose_action(base, v) == choose_action(shifted, v)


class TestVerification:
    def test_exact_squared_family(self):
        ua = squared_moment_ua(action_grid(21))
        err, lam = verify_uniform_approx(ua, SQUARED, np.linspace(0, 1, 500), ua.action_space)
        assert err <= 1e-12
        assert lam <= 4.0 + 1e-12

    def test_lambda_split(self):
        ua = squared_moment_ua(action_grid(21))
        lam, lam_tail = measure_lambdas(ua)
        assert lam == pytest.approx(4.0)  # at t = 1: 1 + 2 + 1
        assert lam_tail == pytest.approx(3.0)

    def test_empty_grid_rejected(self):
        ua = squared_moment_ua()
        with pytest.raises(DomainTooSmallError):
            verify_uniform_approx(ua, SQUARED, np.array([]), ua.action_space)


class TestBooleanFamily:
    def test_squared_loss_coefficients(self):
        _, build = boolean_family()
        ua = build(SQUARED, ActionSpace((0.3,)))
        r = ua.r(0.3)
        assert r[0] == pytest.approx(0.09)
        assert r[1] == pytest.approx(0.4)

    def test_constant_loss_has_no_slope(self):
        _, build = boolean_family()
        const = SimpleLoss(lambda y, t: np.ones_like(np.asarray(y, dtype=float)), "const")
        ua = build(const, ActionSpace((0.0, 1.0)))
        assert ua.r(0.0)[1] == 0.0

    def test_exact_on_boolean_labels(self):
        _, build = boolean_family()
        ua = build(SQUARED, action_grid(11))
        err, _ = verify_uniform_approx(ua, SQUARED, np.array([0.0, 1.0]), ua.action_space)
        # interpolation is exact up to one float cancellation
        assert err <= 1e-15
        assert ua.delta <= 1e-15

    def test_lambda_within_2c(self):
        _, build = boolean_family()
        ua = build(SQUARED, action_grid(11))  # C = 1 on [0,1]^2
        assert ua.lam <= 2.0 + 1e-12


class TestExpectedLoss:
    def test_single_sample(self):
        assert expected_loss([(0.2, 1.0)], SQUARED, 0.5) == pytest.approx(0.09)

    def test_two_point_mean(self):
        assert expected_loss([(0.0, 1.0), (1.0, 1.0)], SQUARED, 0.5) == pytest.approx(0.25)

    def test_weights_normalize(self):
        a = expected_loss([(0.1, 2.0), (0.9, 2.0)], SQUARED, 0.4)
        b = expected_loss([(0.1, 1.0), (0.9, 1.0)], SQUARED, 0.4)
        assert a == pytest.approx(b)

    def test_empty_rejected(self):
        with pytest.raises(DomainTooSmallError):
            expected_loss([], SQUARED, 0.5)
        with pytest.raises(ShapeError):
            expected_loss([(0.5, -1.0)], SQUARED, 0.5)


class TestApproxStatsProperty:
    def test_score_of_mean_matches_mean_loss(self):
        # exact family: scoring the statistic mean equals the mean loss
        ua = squared_moment_ua(action_grid(21))
        rng = np.random.default_rng(12)
        ys = rng.uniform(0, 1, size=200)
        stats_mean = ua.family.evaluate(ys)[1:].mean(axis=1)
        for t in ua.action_space.actions:
            emp = float(np.mean(SQUARED.fn(ys, t)))
            assert eval_lhat(ua, stats_mean, t) == pytest.approx(emp, abs=1e-12)


class TestTables:
    def test_round_trip(self, tmp_path):
        ua = squared_moment_ua(action_grid(11))
        path = tmp_path / "table.toml"
        write_family_table(ua, path)
        back = read_family_table(path)
        assert back.family.d == 2
        assert back.lam == ua.lam and back.delta == ua.delta
        v = np.array([0.62, 0.5])
        assert choose_action(back, v) == choose_action(ua, v)
        assert eval_lhat(back, v, back.action_space.actions[3]) == pytest.approx(
            eval_lhat(ua, v, ua.action_space.actions[3])
        )

    def test_table_only_family_cannot_evaluate_labels(self, tmp_path):
        ua = squared_moment_ua(action_grid(5))
        path = tmp_path / "table.toml"
        write_family_table(ua, path)
        back = read_family_table(path)
        with pytest.raises(FamilyMismatchError):
            back.family.evaluate(np.array([0.5]))

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("schema_version = 99\n")
        with pytest.raises(InvalidConfigError):
            read_family_table(path)
