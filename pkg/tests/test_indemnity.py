"""Contract representation, assembly and the no-sabotage check."""

import math

import numpy as np
import pytest

from mvreins import (
    ConstructionError,
    MarginalIndemnity,
    MarketParams,
    Theorem2Params,
    build_theorem2,
    check_class_C,
    classify_partition,
    dual_truncated,
    excess_of_loss,
    lambda_saturation_bounds,
    layer_contract,
    limited_loss,
    lr_constant,
    make_exponential,
    phi_lambda,
    phi_lambda_deriv,
    segments_to_json,
    solve_unconstrained,
)


# ---------------------------------------------------------------------------
# evaluation of standard shapes
# ---------------------------------------------------------------------------
class TestEvaluate:
    def test_excess_of_loss(self):
        I = excess_of_loss(1.0)
        assert I(0.5) == pytest.approx(0.0)
        assert I(3.0) == pytest.approx(2.0)

    def test_limited_loss(self):
        I = limited_loss(1.0)
        assert I(0.5) == pytest.approx(0.5)
        assert I(3.0) == pytest.approx(1.0)

    def test_layer(self):
        I = layer_contract(1.0, 2.0)
        assert I(1.5) == pytest.approx(0.5)
        assert I(5.0) == pytest.approx(1.0)

    def test_dual_truncated(self):
        I = dual_truncated(0.5, 2.0)
        ys = np.array([0.25, 1.0, 3.0])
        assert np.allclose(I(ys), [0.25, 0.5, 1.5])

    def test_slopes(self):
        I = layer_contract(1.0, 2.0)
        assert np.allclose(I.slope(np.array([0.5, 1.5, 4.0])), [0.0, 1.0, 0.0])


# ---------------------------------------------------------------------------
# the pointwise-optimal curve
# ---------------------------------------------------------------------------
class TestPhiLambda:
    def test_unit_ratio_cancels(self):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5)
        lr = lr_constant(1.0)
        ys = np.linspace(0.0, 5.0, 11)
        assert np.allclose(phi_lambda(3.0, ys, 1.0 + mkt.theta, lr, mkt), ys)

    def test_constant_shift(self):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        lr = lr_constant(1.0)
        ys = np.linspace(0.0, 5.0, 11)
        assert np.allclose(phi_lambda(2.0, ys, 0.0, lr, mkt), ys - 1.2)

    def test_mixed_regime_value_at_origin(self, case_iii):
        # direct arithmetic: -(1+theta) LR(0) / (gamma e^{r(T-t)}) at lambda 0
        expected = -(1.35 * 0.75) / (0.5 * math.exp(0.5))
        got = float(phi_lambda(5.0, 0.0, 0.0, case_iii.reins.lr, case_iii.mkt))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_slope_formula(self, case_iii):
        mkt = case_iii.mkt
        lr = case_iii.reins.lr
        ys = np.linspace(0.0, 12.0, 50)
        ge = mkt.gamma_eff(5.0)
        manual = 1.0 - (1.0 + mkt.theta) * np.asarray(lr.derivative(ys)) / ge
        assert np.allclose(phi_lambda_deriv(5.0, ys, lr, mkt), manual)


# ---------------------------------------------------------------------------
# parametric assembly on a partition
# ---------------------------------------------------------------------------
class TestBuildTheorem2:
    @pytest.fixture
    def homog_part(self):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5)
        part = classify_partition(lr_constant(1.0), mkt, 5.0,
                                  dist=make_exponential(1.0))
        return part, mkt

    def test_terminal_steep_is_limited_loss(self, case_i):
        # a single decreasing-ratio interval with kink d gives (y - d)_+
        part = classify_partition(case_i.reins.lr, case_i.mkt, 5.0,
                                  dist=make_exponential(2.0))
        assert part.labels == (1,)
        built = build_theorem2(part, Theorem2Params((), {0: 0.8}, 1.0),
                               case_i.reins.lr, case_i.mkt, 5.0)
        ref = excess_of_loss(0.8)
        ys = np.linspace(0.0, 20.0, 301)
        assert np.allclose(built(ys), ref(ys), atol=1e-12)
        assert built.kind_sequence == ("flat", "full")

    def test_terminal_moderate_clip_is_excess_of_loss(self, homog_part):
        part, mkt = homog_part
        lam = 0.6  # deductible ((1+theta) - lam) / gamma_eff
        built = build_theorem2(part, Theorem2Params((), {}, lam),
                               lr_constant(1.0), mkt, 5.0)
        d = (1.2 - lam) / mkt.gamma_eff(5.0)
        ys = np.linspace(0.0, 15.0, 301)
        assert np.allclose(built(ys), excess_of_loss(d)(ys), atol=1e-10)

    def test_mixed_regime_matches_family_formula(self, case_iii):
        part = classify_partition(case_iii.reins.lr, case_iii.mkt, 5.0,
                                  dist=make_exponential(2.0))
        y1 = part.breakpoints[0]
        a, d, lam = 3.0, y1 + 2.0, 1.1
        built = build_theorem2(part, Theorem2Params((a,), {1: d}, lam),
                               case_iii.reins.lr, case_iii.mkt, 5.0)
        lr = case_iii.reins.lr
        mkt = case_iii.mkt

        def family(y):
            y = np.asarray(y, dtype=float)
            phi = np.where(y <= y1,
                           phi_lambda(5.0, y, lam, lr, mkt), -np.inf)
            base = np.minimum.reduce([
                np.maximum.reduce([phi, a + y - y1, np.zeros_like(y)]), y,
                np.full_like(y, a)])
            return base + np.maximum(y - y1, 0.0) - np.maximum(y - d, 0.0)

        ys = np.linspace(0.0, 25.0, 1501)
        assert np.max(np.abs(built(ys) - family(ys))) < 1e-10

    def test_interior_layer_and_pause(self):
        # synthetic two-interval partitions exercise the interior cases
        from mvreins.partition import Partition
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        part = Partition(t=0.0, breakpoints=(4.0,), labels=(1, 2),
                         threshold=mkt.slope_threshold(0.0), ymax=20.0)
        built = build_theorem2(part, Theorem2Params((1.5,), {0: 1.0}, 10.0),
                               lr_constant(1.0), mkt, 0.0)
        # layer of height 1.5 starting at 1.0, then moderate-regime clip
        ys = np.array([0.5, 1.0, 2.0, 2.5, 3.5, 4.0])
        assert np.allclose(built(ys), [0.0, 0.0, 1.0, 1.5, 1.5, 1.5])

        part3 = Partition(t=0.0, breakpoints=(4.0,), labels=(3, 2),
                          threshold=mkt.slope_threshold(0.0), ymax=20.0)
        built3 = build_theorem2(part3, Theorem2Params((3.0,), {0: 2.0}, 10.0),
                                lr_constant(1.0), mkt, 0.0)
        # full to 2.0, pause of width 1.0, full to the edge
        ys = np.array([1.0, 2.0, 2.5, 3.0, 4.0])
        assert np.allclose(built3(ys), [1.0, 2.0, 2.0, 2.0, 3.0])

    def test_infeasible_increment_rejected(self, case_iii):
        part = classify_partition(case_iii.reins.lr, case_iii.mkt, 5.0,
                                  dist=make_exponential(2.0))
        y1 = part.breakpoints[0]
        with pytest.raises(ConstructionError):
            build_theorem2(part, Theorem2Params((y1 + 1.0,), {1: y1}, 1.0),
                           case_iii.reins.lr, case_iii.mkt, 5.0)
        with pytest.raises(ConstructionError):
            build_theorem2(part, Theorem2Params((-0.5,), {1: y1}, 1.0),
                           case_iii.reins.lr, case_iii.mkt, 5.0)

    def test_lambda_saturation_freezes_segments(self, case_iii):
        part = classify_partition(case_iii.reins.lr, case_iii.mkt, 5.0,
                                  dist=make_exponential(2.0))
        y1 = part.breakpoints[0]
        values = (4.0,)
        lam_lo, lam_hi = lambda_saturation_bounds(part, values, case_iii.reins.lr,
                                                  case_iii.mkt, 5.0)
        for lam_edge, shift in ((lam_hi, 1.0), (lam_lo, -1.0)):
            b1 = build_theorem2(part, Theorem2Params(values, {1: y1 + 1.0}, lam_edge),
                                case_iii.reins.lr, case_iii.mkt, 5.0)
            b2 = build_theorem2(part,
                                Theorem2Params(values, {1: y1 + 1.0}, lam_edge + shift),
                                case_iii.reins.lr, case_iii.mkt, 5.0)
            assert len(b1.segments) == len(b2.segments)
            for s1, s2 in zip(b1.segments, b2.segments):
                assert s1.kind == s2.kind
                assert s1.lo == pytest.approx(s2.lo, abs=1e-12)
                assert s1.start_value == pytest.approx(s2.start_value, abs=1e-12)

    def test_joins_are_continuous(self, case_iii):
        part = classify_partition(case_iii.reins.lr, case_iii.mkt, 5.0,
                                  dist=make_exponential(2.0))
        y1 = part.breakpoints[0]
        built = build_theorem2(part, Theorem2Params((2.5,), {1: y1 + 1.5}, 1.05),
                               case_iii.reins.lr, case_iii.mkt, 5.0)
        for left, right in zip(built.segments[:-1], built.segments[1:]):
            gap = abs(float(built(left.hi - 1e-13)) - float(built(right.lo + 1e-13)))
            assert gap < 1e-9


# ---------------------------------------------------------------------------
# class membership
# ---------------------------------------------------------------------------
class TestClassC:
    def test_excess_of_loss_passes(self):
        grid = np.linspace(0.0, 10.0, 1001)
        ok, where = check_class_C(excess_of_loss(1.0), grid)
        assert ok and where is None

    def test_double_slope_fails_immediately(self):
        grid = np.linspace(0.0, 10.0, 1001)
        ok, where = check_class_C(lambda y: np.minimum(2.0 * np.asarray(y), 1.0), grid)
        assert not ok
        assert where == pytest.approx(0.0)

    def test_unconstrained_decreasing_ratio_fails(self, case_i):
        # the relaxed optimum has slope 1 - (1+theta) LR'/gamma_eff > 1 where
        # the ratio decreases, so it cannot be incentive compatible
        _, contract = solve_unconstrained(case_i.dist, case_i.reins, case_i.mkt, 5.0)
        grid = np.linspace(0.0, 20.0, 2001)
        ok, where = check_class_C(contract, grid)
        assert not ok
        assert where is not None

    def test_retained_loss_monotone_for_built_contracts(self, case_iii):
        part = classify_partition(case_iii.reins.lr, case_iii.mkt, 5.0,
                                  dist=make_exponential(2.0))
        y1 = part.breakpoints[0]
        built = build_theorem2(part, Theorem2Params((3.0,), {1: y1 + 2.0}, 1.0),
                               case_iii.reins.lr, case_iii.mkt, 5.0)
        ys = np.linspace(0.0, 30.0, 3001)
        retained = ys - np.asarray(built(ys))
        assert np.all(np.diff(retained) >= -1e-10)


# ---------------------------------------------------------------------------
# marginal representation and serialization
# ---------------------------------------------------------------------------
class TestMarginalAndJson:
    def test_marginal_roundtrip(self):
        ys = np.linspace(0.0, 5.0, 51)
        q = np.clip(np.sin(np.linspace(0.0, 3.0, 50)) ** 2, 0.0, 1.0)
        m = MarginalIndemnity(ys=ys, q=q)
        assert m.in_class_C()
        ok, _ = check_class_C(m, ys)
        assert ok
        mid = 0.5 * (ys[3] + ys[4])
        expected = m.values[3] + q[3] * (mid - ys[3])
        assert m(mid) == pytest.approx(expected)

    def test_out_of_class_slopes_detected(self):
        ys = np.linspace(0.0, 2.0, 21)
        q = np.full(20, 1.4)
        m = MarginalIndemnity(ys=ys, q=q)
        assert not m.in_class_C()

    def test_segments_to_json(self):
        doc = segments_to_json(dual_truncated(1.0, 3.0))
        assert doc[0] == {"lo": 0.0, "hi": 1.0, "kind": "full", "anchor": 0.0}
        assert doc[-1]["hi"] is None
        kinds = [row["kind"] for row in doc]
        assert kinds == ["full", "flat", "full"]
