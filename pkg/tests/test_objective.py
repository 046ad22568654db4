"""Premium, static objective, Lagrangian, first-order function and residual."""

import math

import numpy as np
import pytest

from mvreins import (
    MarketParams,
    QuadratureSpec,
    dual_truncated,
    excess_of_loss,
    first_order_residual,
    full_indemnity,
    lagrangian_G,
    lemma_L,
    lemma_L_grid,
    lr_constant,
    make_exponential,
    objective_H,
    premium,
    reinsurer_es,
    reinsurer_from_lr,
    reinsurer_homogeneous,
    reinsurer_var,
    solve_general,
    var_alpha,
    zero_indemnity,
)


class Blend:
    """Convex combination of two contracts, for convexity checks."""

    def __init__(self, a, b, w):
        self.a, self.b, self.w = a, b, w

    def __call__(self, y):
        return self.w * np.asarray(self.a(y)) + (1 - self.w) * np.asarray(self.b(y))

    @property
    def breakpoints(self):
        return tuple(sorted(set(self.a.breakpoints) | set(self.b.breakpoints)))


@pytest.fixture(scope="module")
def exp1():
    return make_exponential(1.0)


@pytest.fixture(scope="module")
def homog_reins(exp1):
    return reinsurer_homogeneous(exp1)


# ---------------------------------------------------------------------------
# premium
# ---------------------------------------------------------------------------
class TestPremium:
    def test_full_cover_fair_price(self, exp1, homog_reins):
        assert premium(full_indemnity(), exp1, homog_reins, 0.0) == pytest.approx(
            exp1.mean, abs=1e-8)

    def test_var_atom_rule(self, exp1):
        reins = reinsurer_var(0.1)
        v = var_alpha(exp1, 0.1)
        a = 0.8
        contract = dual_truncated(a, v)
        assert premium(contract, exp1, reins, 0.25) == pytest.approx(1.25 * a)

    def test_es_layer_premium(self, exp1):
        # analytic: (1/alpha) int_VaR^inf S = 1 for the unit exponential
        reins = reinsurer_es(0.1)
        v = var_alpha(exp1, 0.1)
        contract = excess_of_loss(v)
        spec = QuadratureSpec(abs_tol=1e-9)
        assert premium(contract, exp1, reins, 0.25, spec=spec) == pytest.approx(
            1.25 * 1.0, abs=1e-7)

    def test_distortion_marginal_route_matches_lr_route(self, exp1):
        # ES has both a step ratio and a distortion: the two premium routes
        # must agree for incentive-compatible contracts
        from mvreins.beliefs import ReinsurerBelief, distortion_es
        contract = dual_truncated(0.7, 4.0)
        via_lr = premium(contract, exp1, reinsurer_es(0.1), 0.2)
        dist_only = ReinsurerBelief(kind="distortion", distortion=distortion_es(0.1))
        via_marginal = premium(contract, exp1, dist_only, 0.2)
        assert via_lr == pytest.approx(via_marginal, abs=1e-7)


# ---------------------------------------------------------------------------
# static objective
# ---------------------------------------------------------------------------
class TestObjectiveH:
    def test_zero_cover_is_pure_retention(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.0, r=0.0, T=10.0, c=1.5)
        # E[Y] + (gamma/2) E[Y^2] = 1 + 1 = 2 for the unit exponential
        assert objective_H(0.0, zero_indemnity(), exp1, homog_reins, mkt) == \
            pytest.approx(2.0, abs=1e-7)

    def test_full_cover_is_pure_premium(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.0, r=0.0, T=10.0, c=1.5)
        assert objective_H(0.0, full_indemnity(), exp1, homog_reins, mkt) == \
            pytest.approx(exp1.mean, abs=1e-7)

    def test_closed_form_deductible_beats_neighbors(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        h_opt = objective_H(0.0, excess_of_loss(0.2), exp1, homog_reins, mkt)
        assert h_opt < objective_H(0.0, excess_of_loss(0.4), exp1, homog_reins, mkt)
        assert h_opt < objective_H(0.0, zero_indemnity(), exp1, homog_reins, mkt)

    def test_excess_of_loss_matches_closed_form(self, exp1, homog_reins):
        # unit exponential: E[(Y-d)_+] = e^{-d}, E[Y^d] = 1 - e^{-d},
        # E[(Y^d)^2] = 2 - 2(d+1) e^{-d}
        mkt = MarketParams(gamma=1.3, theta=0.25, r=0.05, T=8.0, c=1.5)
        t, d = 3.0, 0.37
        ge = mkt.gamma_eff(t)
        expected = ((1 + mkt.theta) * math.exp(-d) + 1 - math.exp(-d)
                    + 0.5 * ge * (2 - 2 * (d + 1) * math.exp(-d)))
        got = objective_H(t, excess_of_loss(d), exp1, homog_reins, mkt)
        assert got == pytest.approx(expected, abs=1e-8)

    def test_convexity_in_contract(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        IA, IB = excess_of_loss(0.1), excess_of_loss(0.8)
        blend = Blend(IA, IB, 0.5)
        h_blend = objective_H(0.0, blend, exp1, homog_reins, mkt)
        h_mix = 0.5 * objective_H(0.0, IA, exp1, homog_reins, mkt) \
            + 0.5 * objective_H(0.0, IB, exp1, homog_reins, mkt)
        assert h_blend < h_mix - 1e-6  # strict: the contracts differ on a.s. sets


# ---------------------------------------------------------------------------
# Lagrangian
# ---------------------------------------------------------------------------
class TestLagrangian:
    def test_zero_contract_vanishes(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        for lam in (-1.0, 0.0, 2.5):
            assert lagrangian_G(0.0, zero_indemnity(), lam, exp1, homog_reins,
                                mkt) == pytest.approx(0.0, abs=1e-9)

    def test_full_cover_term_collection(self, exp1, homog_reins):
        # gamma_eff = 1: G = E[Y] + E[Y^2]/2 - E[Y^2] = E[Y] - E[Y^2]/2
        mkt = MarketParams(gamma=1.0, theta=0.0, r=0.0, T=10.0, c=1.5)
        got = lagrangian_G(10.0, full_indemnity(), 0.0, exp1, homog_reins, mkt)
        assert got == pytest.approx(exp1.mean - 0.5 * exp1.second_moment, abs=1e-7)

    def test_equilibrium_minimizes_unit_multiplier_dual(self, exp1, homog_reins):
        # G(., 1) at the solver output never exceeds G at random member
        # contracts of the admissible class
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5)
        entry = solve_general(exp1, homog_reins, mkt, 4.0)
        g_star = lagrangian_G(4.0, entry.contract, 1.0, exp1, homog_reins, mkt)
        rng = np.random.default_rng(7)
        ys = np.linspace(0.0, exp1.tail_cut, 41)
        for _ in range(20):
            q = rng.random(40)
            from mvreins import MarginalIndemnity
            rival = MarginalIndemnity(ys=ys, q=q)
            g_rival = lagrangian_G(4.0, rival, 1.0, exp1, homog_reins, mkt)
            assert g_star <= g_rival + 1e-7


# ---------------------------------------------------------------------------
# first-order function and residual
# ---------------------------------------------------------------------------
class TestLemmaL:
    def test_vanishes_in_the_tail(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        val = lemma_L(exp1.tail_cut, 0.0, excess_of_loss(0.2), 1.0, exp1,
                      homog_reins, mkt)
        assert abs(val) < 1e-9

    def test_term_collection_at_origin(self, exp1, homog_reins):
        # s=0, I=0, lambda=0, theta=0, gamma_eff=1: L = -E[Y] + 1 = 0
        mkt = MarketParams(gamma=1.0, theta=0.0, r=0.0, T=10.0, c=1.5)
        val = lemma_L(0.0, 10.0, zero_indemnity(), 0.0, exp1, homog_reins, mkt)
        assert val == pytest.approx(0.0, abs=1e-8)

    def test_sign_pattern_at_homogeneous_optimum(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        d = 0.2
        ys = np.linspace(0.0, exp1.tail_cut, 2001)
        L = lemma_L_grid(ys, 0.0, excess_of_loss(d), 1.0, exp1, homog_reins, mkt)
        assert np.all(L[ys < d] >= -1e-9)
        assert np.all(L[ys > d] <= 1e-9)

    def test_grid_and_pointwise_agree(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5)
        contract = excess_of_loss(0.31)
        ys = np.array([0.0, 0.2, 0.31, 1.0, 4.0])
        grid_vals = lemma_L_grid(ys, 2.0, contract, 0.9, exp1, homog_reins, mkt)
        for y, gv in zip(ys, grid_vals):
            assert gv == pytest.approx(
                lemma_L(float(y), 2.0, contract, 0.9, exp1, homog_reins, mkt),
                abs=1e-8)

    def test_derivative_identity(self, exp1):
        # dL/ds = (lambda + g s - g I(s) - (1+theta) LR(s)) f(s)
        reins = reinsurer_from_lr(lr_constant(1.0), q_dist=exp1)
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5)
        contract = excess_of_loss(0.4)
        lam, t = 0.85, 3.0
        ge = mkt.gamma_eff(t)
        for s in (0.1, 0.7, 2.0):
            h = 1e-5
            num = (lemma_L(s + h, t, contract, lam, exp1, reins, mkt)
                   - lemma_L(s - h, t, contract, lam, exp1, reins, mkt)) / (2 * h)
            analytic = ((lam + ge * s - ge * contract(s) - 1.2 * 1.0)
                        * float(exp1.pdf(np.array(s))))
            assert num == pytest.approx(analytic, rel=1e-5, abs=1e-10)


class TestFirstOrderResidual:
    def test_homogeneous_optimum_certifies(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        res = first_order_residual(0.0, excess_of_loss(0.2), 1.0, exp1,
                                   homog_reins, mkt)
        assert res <= 1e-6

    def test_perturbed_deductible_fails(self, exp1, homog_reins):
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        res = first_order_residual(0.0, excess_of_loss(0.3), 1.0, exp1,
                                   homog_reins, mkt)
        assert res > 1e-2

    def test_zero_cover_with_deep_multiplier(self, exp1, homog_reins):
        # lambda at the lower saturation bound makes L >= 0 everywhere, so a
        # zero contract is first-order consistent
        mkt = MarketParams(gamma=1.0, theta=0.2, r=0.0, T=10.0, c=1.5)
        lam_min = -mkt.gamma_eff(0.0) * exp1.tail_cut
        res = first_order_residual(0.0, zero_indemnity(), lam_min, exp1,
                                   homog_reins, mkt)
        assert res == pytest.approx(0.0, abs=1e-12)
