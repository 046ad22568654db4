"""Belief objects: distributions, likelihood ratios, distortions."""

import math

import numpy as np
import pytest

from mvreins import (
    DistortionFunction,
    check_reinsurer_consistency,
    distorted_survival,
    distortion_es,
    distortion_identity,
    distortion_var,
    es_alpha,
    integrate,
    lr_exponential,
    lr_piecewise_linear,
    make_exponential,
    reinsurer_from_lr,
    var_alpha,
)


# ---------------------------------------------------------------------------
# exponential claim distribution
# ---------------------------------------------------------------------------
class TestMakeExponential:
    def test_boundary_values(self):
        d = make_exponential(2.0)
        assert d.cdf(0.0) == pytest.approx(0.0)
        assert d.sf(0.0) == pytest.approx(1.0)

    def test_moments(self):
        d = make_exponential(2.0)
        assert d.mean == pytest.approx(2.0)
        assert d.second_moment == pytest.approx(8.0)

    def test_survival_closed_form(self):
        d = make_exponential(1.0)
        assert float(d.sf(math.log(10.0))) == pytest.approx(0.1, rel=1e-12)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            make_exponential(0.0)
        with pytest.raises(ValueError):
            make_exponential(-1.5)

    def test_atom_at_zero(self):
        d = make_exponential(1.0, atom_at_zero=0.3)
        assert float(d.cdf(0.0)) == pytest.approx(0.3)
        assert d.mean == pytest.approx(0.7)
        assert float(d.quantile(0.2)) == 0.0

    @pytest.mark.parametrize("scale", [0.5, 1.0, 2.0])
    def test_survival_integral_matches_moments(self, scale):
        d = make_exponential(scale)
        m1 = integrate(lambda y: np.asarray(d.sf(y)), 0.0, d.tail_cut)
        m2 = 2.0 * integrate(lambda y: y * np.asarray(d.sf(y)), 0.0, d.tail_cut)
        assert m1 == pytest.approx(d.mean, abs=1e-7)
        assert m2 == pytest.approx(d.second_moment, abs=1e-6)

    def test_cell_moments_telescoping(self):
        d = make_exponential(1.3)
        edges = np.linspace(0.0, d.tail_cut, 257)
        w, mu, nu = d.cell_moments(edges[:-1], edges[1:])
        assert float(np.sum(w)) == pytest.approx(float(d.cdf(d.tail_cut)), abs=1e-12)
        assert float(np.sum(mu)) == pytest.approx(d.mean, abs=1e-8)
        assert float(np.sum(nu)) == pytest.approx(d.second_moment, abs=1e-7)


# ---------------------------------------------------------------------------
# risk measures
# ---------------------------------------------------------------------------
class TestVarEs:
    def test_var_exponential(self):
        assert var_alpha(make_exponential(1.0), 0.1) == pytest.approx(math.log(10.0))
        assert var_alpha(make_exponential(2.0), 0.5) == pytest.approx(2.0 * math.log(2.0))

    def test_var_with_large_atom_is_zero(self):
        d = make_exponential(1.0, atom_at_zero=0.95)
        assert var_alpha(d, 0.1) == 0.0

    def test_es_exponential(self):
        assert es_alpha(make_exponential(1.0), 0.1) == pytest.approx(
            math.log(10.0) + 1.0, abs=1e-6)
        assert es_alpha(make_exponential(2.0), 0.5) == pytest.approx(
            2.0 * math.log(2.0) + 2.0, abs=1e-6)

    @pytest.mark.parametrize("scale,alpha", [(0.5, 0.05), (1.0, 0.1), (2.0, 0.4), (1.0, 0.9)])
    def test_es_dominates_var(self, scale, alpha):
        d = make_exponential(scale)
        assert es_alpha(d, alpha) >= var_alpha(d, alpha)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.3])
    def test_alpha_bounds(self, alpha):
        d = make_exponential(1.0)
        with pytest.raises(ValueError):
            var_alpha(d, alpha)
        with pytest.raises(ValueError):
            es_alpha(d, alpha)


# ---------------------------------------------------------------------------
# likelihood ratios
# ---------------------------------------------------------------------------
class TestLikelihoodRatio:
    def test_equal_scales_give_unit_ratio(self):
        lr = lr_exponential(1.5, 1.5)
        ys = np.linspace(0.0, 10.0, 11)
        assert np.allclose(lr(ys), 1.0)
        assert np.allclose(lr.derivative(ys), 0.0)

    def test_closed_form_at_zero(self):
        lr = lr_exponential(2.0, 1.0)
        assert float(lr(0.0)) == pytest.approx(2.0)
        assert float(lr.derivative(np.array(0.0))) == pytest.approx(-1.0)
        lr2 = lr_exponential(1.5, 2.0)
        assert float(lr2(0.0)) == pytest.approx(0.75)
        assert float(lr2.derivative(np.array(0.0))) == pytest.approx(0.125)

    @pytest.mark.parametrize("sp,sq", [(2.0, 1.0), (1.5, 2.0), (0.5, 1.0)])
    def test_derivative_sign_is_constant(self, sp, sq):
        lr = lr_exponential(sp, sq)
        ys = np.linspace(0.0, 20.0, 200)
        signs = np.sign(lr.derivative(ys))
        assert np.all(signs == np.sign(sq - sp))

    def test_rejects_bad_scales(self):
        with pytest.raises(ValueError):
            lr_exponential(0.0, 1.0)
        with pytest.raises(ValueError):
            lr_exponential(1.0, -2.0)

    def test_piecewise_linear(self):
        lr = lr_piecewise_linear([0.0, 1.0, 3.0], [1.0, 2.0, 0.5])
        assert float(lr(0.5)) == pytest.approx(1.5)
        assert float(lr.derivative(np.array(0.5))) == pytest.approx(1.0)
        assert float(lr.derivative(np.array(2.0))) == pytest.approx(-0.75)
        assert float(lr(10.0)) == pytest.approx(0.5)  # constant tail
        assert lr.breakpoints == (1.0, 3.0)


# ---------------------------------------------------------------------------
# distortions
# ---------------------------------------------------------------------------
class TestDistortions:
    def test_identity_distortion(self):
        d = make_exponential(1.0)
        g = distortion_identity()
        ys = np.linspace(0.0, 5.0, 11)
        assert np.allclose(distorted_survival(d, g, ys), d.sf(ys))

    def test_var_indicator(self):
        d = make_exponential(1.0)
        g = distortion_var(0.1)
        v = var_alpha(d, 0.1)
        assert float(distorted_survival(d, g, 0.5 * v)) == pytest.approx(1.0)
        assert float(distorted_survival(d, g, 1.5 * v)) == pytest.approx(0.0)

    def test_es_at_var_level(self):
        d = make_exponential(1.0)
        g = distortion_es(0.1)
        v = var_alpha(d, 0.1)
        assert float(distorted_survival(d, g, v)) == pytest.approx(1.0, rel=1e-9)

    def test_invalid_distortion_rejected(self):
        with pytest.raises(ValueError):
            DistortionFunction(g=lambda u: 0.5 * np.asarray(u), tag="broken")

    def test_convexity_on_grid(self):
        g = DistortionFunction(g=lambda u: np.asarray(u) ** 2, convex=True, tag="square")
        us = np.linspace(0.0, 1.0, 33)
        for u in us:
            for v in us:
                assert g(0.5 * (u + v)) <= 0.5 * (g(u) + g(v)) + 1e-12


# ---------------------------------------------------------------------------
# reinsurer measure consistency
# ---------------------------------------------------------------------------
class TestReinsurerConsistency:
    def test_lr_view_matches_closed_form_q(self):
        d = make_exponential(1.5)
        reins = reinsurer_from_lr(lr_exponential(1.5, 2.0), q_dist=make_exponential(2.0))
        gap = check_reinsurer_consistency(d, reins)
        assert gap <= 1e-6

    def test_mismatched_views_raise(self):
        d = make_exponential(1.5)
        reins = reinsurer_from_lr(lr_exponential(1.5, 2.0), q_dist=make_exponential(3.0))
        with pytest.raises(ValueError, match="disagree"):
            check_reinsurer_consistency(d, reins)

    def test_survival_via_generic_lr_quadrature(self):
        d = make_exponential(1.0)
        reins = reinsurer_from_lr(lr_exponential(1.0, 1.4))  # no closed-form Q attached
        s = float(reins.survival(d, np.array(2.0)))
        # truncation at the insurer's tail quantile leaves the reinsurer tail
        # mass exp(-tail_cut / 1.4) ~ 7e-8 unaccounted for without q_dist
        assert s == pytest.approx(math.exp(-2.0 / 1.4), abs=2e-7)
