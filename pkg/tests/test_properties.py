"""Property-based invariants across randomized inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mvreins import (
    MarginalIndemnity,
    MarketParams,
    Theorem2Params,
    build_theorem2,
    check_class_C,
    classify_partition,
    es_alpha,
    estimate_objective,
    lr_exponential,
    make_exponential,
    var_alpha,
)

_scales = st.floats(min_value=0.2, max_value=5.0, allow_nan=False)
_alphas = st.floats(min_value=0.01, max_value=0.95, allow_nan=False)


@given(scale=_scales, alpha=_alphas)
@settings(max_examples=60, deadline=None)
def test_es_dominates_var(scale, alpha):
    dist = make_exponential(scale)
    assert es_alpha(dist, alpha) >= var_alpha(dist, alpha) - 1e-9


@given(scale=_scales, alpha=_alphas)
@settings(max_examples=60, deadline=None)
def test_var_is_generalized_inverse(scale, alpha):
    dist = make_exponential(scale)
    v = var_alpha(dist, alpha)
    assert float(dist.cdf(np.array(v))) >= 1.0 - alpha - 1e-12
    if v > 1e-9:
        assert float(dist.cdf(np.array(v * (1 - 1e-9)))) < 1.0 - alpha + 1e-12


@given(slopes=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=4,
                       max_size=40))
@settings(max_examples=60, deadline=None)
def test_unit_slopes_characterize_the_class(slopes):
    q = np.asarray(slopes)
    ys = np.linspace(0.0, 4.0, q.size + 1)
    m = MarginalIndemnity(ys=ys, q=q)
    assert m.in_class_C()
    ok, _ = check_class_C(m, ys)
    assert ok


@given(excess=st.floats(min_value=0.01, max_value=0.8))
@settings(max_examples=30, deadline=None)
def test_super_unit_slope_leaves_the_class(excess):
    ys = np.linspace(0.0, 4.0, 9)
    q = np.full(8, 1.0 + excess)
    ok, _ = check_class_C(MarginalIndemnity(ys=ys, q=q), ys)
    assert not ok


@given(a_frac=st.floats(min_value=0.0, max_value=1.0),
       d_extra=st.floats(min_value=0.0, max_value=6.0),
       lam=st.floats(min_value=0.3, max_value=2.5),
       t=st.floats(min_value=0.0, max_value=10.0))
@settings(max_examples=40, deadline=None)
def test_mixed_regime_builds_stay_incentive_compatible(a_frac, d_extra, lam, t):
    mkt = MarketParams(gamma=0.5, theta=0.35, r=0.1, T=10.0, c=3.0)
    lr = lr_exponential(1.5, 2.0)
    part = classify_partition(lr, mkt, t, dist=make_exponential(2.0))
    y1 = part.breakpoints[0]
    contract = build_theorem2(
        part, Theorem2Params((a_frac * y1,), {1: y1 + d_extra}, lam), lr, mkt, t)
    grid = np.linspace(0.0, 40.0, 2001)
    ok, where = check_class_C(contract, grid)
    assert ok, f"class violation at {where}"


@given(data=st.lists(st.floats(min_value=-50.0, max_value=50.0), min_size=2,
                     max_size=200),
       gamma=st.floats(min_value=0.0, max_value=5.0))
@settings(max_examples=60, deadline=None)
def test_variance_penalty_never_raises_the_estimate(data, gamma):
    res = estimate_objective(np.asarray(data), gamma)
    assert res.objective <= res.mean + 1e-12
