"""Static per-time functionals: premium, objective, Lagrangian, first-order checks.

For a contract I at decision time t the insurer's static objective is

    H(t, I) = (1 + theta) E_Q[I(Y)] + E[Y - I(Y)] + (g_t / 2) E[(Y - I(Y))^2],

with g_t = gamma e^{r(T-t)}.  Its Lagrangian relaxation G and the running
first-order function L drive both the solvers and the certification of
their output: the optimal slope is 1 where L < 0, 0 where L > 0, and free
on the zero set.
"""

from __future__ import annotations

import numpy as np

from .beliefs import (
    ClaimDistribution,
    ReinsurerBelief,
    check_reinsurer_consistency,
    effective_ymax,
    var_alpha,
)
from .market import MarketParams
from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec, integrate, integrate_many

__all__ = [
    "premium",
    "q_expectation",
    "retained_moments",
    "objective_H",
    "lagrangian_G",
    "lemma_L",
    "lemma_L_grid",
    "first_order_residual",
    "collect_breakpoints",
]

RESIDUAL_BAND = 1e-8  # |L| below this accepts any slope (free-set freedom)


def _contract_breakpoints(contract, ymax: float) -> tuple[float, ...]:
    bks = getattr(contract, "breakpoints", ())
    if callable(bks):
        bks = bks(ymax)
    return tuple(b for b in bks if 0.0 < b < ymax)


def collect_breakpoints(contract, dist: ClaimDistribution,
                        reins: ReinsurerBelief | None, ymax: float) -> tuple[float, ...]:
    """Kink locations of contract, claim distribution and reinsurer measure."""
    bks = list(_contract_breakpoints(contract, ymax))
    bks.extend(b for b in dist.breakpoints if 0.0 < b < ymax)
    if reins is not None:
        if reins.lr is not None:
            bks.extend(b for b in reins.lr.breakpoints if 0.0 < b < ymax)
        if reins.kind in ("var", "es") and reins.alpha is not None:
            v = var_alpha(dist, reins.alpha)
            if 0.0 < v < ymax:
                bks.append(v)
    return tuple(sorted(set(bks)))


def q_expectation(contract, dist: ClaimDistribution, reins: ReinsurerBelief,
                  spec: QuadratureSpec = DEFAULT_QUADRATURE,
                  ymax: float | None = None) -> float:
    """E_Q[I(Y)] under the reinsurer's measure.

    VaR pricing concentrates all reinsurer mass at the quantile, so the
    expectation is a point evaluation there; that atom is never pushed
    through likelihood-ratio quadrature.
    """
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    if (reins.lr is not None and (reins.distortion is not None or reins.q_dist is not None)
            and not getattr(reins, "_consistency_ok", False)):
        check_reinsurer_consistency(dist, reins)  # raises on a measure mismatch
        object.__setattr__(reins, "_consistency_ok", True)
    bks = collect_breakpoints(contract, dist, reins, ymax)
    if reins.kind == "var":
        return float(contract(var_alpha(dist, reins.alpha)))
    if reins.q_dist is not None:
        qd = reins.q_dist
        out = integrate(lambda y: np.asarray(contract(y), dtype=float) * qd.pdf(y),
                        0.0, ymax, bks, spec)
        return out  # contract(0) = 0 kills any atom contribution at zero
    if reins.lr is not None or reins.kind == "es":
        lr = reins.lr_for(dist)
        return integrate(
            lambda y: np.asarray(contract(y), dtype=float) * lr(y) * dist.pdf(y),
            0.0, ymax, bks, spec)
    # distortion-only: E_Q[I] = integral of q(s) g(S(s)) ds for I in the
    # no-sabotage class (marginal representation)
    slope = getattr(contract, "slope", None)
    if slope is None:
        raise ValueError("distortion-only pricing needs a contract with marginal slopes")
    g = reins.distortion
    return integrate(
        lambda y: np.asarray(slope(y), dtype=float) * np.asarray(g(dist.sf(y)), dtype=float),
        0.0, ymax, bks, spec)


def premium(contract, dist: ClaimDistribution, reins: ReinsurerBelief, theta: float,
            spec: QuadratureSpec = DEFAULT_QUADRATURE, ymax: float | None = None) -> float:
    """Reinsurance premium rate (1 + theta) E_Q[I(Y)]."""
    return (1.0 + theta) * q_expectation(contract, dist, reins, spec, ymax)


def retained_moments(contract, dist: ClaimDistribution,
                     reins: ReinsurerBelief | None = None,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE,
                     ymax: float | None = None) -> tuple[float, float]:
    """(E[Y - I(Y)], E[(Y - I(Y))^2]) under the insurer's belief."""
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    bks = collect_breakpoints(contract, dist, reins, ymax)

    def stacked(y):
        r = y - np.asarray(contract(y), dtype=float)
        f = np.asarray(dist.pdf(y), dtype=float)
        return np.vstack([r * f, r * r * f])

    vals = integrate_many(stacked, 0.0, ymax, 2, bks, spec)
    # the atom at zero contributes nothing: Y = 0 and I(0) = 0 there
    return float(vals[0]), float(vals[1])


def objective_H(t: float, contract, dist: ClaimDistribution, reins: ReinsurerBelief,
                mkt: MarketParams, spec: QuadratureSpec = DEFAULT_QUADRATURE,
                ymax: float | None = None) -> float:
    """Static objective whose per-time minimizer is the equilibrium contract."""
    ge = mkt.gamma_eff(t)
    eq = q_expectation(contract, dist, reins, spec, ymax)
    r1, r2 = retained_moments(contract, dist, reins, spec, ymax)
    return (1.0 + mkt.theta) * eq + r1 + 0.5 * ge * r2


def lagrangian_G(t: float, contract, lam: float, dist: ClaimDistribution,
                 reins: ReinsurerBelief, mkt: MarketParams,
                 spec: QuadratureSpec = DEFAULT_QUADRATURE,
                 ymax: float | None = None) -> float:
    """Dual functional (1+theta) E_Q[I] + (g_t/2) E[I^2] - g_t E[YI] - lambda E[I]."""
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    ge = mkt.gamma_eff(t)
    eq = q_expectation(contract, dist, reins, spec, ymax)
    bks = collect_breakpoints(contract, dist, reins, ymax)

    def stacked(y):
        iv = np.asarray(contract(y), dtype=float)
        f = np.asarray(dist.pdf(y), dtype=float)
        return np.vstack([iv * f, y * iv * f, iv * iv * f])

    ei, eyi, ei2 = integrate_many(stacked, 0.0, ymax, 3, bks, spec)
    return (1.0 + mkt.theta) * eq + 0.5 * ge * ei2 - ge * eyi - lam * ei


def lemma_L(s: float, t: float, contract, lam: float, dist: ClaimDistribution,
            reins: ReinsurerBelief, mkt: MarketParams,
            spec: QuadratureSpec = DEFAULT_QUADRATURE,
            ymax: float | None = None) -> float:
    """First-order function L(s) = int_s^inf (g_t I - g_t y - lambda) dF + (1+theta) S_Q(s)."""
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    ge = mkt.gamma_eff(t)
    bks = collect_breakpoints(contract, dist, reins, ymax)
    tail = 0.0
    if s < ymax:
        tail = integrate(
            lambda y: (ge * np.asarray(contract(y), dtype=float) - ge * y - lam)
            * np.asarray(dist.pdf(y), dtype=float),
            float(s), ymax, bks, spec)
    sq = float(reins.survival(dist, np.array(float(s))))
    return tail + (1.0 + mkt.theta) * sq


def _suffix_integrals(fn, edges: np.ndarray, order: int = 6) -> np.ndarray:
    """Vectorized suffix integrals int_{edges[k]}^{edges[-1]} fn(y) dy for all k.

    Per-cell Gauss of fixed order; callers align edges with integrand kinks.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = fn(nodes.ravel()).reshape(nodes.shape)
    cells = (vals * w[None, :]).sum(axis=1) * half
    suff = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    return suff


def lemma_L_grid(ys: np.ndarray, t: float, contract, lam: float, dist: ClaimDistribution,
                 reins: ReinsurerBelief, mkt: MarketParams,
                 ymax: float | None = None) -> np.ndarray:
    """L evaluated on a whole grid at once via suffix integration."""
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    ge = mkt.gamma_eff(t)
    ys = np.asarray(ys, dtype=float)
    base = np.linspace(0.0, ymax, 2049)
    bks = np.asarray(collect_breakpoints(contract, dist, reins, ymax), dtype=float)
    edges = np.unique(np.concatenate([ys, base, bks, [ymax]]))
    edges = edges[(edges >= 0.0) & (edges <= ymax)]

    def integrand(y):
        return ((ge * np.asarray(contract(y), dtype=float) - ge * y - lam)
                * np.asarray(dist.pdf(y), dtype=float))

    suff = _suffix_integrals(integrand, edges)
    tail = np.interp(ys, edges, suff)
    if reins.q_dist is not None:
        sq = np.asarray(reins.q_dist.sf(ys), dtype=float)
    elif reins.distortion is not None:
        sq = np.asarray(reins.distortion(dist.sf(ys)), dtype=float)
    else:
        lr = reins.lr_for(dist)
        sq_suffix = _suffix_integrals(
            lambda y: np.asarray(lr(y), dtype=float) * np.asarray(dist.pdf(y), dtype=float),
            edges)
        sq = np.interp(ys, edges, sq_suffix)
    return tail + (1.0 + mkt.theta) * sq


def first_order_residual(t: float, contract, lam: float, dist: ClaimDistribution,
                         reins: ReinsurerBelief, mkt: MarketParams,
                         n_grid: int = 10_000, band: float = RESIDUAL_BAND,
                         ymax: float | None = None) -> float:
    """Worst slope violation of the first-order conditions on a certification grid.

    Within each cell the required slope is 1 when L < -band and 0 when
    L > band; inside the band any slope is accepted.  Grid edges include
    every contract and measure kink so cells carry a single slope regime.
    """
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    base = np.linspace(0.0, ymax, n_grid + 1)
    bks = np.asarray(collect_breakpoints(contract, dist, reins, ymax), dtype=float)
    grid = np.unique(np.concatenate([base, bks])) if bks.size else base
    # collapse near-coincident points: slope estimates over degenerate cells
    # amplify rounding noise into spurious violations
    keep = np.concatenate([[True], np.diff(grid) > 1e-9 * max(1.0, ymax)])
    grid = grid[keep]

    mids = 0.5 * (grid[:-1] + grid[1:])
    refined = np.unique(np.concatenate([grid, mids]))
    L_ref = lemma_L_grid(refined, t, contract, lam, dist, reins, mkt, ymax)
    pos = np.searchsorted(refined, mids)
    L_mid = L_ref[pos]

    vals = np.asarray(contract(grid), dtype=float)
    slopes = np.diff(vals) / np.diff(grid)

    viol = np.zeros_like(slopes)
    lo_mask = L_mid < -band
    hi_mask = L_mid > band
    viol[lo_mask] = 1.0 - slopes[lo_mask]
    viol[hi_mask] = slopes[hi_mask]
    return float(np.max(np.maximum(viol, 0.0), initial=0.0))
