"""Equilibrium contract solvers.

Every solver minimizes the same static objective H(t, .) over the
no-sabotage class; they differ in how much structure they exploit:

* closed forms and one-dimensional roots for homogeneous beliefs,
  monotone likelihood ratios, convex distortions, VaR and ES pricing,
  and exponential-vs-exponential beliefs;
* a finite-dimensional parametric search on the slope-regime partition
  for general piecewise-C1 likelihood ratios;
* the relaxed benchmark without the no-sabotage constraint.

A useful identity drives the high-precision polish everywhere: H differs
from the Lagrangian G(., lambda) by (lambda - 1) E[I] plus a constant, so
the equilibrium satisfies the first-order conditions with multiplier
exactly 1.  Solvers therefore refine their coarse search output by zeroing
the first-order function L at the contract's switch points, which is a
root-finding problem with linear (not quadratic) signal in the parameter
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .beliefs import (
    ClaimDistribution,
    ReinsurerBelief,
    effective_ymax,
    lr_exponential,
    make_exponential,
    reinsurer_from_lr,
    var_alpha,
)
from .indemnity import (
    IndemnityFunction,
    Theorem2Params,
    UnconstrainedIndemnity,
    build_theorem2,
    dual_truncated,
    excess_of_loss,
    lambda_saturation_bounds,
    limited_loss,
    phi_lambda,
    zero_indemnity,
)
from .market import MarketParams
from .objective import (
    first_order_residual,
    lemma_L,
    lemma_L_grid,
    q_expectation,
    retained_moments,
)
from .partition import Partition, classify_partition

__all__ = [
    "EquilibriumEntry",
    "EquilibriumSolution",
    "solve_homogeneous",
    "solve_decreasing_lr",
    "solve_var",
    "solve_es",
    "solve_exponential",
    "solve_general",
    "solve_unconstrained",
    "solve_at",
    "solve_path",
    "detect_solver",
    "CERTIFY_TOL",
]

CERTIFY_TOL = 1e-4
_ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class EquilibriumEntry:
    """Per-time equilibrium record: contract, objective value, certification."""

    t: float
    contract: object
    h_star: float
    q_mean: float          # E_Q[I*(t, Y)]
    retained_mean: float   # E[Y - I*(t, Y)]
    params: dict
    solver: str
    lam: float | None = None
    residual: float | None = None
    certified: bool = False
    note: str = ""

    def premium_rate(self, theta: float) -> float:
        return (1.0 + theta) * self.q_mean


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium strategy on a time grid with the market it was solved for."""

    ts: np.ndarray
    entries: tuple[EquilibriumEntry, ...]
    solver: str
    dist: ClaimDistribution
    reins: ReinsurerBelief
    mkt: MarketParams

    def __post_init__(self):
        if len(self.entries) != len(self.ts):
            raise ValueError("one entry per time node required")

    def entry_at(self, t: float) -> EquilibriumEntry:
        idx = int(np.argmin(np.abs(self.ts - t)))
        return self.entries[idx]

    def node_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.ts, t, side="right") - 1)
        return min(max(idx, 0), len(self.ts) - 1)


def _make_entry(t, contract, dist, reins, mkt, params, solver, lam=None,
                certify=True, residual_grid=10_000, note="") -> EquilibriumEntry:
    ymax = effective_ymax(dist, reins)
    qm = q_expectation(contract, dist, reins, ymax=ymax)
    r1, r2 = retained_moments(contract, dist, reins, ymax=ymax)
    h = (1.0 + mkt.theta) * qm + r1 + 0.5 * mkt.gamma_eff(t) * r2
    residual = None
    certified = False
    if certify:
        # the equilibrium minimizes H = G(., 1) + const, so the first-order
        # conditions are always checked at multiplier 1; certifying at the
        # family's own multiplier would accept any member of its dual family
        residual = first_order_residual(t, contract, 1.0, dist, reins, mkt,
                                        n_grid=residual_grid, ymax=ymax)
        certified = residual <= CERTIFY_TOL
    return EquilibriumEntry(t=t, contract=contract, h_star=h, q_mean=qm,
                            retained_mean=r1, params=dict(params), solver=solver,
                            lam=lam, residual=residual, certified=certified, note=note)


# ---------------------------------------------------------------------------
# closed-form and one-dimensional solvers
# ---------------------------------------------------------------------------

def solve_homogeneous(mkt: MarketParams, t: float) -> tuple[float, IndemnityFunction]:
    """Identical beliefs: excess-of-loss with deductible theta / (gamma e^{r(T-t)})."""
    d = mkt.theta / mkt.gamma_eff(t)
    return d, excess_of_loss(d, t)


def solve_decreasing_lr(dist: ClaimDistribution, reins: ReinsurerBelief,
                        mkt: MarketParams, t: float) -> tuple[float, IndemnityFunction, str]:
    """Nonincreasing LR (or convex distortion): excess-of-loss via a bracketed root.

    The deductible is the first zero of K(d) = 1 + g_t d - (1+theta) S_Q(d)/S(d),
    which is increasing here; K(0) = -theta.  Returns (d, contract, note);
    the note flags a boundary hit when no sign change exists below the tail cut.
    """
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    ymax = effective_ymax(dist, reins)

    def K(d: float) -> float:
        s = float(dist.sf(np.array(d)))
        if s <= 0.0:
            return math.inf
        sq = float(reins.survival(dist, np.array(d)))
        return 1.0 + ge * d - onep * sq / s

    if K(0.0) >= 0.0:
        return 0.0, excess_of_loss(0.0, t), ""
    hi = min(1.0, ymax)
    while K(hi) < 0.0 and hi < ymax:
        hi = min(2.0 * hi, ymax)
    if K(hi) < 0.0:
        return hi, excess_of_loss(hi, t), f"no sign change up to tail cut {ymax:.6g}"
    d = brentq(K, 0.0, hi, xtol=_ROOT_XTOL)
    return float(d), excess_of_loss(float(d), t), ""


def solve_var(dist: ClaimDistribution, alpha: float, mkt: MarketParams,
              t: float) -> tuple[float, IndemnityFunction]:
    """VaR pricing: full cover up to a*, excess cover beyond the VaR level.

    a* is the first nonnegative zero of the strictly increasing bracket
    psi(a) = theta + F(a) + g_t (a S(a) - alpha VaR - int_a^VaR y dF).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    v = var_alpha(dist, alpha)
    ge = mkt.gamma_eff(t)

    def partial_first(a: float, b: float) -> float:
        if dist.cell_moments is not None:
            _, mu, _ = dist.cell_moments(np.array(a), np.array(b))
            return float(mu)
        from .quadrature import integrate
        return integrate(lambda y: y * np.asarray(dist.pdf(y), dtype=float), a, b,
                         dist.breakpoints)

    def psi(a: float) -> float:
        Fa = float(dist.cdf(np.array(a)))
        Sa = 1.0 - Fa
        return mkt.theta + Fa + ge * (a * Sa - alpha * v - partial_first(a, v))

    if psi(0.0) >= 0.0:
        a_star = 0.0
    else:
        a_star = float(brentq(psi, 0.0, v, xtol=_ROOT_XTOL))
    return a_star, dual_truncated(a_star, v, t)


def _es_objective_closed(dist, alpha, mkt, t, a, b):
    """H for the dual-truncated family under ES pricing, exact cell moments.

    a, b broadcast as arrays; retained loss is (Y - a)_+ capped at b - a.
    """
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    v = var_alpha(dist, alpha)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w_ab, mu_ab, nu_ab = dist.cell_moments(a, b)
    Sb = np.asarray(dist.sf(b), dtype=float)
    # E_Q[I] = (1/alpha) int_v^inf I dF with I = y^a + (y-b)_+ and a <= v <= b
    w_vb, mu_vb, _ = dist.cell_moments(np.minimum(v, b), b)
    tail_b_w, tail_b_mu, _ = dist.cell_moments(b, np.full_like(b, dist.tail_cut))
    eq = (a * w_vb + (a * tail_b_w + (tail_b_mu - b * tail_b_w))) / alpha
    # retained moments: R = (Y-a)_+ ^ (b-a)
    r1 = (mu_ab - a * w_ab) + (b - a) * Sb
    r2 = (nu_ab - 2 * a * mu_ab + a * a * w_ab) + (b - a) ** 2 * Sb
    return onep * eq + r1 + 0.5 * ge * r2


def solve_es(dist: ClaimDistribution, alpha: float, mkt: MarketParams, t: float,
             grid_n: int = 128) -> tuple[float, float, IndemnityFunction]:
    """ES pricing: dense grid over the feasible (a, b) box, then local refinement.

    Feasible box: 0 <= a <= VaR, VaR <= b <= max(a + (1+theta)/(alpha g_t), VaR).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if dist.cell_moments is None:
        raise ValueError("ES solver requires closed-form cell moments on the distribution")
    v = var_alpha(dist, alpha)
    ge = mkt.gamma_eff(t)
    b_hi = max(v + 1e-9, v + (1.0 + mkt.theta) / (alpha * ge))

    a_grid = np.linspace(0.0, v, grid_n)
    b_grid = np.linspace(v, b_hi, grid_n)
    A, B = np.meshgrid(a_grid, b_grid, indexing="ij")
    vals = _es_objective_closed(dist, alpha, mkt, t, A, B)
    k = int(np.argmin(vals))
    a0, b0 = float(A.flat[k]), float(B.flat[k])

    # coordinate refinement with shrinking bracket around the best node
    a, b = a0, b0
    da = (a_grid[1] - a_grid[0]) if grid_n > 1 else v
    db = (b_grid[1] - b_grid[0]) if grid_n > 1 else 1.0
    from scipy.optimize import minimize_scalar
    for _ in range(80):
        ra = minimize_scalar(lambda x: float(_es_objective_closed(dist, alpha, mkt, t, x, b)),
                             bounds=(max(0.0, a - 2 * da), min(v, a + 2 * da)),
                             method="bounded", options={"xatol": 1e-13})
        a = float(ra.x)
        rb = minimize_scalar(lambda x: float(_es_objective_closed(dist, alpha, mkt, t, a, x)),
                             bounds=(max(v, b - 2 * db), min(b_hi, b + 2 * db)),
                             method="bounded", options={"xatol": 1e-13})
        b_new = float(rb.x)
        if abs(b_new - b) < 1e-12 and abs(ra.x - a) < 1e-12:
            b = b_new
            break
        b = b_new
        da = max(da * 0.7, 1e-10)
        db = max(db * 0.7, 1e-10)
    if b <= v + 1e-12:
        b = v
    contract = dual_truncated(a, b, t) if a > 0 else excess_of_loss(b, t)
    return a, b, contract


# ---------------------------------------------------------------------------
# dense-grid objective used by the coarse parametric searches
# ---------------------------------------------------------------------------

class _DenseObjective:
    """Fixed composite-Gauss evaluation of H for fast repeated family queries.

    Kinks migrate inside cells as parameters move, so values carry an
    O(cell^2) bias; the coarse search only needs to land near the optimum,
    and the first-order polish takes over from there.
    """

    def __init__(self, dist, reins, mkt, t, ymax, cells=2000, order=10):
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, ymax, cells + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        self.y = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        self.w = (half[:, None] * w[None, :]).ravel()
        self.f = np.asarray(dist.pdf(self.y), dtype=float)
        lr = reins.lr_for(dist)
        self.lrf = np.asarray(lr(self.y), dtype=float) * self.f
        self.ge = mkt.gamma_eff(t)
        self.onep = 1.0 + mkt.theta

    def h(self, contract_values: np.ndarray) -> float:
        r = self.y - contract_values
        return float(self.onep * np.dot(contract_values, self.lrf * self.w)
                     + np.dot(r, self.f * self.w)
                     + 0.5 * self.ge * np.dot(r * r, self.f * self.w))


def _pattern_search(fn: Callable[[np.ndarray], float], x0: np.ndarray,
                    lo: np.ndarray, hi: np.ndarray, step0: float = 0.125,
                    tol: float = 1e-6, max_iter: int = 400) -> tuple[np.ndarray, float]:
    """Coordinate pattern search with shrinking step on a unit-scaled box."""
    span = np.maximum(hi - lo, 1e-300)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = fn(x)
    step = step0
    for _ in range(max_iter):
        improved = False
        for k in range(x.size):
            for sgn in (+1.0, -1.0):
                trial = x.copy()
                trial[k] = np.clip(trial[k] + sgn * step * span[k], lo[k], hi[k])
                if trial[k] == x[k]:
                    continue
                ft = fn(trial)
                if ft < fx:
                    x, fx = trial, ft
                    improved = True
        if not improved:
            step *= 0.5
            if step < tol:
                break
    return x, fx


def _start_points(lo: np.ndarray, hi: np.ndarray, n: int) -> list[np.ndarray]:
    """Deterministic multi-start seeds: center plus low-discrepancy interior points."""
    rng = np.random.default_rng(20240117)
    pts = [0.5 * (lo + hi)]
    while len(pts) < n:
        pts.append(lo + (hi - lo) * rng.random(lo.size))
    return pts


# ---------------------------------------------------------------------------
# exponential-vs-exponential beliefs
# ---------------------------------------------------------------------------

def _exp_case(scale_p: float, scale_q: float, mkt: MarketParams, t: float) -> str:
    ratio = scale_p / scale_q
    if ratio >= 1.0:
        return "i"
    if ratio <= 1.0 - mkt.gamma_eff(t) * scale_q / (1.0 + mkt.theta):
        return "ii"
    return "iii"


def _exp_y1(scale_p: float, scale_q: float, mkt: MarketParams, t: float) -> float:
    ge_over = mkt.gamma * scale_q**2 / ((1.0 + mkt.theta) * (scale_q - scale_p))
    return (scale_p * scale_q / (scale_q - scale_p)) * (
        mkt.r * (mkt.T - t) + math.log(ge_over))


def _exp_family(scale_p: float, scale_q: float, mkt: MarketParams, t: float,
                y1: float) -> Callable[[np.ndarray, float, float, float], np.ndarray]:
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    ratio = scale_p / scale_q
    rate = 1.0 / scale_p - 1.0 / scale_q

    def values(y, a, d, lam):
        y = np.asarray(y, dtype=float)
        phi = y + (lam - onep * ratio * np.exp(rate * y)) / ge
        curve = np.where(y <= y1, phi, -np.inf)
        base = np.minimum(np.minimum(np.maximum(np.maximum(curve, a + y - y1), 0.0), y), a)
        return base + np.maximum(y - y1, 0.0) - np.maximum(y - d, 0.0)

    return values


def _exp3_lambda_bounds(scale_p, scale_q, mkt, t, y1, a):
    """Saturation bounds of the curve multiplier for a fixed cap level a."""
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    ratio = scale_p / scale_q
    rate = 1.0 / scale_p - 1.0 / scale_q
    lam0 = ge * (a - y1) + onep * ratio * math.exp(rate * (y1 - a))
    lam1 = onep * ratio * math.exp(rate * a)
    return lam0, lam1


def _exp3_polish(dist, reins, mkt, t, y1, a0, d0):
    """High-precision (a, d) from the first-order conditions at multiplier 1.

    With lam = 1 the curve section is pinned; stationarity in the cap is
    L(switch point) = 0 and in the layer end L(d) = 0, with the layer
    collapsing to the boundary whenever L(y1) >= 0 there.  Both are
    bracketed scalar roots with linear signal in the parameter error.
    """
    lr = reins.lr
    ymax = effective_ymax(dist, reins)
    family = _exp_family_from(dist, reins, mkt, t, y1)

    def phi1(y):
        return float(phi_lambda(t, np.array(y), 1.0, lr, mkt))

    def switch_point(a):
        """First claim size where the cap level binds, i.e. where dI/da jumps to 1.

        Three branches can reach the level a first: the diagonal (full-slope
        start, valid while the curve still sits above it), the curve itself,
        or the slope-one line into the interval edge.  The earliest valid
        crossing is the switch point.
        """
        candidates = []
        if 0.0 < a <= y1 and phi1(a) >= a:
            candidates.append(a)
        f_cap = lambda y: phi1(y) - a
        if f_cap(0.0) <= 0.0 <= f_cap(y1):
            candidates.append(float(brentq(f_cap, 0.0, y1, xtol=_ROOT_XTOL)))
        elif f_cap(0.0) >= 0.0:
            candidates.append(0.0)
        f_lift = lambda y: phi1(y) - (a + y - y1)
        if f_lift(0.0) > 0.0 > f_lift(y1):
            candidates.append(float(brentq(f_lift, 0.0, y1, xtol=_ROOT_XTOL)))
        elif f_lift(0.0) <= 0.0:
            candidates.append(0.0)
        return min(candidates) if candidates else y1

    def L_at(s, a, d):
        contract = _FamilyContract(family, a, d, 1.0, (y1, d), t)
        return lemma_L(s, t, contract, 1.0, dist, reins, mkt, ymax=ymax)

    def inner_d(a):
        if L_at(y1, a, y1) >= 0.0:
            return y1
        hi = min(ymax, max(d0, y1 + 1.0))
        while L_at(hi, a, hi) < 0.0 and hi < ymax:
            hi = min(2 * hi, ymax)
        if L_at(hi, a, hi) < 0.0:
            return hi
        return float(brentq(lambda d: L_at(d, a, d), y1, hi, xtol=_ROOT_XTOL))

    def cap_gap(a):
        return L_at(switch_point(a), a, inner_d(a))

    # dH/da equals the cap gap and is increasing (the objective is convex in
    # the cap level), so one bracket over the whole feasible range suffices
    a_lo = 1e-9
    a_hi = y1 - 1e-9
    g_lo = cap_gap(a_lo)
    g_hi = cap_gap(a_hi)
    if g_lo >= 0.0:
        a_star = 0.0
    elif g_hi <= 0.0:
        a_star = y1
    else:
        a_star = float(brentq(cap_gap, a_lo, a_hi, xtol=_ROOT_XTOL))
    d_star = inner_d(a_star)
    return a_star, d_star


def _exp_family_from(dist, reins, mkt, t, y1):
    scale_p = dist.mean  # exponential: mean equals scale
    scale_q = reins.q_dist.mean
    return _exp_family(scale_p, scale_q, mkt, t, y1)


class _FamilyContract:
    """Callable wrapper of a parametric family member with known kinks."""

    def __init__(self, family, a, d, lam, kinks, t):
        self._family = family
        self.a, self.d, self.lam, self.t = a, d, lam, t
        self._kinks = tuple(float(k) for k in kinks)

    def __call__(self, y):
        return self._family(y, self.a, self.d, self.lam)

    @property
    def breakpoints(self):
        return self._kinks


def solve_exponential(scale_p: float, scale_q: float, mkt: MarketParams, t: float,
                      starts: int = 8, warm: dict | None = None,
                      certify: bool = True, residual_grid: int = 10_000) -> EquilibriumEntry:
    """Exponential claim beliefs on both sides: closed cases plus the mixed family.

    Dispatch: scale_p/scale_q >= 1 gives an excess-of-loss root; a ratio at
    or below 1 - g_t scale_q/(1+theta) gives a limited block with a closed
    form; the intermediate regime optimizes the three-parameter family on
    the two-interval partition.  Boundary equalities resolve to the closed
    cases.
    """
    if scale_p <= 0 or scale_q <= 0:
        raise ValueError(f"scales must be positive, got {scale_p}, {scale_q}")
    dist = make_exponential(scale_p)
    reins = reinsurer_from_lr(lr_exponential(scale_p, scale_q),
                              q_dist=make_exponential(scale_q))
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    case = _exp_case(scale_p, scale_q, mkt, t)

    if case == "i":
        rate = 1.0 / scale_q - 1.0 / scale_p  # >= 0 here

        def K(d):
            return 1.0 + ge * d - onep * math.exp(-rate * d)

        if K(0.0) >= 0.0:
            d_star = 0.0
        else:
            hi = 1.0
            while K(hi) < 0.0:
                hi *= 2.0
            d_star = float(brentq(K, 0.0, hi, xtol=_ROOT_XTOL))
        contract = excess_of_loss(d_star, t)
        return _make_entry(t, contract, dist, reins, mkt, {"d": d_star},
                           "exponential_i", lam=1.0, certify=certify,
                           residual_grid=residual_grid)

    if case == "ii":
        if mkt.theta >= mkt.gamma * scale_p * mkt.discount(t):
            d_star = 0.0
        else:
            d_star = (scale_p * scale_q / (scale_q - scale_p)) * math.log(
                (1.0 + mkt.gamma * scale_p * mkt.discount(t)) / onep)
        contract = limited_loss(d_star, t) if d_star > 0 else zero_indemnity(t)
        return _make_entry(t, contract, dist, reins, mkt, {"d": d_star},
                           "exponential_ii", lam=1.0, certify=certify,
                           residual_grid=residual_grid)

    # case iii: three-parameter family on the (moderate, steep) partition
    ymax = effective_ymax(dist, reins)
    part = classify_partition(reins.lr, mkt, t, dist=dist, ymax=ymax)
    y1_closed = _exp_y1(scale_p, scale_q, mkt, t)
    if len(part.breakpoints) != 1 or part.labels != (2, 3) or \
            abs(part.breakpoints[0] - y1_closed) > 1e-6 * max(1.0, y1_closed):
        raise RuntimeError(
            f"partition {part.breakpoints}/{part.labels} does not match the "
            f"mixed-regime geometry (threshold crossing {y1_closed:.8g})")
    y1 = float(part.breakpoints[0])  # single source of truth for the interval edge
    family = _exp_family(scale_p, scale_q, mkt, t, y1)
    dense = _DenseObjective(dist, reins, mkt, t, ymax)

    def dense_h(p):
        a, d, lam = p
        lam0, lam1 = _exp3_lambda_bounds(scale_p, scale_q, mkt, t, y1, a)
        lam = min(max(lam, lam0), lam1)
        return dense.h(family(dense.y, a, d, lam))

    lo = np.array([0.0, y1, 0.0])
    hi = np.array([y1, min(ymax, y1 + 8.0 * max(scale_p, scale_q)), 3.0])
    if warm is not None and {"a", "d", "lam"} <= set(warm):
        # neighbor solves differ continuously in t: go straight to the polish
        a0 = float(min(max(warm["a"], lo[0]), hi[0]))
        d0 = float(min(max(warm["d"], max(y1, lo[1])), hi[1]))
    else:
        seeds = _start_points(lo, hi, starts)
        seeds.insert(0, np.array([0.5 * y1, y1 + scale_p, 1.0]))
        best_x, best_f = None, math.inf
        for s in seeds:
            x, fx = _pattern_search(dense_h, s, lo, hi)
            if fx < best_f - 1e-12 or (abs(fx - best_f) <= 1e-12 and best_x is not None
                                       and tuple(x) < tuple(best_x)):
                best_x, best_f = x, fx
        a0, d0, _lam0 = best_x
    a_star, d_star = _exp3_polish(dist, reins, mkt, t, y1, float(a0), float(d0))
    lam_star = 1.0

    contract = build_theorem2(part, Theorem2Params((a_star,), {1: d_star}, lam_star),
                              reins.lr, mkt, t, ymax=ymax)
    params = {"a": a_star, "d": d_star, "lam": lam_star, "y1": y1}
    return _make_entry(t, contract, dist, reins, mkt, params, "exponential_iii",
                       lam=lam_star, certify=certify, residual_grid=residual_grid)


# ---------------------------------------------------------------------------
# general partition-based solver
# ---------------------------------------------------------------------------

def _family_values_on_partition(part: Partition, lr, mkt, t):
    """Direct vectorized evaluation of the parametric family, no segmentation.

    Parameter layout matches build_theorem2: endpoint values at interior
    breakpoints, one kink per label-1/3 interval, one shared multiplier.
    """
    intervals = part.intervals()
    onep = 1.0 + mkt.theta
    ge = mkt.gamma_eff(t)

    def values(y, endpoint_values, kinks, lam):
        y = np.asarray(y, dtype=float)
        vals = np.zeros_like(y)
        anchors = (0.0,) + tuple(endpoint_values)
        phi = y + (lam - onep * np.asarray(lr(y), dtype=float)) / ge
        for i, (lo, hi, label) in enumerate(intervals):
            if math.isinf(hi):
                mask = y >= lo
            else:
                mask = (y >= lo) & (y < hi)
            if not np.any(mask):
                continue
            ys = y[mask]
            a_lo = anchors[i]
            terminal = i == len(intervals) - 1
            if label == 1:
                s = kinks.get(i, lo)
                if terminal:
                    vals[mask] = a_lo + np.maximum(ys - s, 0.0)
                else:
                    dv = anchors[i + 1] - a_lo
                    vals[mask] = a_lo + np.minimum(np.maximum(ys - s, 0.0), dv)
            elif label == 3:
                s = kinks.get(i, lo)
                if terminal:
                    vals[mask] = a_lo + np.minimum(ys - lo, s - lo)
                else:
                    dv = anchors[i + 1] - a_lo
                    window = (hi - lo) - dv
                    vals[mask] = a_lo + (ys - lo) - np.minimum(
                        np.maximum(ys - s, 0.0), window)
            else:
                ph = phi[mask]
                if terminal:
                    vals[mask] = np.minimum(a_lo + ys - lo, np.maximum(a_lo, ph))
                else:
                    a_hi = anchors[i + 1]
                    vals[mask] = np.minimum(
                        np.minimum(np.maximum(np.maximum(ph, a_hi + ys - hi), a_lo),
                                   a_lo + ys - lo), a_hi)
        return vals

    return values


def _unpack_general(x, part: Partition, ymax: float):
    """Map a unit-box vector onto feasible (endpoint deltas, kinks, lambda scale)."""
    intervals = part.intervals()
    n_interior = len(intervals) - 1
    pos = 0
    deltas = []
    for i in range(n_interior):
        lo, hi, _ = intervals[i]
        deltas.append(x[pos] * (hi - lo))
        pos += 1
    values = tuple(np.cumsum(deltas)) if deltas else ()
    anchors = (0.0,) + values
    kinks = {}
    for i, (lo, hi, label) in enumerate(intervals):
        terminal = i == n_interior
        if label == 2:
            continue
        if terminal:
            kinks[i] = lo + x[pos] * (ymax - lo)
        elif label == 1:
            dv = anchors[i + 1] - anchors[i]
            kinks[i] = lo + x[pos] * ((hi - lo) - dv)
        else:
            dv = anchors[i + 1] - anchors[i]
            kinks[i] = lo + x[pos] * dv
        pos += 1
    lam_scale = x[pos] if pos < len(x) else None
    return values, kinks, lam_scale


def _general_dim(part: Partition) -> tuple[int, bool]:
    intervals = part.intervals()
    n = len(intervals) - 1  # endpoint values
    n += sum(1 for (_, _, lab) in intervals if lab != 2)
    has_curve = any(lab == 2 for (_, _, lab) in intervals)
    return n + (1 if has_curve else 0), has_curve


def solve_general(dist: ClaimDistribution, reins: ReinsurerBelief, mkt: MarketParams,
                  t: float, starts: int = 8, certify: bool = True,
                  residual_grid: int = 10_000) -> EquilibriumEntry:
    """Partition-driven finite-dimensional search for piecewise-C1 likelihood ratios.

    Coarse phase: multi-start pattern search of H over the family parameters
    (endpoint increments, layer kinks, curve multiplier within its
    saturation bracket).  Polish phase: pattern search on the first-order
    complementarity gap, whose signal is linear in the parameter error.
    Output above the certification tolerance is returned flagged.
    """
    lr = reins.lr_for(dist)
    ymax = effective_ymax(dist, reins)
    part = classify_partition(lr, mkt, t, dist=dist, ymax=ymax)
    family = _family_values_on_partition(part, lr, mkt, t)
    dim, has_curve = _general_dim(part)
    dense = _DenseObjective(dist, reins, mkt, t, ymax)

    lam_bracket = None
    if has_curve:
        fallback = (-mkt.gamma_eff(t) * ymax,
                    (1.0 + mkt.theta) * float(np.max(lr(np.linspace(0, ymax, 512)))))
        sat = lambda_saturation_bounds(part, [0.0] * (len(part.labels) - 1), lr, mkt, t)
        lam_bracket = sat if sat is not None else fallback
        lam_bracket = (min(lam_bracket[0], 1.0) - 0.5, max(lam_bracket[1], 1.0) + 0.5)

    def decode(x):
        values, kinks, lam_scale = _unpack_general(x, part, ymax)
        lam = 1.0
        if lam_scale is not None and lam_bracket is not None:
            lam = lam_bracket[0] + lam_scale * (lam_bracket[1] - lam_bracket[0])
        return values, kinks, lam

    def dense_h(x):
        values, kinks, lam = decode(x)
        return dense.h(family(dense.y, values, kinks, lam))

    lo = np.zeros(dim)
    hi = np.ones(dim)
    seeds = _start_points(lo, hi, starts if dim > 1 else min(starts, 3))
    if has_curve and lam_bracket[1] > lam_bracket[0]:
        center = np.full(dim, 0.5)
        center[-1] = (1.0 - lam_bracket[0]) / (lam_bracket[1] - lam_bracket[0])
        seeds.insert(0, np.clip(center, 0.0, 1.0))
    best_x, best_f = None, math.inf
    for s in seeds:
        x, fx = _pattern_search(dense_h, s, lo, hi)
        if fx < best_f - 1e-12 or (abs(fx - best_f) <= 1e-12 and best_x is not None
                                   and tuple(x) < tuple(best_x)):
            best_x, best_f = x, fx

    # first-order polish: minimize the worst complementarity violation plus
    # the stationarity defect |L| at every slope-changing kink away from a
    # partition edge (at the optimum L crosses zero exactly there, so the
    # signal is linear in the parameter error and free of grid resolution)
    cert_grid = np.linspace(0.0, ymax, 2001)
    part_edges = np.array((0.0,) + part.breakpoints)

    def foc_gap(x):
        values, kinks, lam = decode(x)
        try:
            contract = build_theorem2(part, Theorem2Params(values, kinks, lam),
                                      lr, mkt, t, ymax=ymax)
        except Exception:
            return math.inf
        joins = np.asarray(contract.breakpoints, dtype=float)
        grid = np.unique(np.concatenate([cert_grid, joins]))
        grid = grid[grid <= ymax]
        # complementarity is always measured at the equilibrium multiplier 1
        L = lemma_L_grid(grid, t, contract, 1.0, dist, reins, mkt, ymax=ymax)
        L_mid = 0.5 * (L[:-1] + L[1:])
        vals = np.asarray(contract(grid), dtype=float)
        slope = np.diff(vals) / np.diff(grid)
        viol = np.maximum(slope * np.maximum(L_mid, 0.0),
                          (1.0 - slope) * np.maximum(-L_mid, 0.0))
        gap = float(np.max(viol, initial=0.0))
        interior = joins[np.min(np.abs(joins[:, None] - part_edges[None, :]), axis=1)
                         > 1e-9 * max(1.0, ymax)] if joins.size else joins
        if interior.size:
            gap = max(gap, float(np.max(np.abs(
                L[np.searchsorted(grid, interior)]))))
        return gap

    x_pol, gap = _pattern_search(foc_gap, best_x, lo, hi, step0=0.05, tol=1e-12,
                                 max_iter=900)
    if not math.isfinite(gap) or gap > foc_gap(best_x):
        x_pol = best_x

    values, kinks, lam = decode(x_pol)
    contract = build_theorem2(part, Theorem2Params(values, kinks, lam), lr, mkt, t,
                              ymax=ymax)
    params = {"endpoint_values": list(values),
              "kinks": {str(k): v for k, v in kinks.items()}, "lam": lam,
              "breakpoints": list(part.breakpoints), "labels": list(part.labels)}
    return _make_entry(t, contract, dist, reins, mkt, params, "general", lam=lam,
                       certify=certify, residual_grid=residual_grid)


def solve_unconstrained(dist: ClaimDistribution, reins: ReinsurerBelief,
                        mkt: MarketParams, t: float) -> tuple[float, UnconstrainedIndemnity]:
    """Benchmark without the no-sabotage constraint: clip of the curve to [0, y].

    Scalar golden-section minimization of H over the multiplier after a
    coarse bracket scan.
    """
    lr = reins.lr_for(dist)
    ymax = effective_ymax(dist, reins)
    dense = _DenseObjective(dist, reins, mkt, t, ymax)
    onep = 1.0 + mkt.theta
    ge = mkt.gamma_eff(t)
    lr_vals = np.asarray(lr(dense.y), dtype=float)

    def h_of(lam):
        phi = dense.y + (lam - onep * lr_vals) / ge
        vals = np.minimum(dense.y, np.maximum(0.0, phi))
        return dense.h(vals)

    lr_hi = float(np.max(lr_vals))
    lam_lo = -ge * ymax
    lam_hi = onep * lr_hi + ge
    scan = np.linspace(lam_lo, lam_hi, 257)
    hs = np.array([h_of(l) for l in scan])
    k = int(np.argmin(hs))
    a = scan[max(k - 1, 0)]
    b = scan[min(k + 1, len(scan) - 1)]
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(h_of, bracket=None, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    lam_star = float(res.x)
    return lam_star, UnconstrainedIndemnity(t=t, lam=lam_star, lr=lr, mkt=mkt)


# ---------------------------------------------------------------------------
# dispatch and time-grid assembly
# ---------------------------------------------------------------------------

def _lr_is_constant(lr, ymax: float) -> bool:
    ys = np.linspace(0.0, ymax, 64)
    vals = np.asarray(lr(ys), dtype=float)
    derivs = np.asarray(lr.derivative(ys), dtype=float)
    return bool(np.all(np.abs(derivs) < 1e-14)
                and np.all(np.abs(vals - vals[0]) < 1e-12))


def _lr_is_nonincreasing(lr, ymax: float) -> bool:
    ys = np.linspace(0.0, ymax, 512)
    return bool(np.all(np.asarray(lr.derivative(ys), dtype=float) <= 1e-14))


def solve_at(dist: ClaimDistribution, reins: ReinsurerBelief, mkt: MarketParams,
             t: float, tag: str = "auto", warm: dict | None = None,
             certify: bool = True, residual_grid: int = 10_000) -> EquilibriumEntry:
    """Solve the per-time problem with the requested (or auto-detected) method."""
    if tag == "auto":
        tag = detect_solver(dist, reins, mkt)
    if tag == "homogeneous":
        d, contract = solve_homogeneous(mkt, t)
        return _make_entry(t, contract, dist, reins, mkt, {"d": d}, "homogeneous",
                           lam=1.0, certify=certify, residual_grid=residual_grid)
    if tag in ("decreasing_lr", "convex_distortion"):
        d, contract, note = solve_decreasing_lr(dist, reins, mkt, t)
        return _make_entry(t, contract, dist, reins, mkt, {"d": d}, tag, lam=1.0,
                           certify=certify, residual_grid=residual_grid, note=note)
    if tag == "var":
        a, contract = solve_var(dist, reins.alpha, mkt, t)
        v = var_alpha(dist, reins.alpha)
        return _make_entry(t, contract, dist, reins, mkt, {"a": a, "var": v}, "var",
                           lam=1.0, certify=certify, residual_grid=residual_grid)
    if tag == "es":
        a, b, contract = solve_es(dist, reins.alpha, mkt, t)
        return _make_entry(t, contract, dist, reins, mkt, {"a": a, "b": b}, "es",
                           lam=1.0, certify=certify, residual_grid=residual_grid)
    if tag == "exponential":
        if reins.q_dist is None:
            raise ValueError("exponential solver needs the reinsurer's scale")
        return solve_exponential(dist.mean / max(1.0 - dist.atom_at_zero, 1e-300),
                                 reins.q_dist.mean, mkt, t, warm=warm,
                                 certify=certify, residual_grid=residual_grid)
    if tag == "general":
        return solve_general(dist, reins, mkt, t, certify=certify,
                             residual_grid=residual_grid)
    if tag == "unconstrained":
        lam, contract = solve_unconstrained(dist, reins, mkt, t)
        return _make_entry(t, contract, dist, reins, mkt, {"lam": lam},
                           "unconstrained", lam=lam, certify=False)
    raise ValueError(f"unknown solver tag {tag!r}")


def detect_solver(dist: ClaimDistribution, reins: ReinsurerBelief,
                  mkt: MarketParams) -> str:
    if reins.kind == "var":
        return "var"
    if reins.kind == "es":
        return "es"
    if reins.kind == "distortion":
        if reins.distortion is not None and reins.distortion.convex:
            return "convex_distortion"
        raise ValueError("general distortions need an explicit likelihood ratio")
    ymax = effective_ymax(dist, reins)
    lr = reins.lr
    if _lr_is_constant(lr, ymax):
        val = float(lr(np.array(0.0)))
        return "homogeneous" if abs(val - 1.0) < 1e-12 else "decreasing_lr"
    if lr.label.startswith("exponential") and reins.q_dist is not None:
        return "exponential"
    if _lr_is_nonincreasing(lr, ymax):
        return "decreasing_lr"
    return "general"


def solve_path(dist: ClaimDistribution, reins: ReinsurerBelief, mkt: MarketParams,
               tag: str = "auto", ts: Sequence[float] | None = None,
               n_nodes: int = 101, certify: bool = False,
               residual_grid: int = 4000) -> EquilibriumSolution:
    """Solve on a time grid (default 101 uniform nodes on [0, T]), warm-starting
    each node from its neighbor.  Per-node solves are independent pure
    computations; the order of assembly is fixed by the grid."""
    if ts is None:
        ts = np.linspace(0.0, mkt.T, n_nodes)
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1 or ts.size < 1 or np.any(np.diff(ts) <= 0):
        raise ValueError("time grid must be strictly increasing")
    resolved = tag if tag != "auto" else detect_solver(dist, reins, mkt)
    entries = []
    warm = None
    for t in ts:
        e = solve_at(dist, reins, mkt, float(t), tag=resolved, warm=warm,
                     certify=certify, residual_grid=residual_grid)
        entries.append(e)
        if e.solver == "exponential_iii":
            warm = {"a": e.params["a"], "d": e.params["d"], "lam": e.params["lam"]}
        else:
            warm = None
    return EquilibriumSolution(ts=ts, entries=tuple(entries), solver=resolved,
                               dist=dist, reins=reins, mkt=mkt)
