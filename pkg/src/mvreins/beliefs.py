"""Claim-size beliefs of the insurer and reinsurer.

The insurer's belief is a :class:`ClaimDistribution`.  The reinsurer's view
is carried by a :class:`ReinsurerBelief`, either as a likelihood ratio
against the insurer's measure or as a distortion of the insurer's survival
function (value-at-risk and expected-shortfall pricing are the two singular
special cases).  All objects are immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec, integrate

__all__ = [
    "ClaimDistribution",
    "LikelihoodRatio",
    "DistortionFunction",
    "ReinsurerBelief",
    "make_exponential",
    "var_alpha",
    "es_alpha",
    "lr_constant",
    "lr_exponential",
    "lr_piecewise_linear",
    "distortion_identity",
    "distortion_var",
    "distortion_es",
    "distorted_survival",
    "reinsurer_from_lr",
    "reinsurer_var",
    "reinsurer_es",
    "reinsurer_distortion",
    "reinsurer_homogeneous",
    "check_reinsurer_consistency",
    "effective_ymax",
]

TAIL_MASS = 1e-10  # default tail truncation keeps S(y_max) at this level


@dataclass(frozen=True)
class ClaimDistribution:
    """Insurer's belief about a single claim size Y >= 0.

    All callables are vectorized over numpy arrays.  ``cell_moments``
    returns exact per-interval values of (P(a<Y<=b), E[Y; a<Y<=b],
    E[Y^2; a<Y<=b]) for the absolutely continuous part when a closed form
    exists; the brute-force oracle and quadrature-free paths rely on it.
    """

    cdf: Callable[[np.ndarray], np.ndarray]
    sf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    quantile: Callable[[np.ndarray], np.ndarray]
    mean: float
    second_moment: float
    atom_at_zero: float = 0.0
    tail_cut: float = field(default=0.0)
    breakpoints: tuple[float, ...] = ()
    label: str = "custom"
    cell_moments: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if not (0.0 <= self.atom_at_zero < 1.0):
            raise ValueError(f"atom_at_zero must lie in [0, 1), got {self.atom_at_zero}")
        if not math.isfinite(self.mean) or not math.isfinite(self.second_moment):
            raise ValueError("claim distribution requires finite first and second moments")
        if self.tail_cut <= 0.0:
            object.__setattr__(self, "tail_cut", float(self.quantile(1.0 - TAIL_MASS)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-transform sampling, atom at zero included."""
        u = rng.random(n)
        return np.asarray(self.quantile(u), dtype=float)


def make_exponential(scale: float, atom_at_zero: float = 0.0) -> ClaimDistribution:
    """Exponential claim distribution with the given scale (mean of the continuous part).

    With an atom p0 at zero the continuous part carries mass 1 - p0.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    p0 = float(atom_at_zero)
    if not (0.0 <= p0 < 1.0):
        raise ValueError(f"atom_at_zero must lie in [0, 1), got {p0}")
    cont = 1.0 - p0

    def cdf(y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0.0, 0.0, p0 + cont * (1.0 - np.exp(-y / scale)))

    def sf(y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0.0, 1.0, cont * np.exp(-y / scale))

    def pdf(y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0.0, 0.0, cont * np.exp(-y / scale) / scale)

    def quantile(p):
        p = np.asarray(p, dtype=float)
        inner = np.clip((1.0 - p) / cont, 1e-300, 1.0)
        return np.where(p <= p0, 0.0, -scale * np.log(inner))

    def cell_moments(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ea = np.exp(-a / scale)
        eb = np.exp(-b / scale)
        w = cont * (ea - eb)
        mu = cont * ((a + scale) * ea - (b + scale) * eb)
        nu = cont * ((a * a + 2 * a * scale + 2 * scale * scale) * ea
                     - (b * b + 2 * b * scale + 2 * scale * scale) * eb)
        return w, mu, nu

    return ClaimDistribution(
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        mean=cont * scale,
        second_moment=cont * 2.0 * scale * scale,
        atom_at_zero=p0,
        label=f"exponential(scale={scale})",
        cell_moments=cell_moments,
    )


def var_alpha(dist: ClaimDistribution, alpha: float) -> float:
    """Value at risk: smallest y with F(y) >= 1 - alpha (generalized inverse)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if float(dist.cdf(np.array(0.0))) >= 1.0 - alpha:
        return 0.0
    return float(dist.quantile(1.0 - alpha))


def es_alpha(dist: ClaimDistribution, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected shortfall: (1/alpha) * integral of VaR_s over s in (0, alpha].

    Uses the tail-average identity ES = VaR + (1/alpha) * E[(Y - VaR)_+],
    which turns the quantile integral into a single tail integral of the
    survival function.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    v = var_alpha(dist, alpha)
    tail = integrate(lambda y: np.asarray(dist.sf(y), dtype=float), v, dist.tail_cut,
                     dist.breakpoints, spec)
    return v + tail / alpha


@dataclass(frozen=True)
class LikelihoodRatio:
    """Piecewise-C1 likelihood ratio of the reinsurer measure against the insurer's.

    ``value`` and ``derivative`` are analytic per piece; the partition logic
    depends on exact derivative signs, so finite differencing is never used.
    ``singular_atom`` marks a point carrying all reinsurer mass (VaR pricing).
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple[float, ...] = ()
    singular_atom: float | None = None
    label: str = "custom"

    def __call__(self, y):
        return self.value(np.asarray(y, dtype=float))


def lr_constant(level: float = 1.0) -> LikelihoodRatio:
    if level < 0:
        raise ValueError(f"likelihood ratio must be nonnegative, got {level}")
    return LikelihoodRatio(
        value=lambda y: np.full_like(np.asarray(y, dtype=float), level),
        derivative=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        label=f"constant({level})",
    )


def lr_exponential(scale_p: float, scale_q: float) -> LikelihoodRatio:
    """Ratio of two exponential densities: (p/q) scales theta1 -> theta2.

    LR(y) = (theta1/theta2) exp((1/theta1 - 1/theta2) y); its derivative has
    the constant sign of theta2 - theta1.
    """
    if scale_p <= 0 or scale_q <= 0:
        raise ValueError(f"scales must be positive, got {scale_p}, {scale_q}")
    ratio = scale_p / scale_q
    rate = 1.0 / scale_p - 1.0 / scale_q

    def value(y):
        return ratio * np.exp(rate * np.asarray(y, dtype=float))

    def derivative(y):
        return ((scale_q - scale_p) / scale_q**2) * np.exp(rate * np.asarray(y, dtype=float))

    return LikelihoodRatio(value=value, derivative=derivative,
                           label=f"exponential({scale_p}->{scale_q})")


def lr_piecewise_linear(knots: Sequence[float], values: Sequence[float]) -> LikelihoodRatio:
    """Continuous piecewise-linear LR through (knots, values), constant beyond the last knot."""
    ks = np.asarray(knots, dtype=float)
    vs = np.asarray(values, dtype=float)
    if ks.ndim != 1 or ks.size < 2 or vs.shape != ks.shape:
        raise ValueError("knots and values must be 1-d arrays of equal length >= 2")
    if np.any(np.diff(ks) <= 0):
        raise ValueError("knots must be strictly increasing")
    if ks[0] != 0.0:
        raise ValueError("first knot must be 0")
    if np.any(vs < 0):
        raise ValueError("likelihood ratio values must be nonnegative")
    slopes = np.diff(vs) / np.diff(ks)

    def value(y):
        y = np.asarray(y, dtype=float)
        return np.interp(y, ks, vs)  # constant extrapolation beyond last knot

    def derivative(y):
        y = np.asarray(y, dtype=float)
        idx = np.clip(np.searchsorted(ks, y, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where(y >= ks[-1], 0.0, out)

    return LikelihoodRatio(value=value, derivative=derivative,
                           breakpoints=tuple(ks[1:]), label="piecewise_linear")


@dataclass(frozen=True)
class DistortionFunction:
    """Nondecreasing g : [0,1] -> [0,1] with g(0)=0, g(1)=1 (Wang-style pricing)."""

    g: Callable[[np.ndarray], np.ndarray]
    convex: bool = False
    tag: str = "general"
    alpha: float | None = None

    def __post_init__(self):
        g0 = float(self.g(np.array(0.0)))
        g1 = float(self.g(np.array(1.0)))
        if abs(g0) > 1e-12 or abs(g1 - 1.0) > 1e-12:
            raise ValueError(f"distortion must satisfy g(0)=0, g(1)=1, got g(0)={g0}, g(1)={g1}")

    def __call__(self, u):
        return self.g(np.asarray(u, dtype=float))


def distortion_identity() -> DistortionFunction:
    return DistortionFunction(g=lambda u: np.asarray(u, dtype=float), convex=True, tag="identity")


def distortion_var(alpha: float) -> DistortionFunction:
    """g(u) = 1{u > alpha}: all reinsurer mass sits at the VaR level."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")

    def g(u):
        u = np.asarray(u, dtype=float)
        return np.where(u > alpha, 1.0, 0.0)

    return DistortionFunction(g=g, convex=False, tag="var", alpha=alpha)


def distortion_es(alpha: float) -> DistortionFunction:
    """g(u) = min(u/alpha, 1): expected-shortfall pricing."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")

    def g(u):
        u = np.asarray(u, dtype=float)
        return np.minimum(u / alpha, 1.0)

    return DistortionFunction(g=g, convex=False, tag="es", alpha=alpha)


def distorted_survival(dist: ClaimDistribution, g: DistortionFunction, y) -> np.ndarray:
    """Reinsurer survival S_Q(y) = g(S(y)) under a distortion."""
    return np.asarray(g(dist.sf(np.asarray(y, dtype=float))), dtype=float)


@dataclass(frozen=True)
class ReinsurerBelief:
    """Reinsurer's claim measure in whichever representations are available.

    kind is one of "lr", "var", "es", "distortion".  When both an LR and a
    distortion are present they must describe the same measure; use
    :func:`check_reinsurer_consistency`.  ``q_dist`` is the reinsurer's
    distribution as a first-class object when it has a closed form.
    """

    kind: str
    lr: LikelihoodRatio | None = None
    distortion: DistortionFunction | None = None
    alpha: float | None = None
    q_dist: ClaimDistribution | None = None
    label: str = ""

    def survival(self, dist: ClaimDistribution, y) -> np.ndarray:
        """S_Q(y), the reinsurer's survival function paired with the insurer's dist."""
        y = np.asarray(y, dtype=float)
        if self.q_dist is not None:
            return np.asarray(self.q_dist.sf(y), dtype=float)
        if self.distortion is not None:
            return distorted_survival(dist, self.distortion, y)
        # generic LR: S_Q(s) = integral of LR dF over (s, infinity)
        lr = self.lr
        if lr is None:
            raise ValueError("reinsurer belief carries neither distortion nor likelihood ratio")
        scalar = y.ndim == 0
        ys = np.atleast_1d(y)
        out = np.empty_like(ys)
        bks = tuple(dist.breakpoints) + tuple(lr.breakpoints)
        for i, s in enumerate(ys):
            out[i] = integrate(
                lambda u: np.asarray(lr(u) * dist.pdf(u), dtype=float), float(s),
                dist.tail_cut, bks,
            )
        return out[0] if scalar else out

    def lr_for(self, dist: ClaimDistribution) -> LikelihoodRatio:
        """Materialize a likelihood ratio bound to the insurer's distribution.

        ES pricing yields the step 0 / (1/alpha) at the VaR level; VaR pricing
        has no finite LR (all mass on one point) and raises.
        """
        if self.lr is not None:
            return self.lr
        if self.kind == "es":
            v = var_alpha(dist, self.alpha)
            level = 1.0 / self.alpha

            def value(y):
                y = np.asarray(y, dtype=float)
                return np.where(y >= v, level, 0.0)

            def deriv(y):
                return np.zeros_like(np.asarray(y, dtype=float))

            return LikelihoodRatio(value=value, derivative=deriv, breakpoints=(v,),
                                   label=f"es(alpha={self.alpha})")
        if self.kind == "var":
            raise ValueError("VaR pricing has a singular likelihood ratio; use the atom rule")
        raise ValueError(f"no likelihood ratio available for reinsurer kind {self.kind!r}")


def reinsurer_from_lr(lr: LikelihoodRatio, q_dist: ClaimDistribution | None = None,
                      distortion: DistortionFunction | None = None) -> ReinsurerBelief:
    return ReinsurerBelief(kind="lr", lr=lr, q_dist=q_dist, distortion=distortion,
                           label=f"lr:{lr.label}")


def reinsurer_homogeneous(dist: ClaimDistribution) -> ReinsurerBelief:
    """Identical beliefs: LR = 1 and Q = P."""
    return ReinsurerBelief(kind="lr", lr=lr_constant(1.0), q_dist=dist, label="homogeneous")


def reinsurer_var(alpha: float) -> ReinsurerBelief:
    return ReinsurerBelief(kind="var", distortion=distortion_var(alpha), alpha=alpha,
                           label=f"var(alpha={alpha})")


def reinsurer_es(alpha: float) -> ReinsurerBelief:
    return ReinsurerBelief(kind="es", distortion=distortion_es(alpha), alpha=alpha,
                           label=f"es(alpha={alpha})")


def reinsurer_distortion(g: DistortionFunction) -> ReinsurerBelief:
    return ReinsurerBelief(kind="distortion", distortion=g, label=f"distortion:{g.tag}")


def check_reinsurer_consistency(dist: ClaimDistribution, reins: ReinsurerBelief,
                                n_intervals: int = 64, tol: float = 1e-6) -> float:
    """Largest gap between interval masses computed from the LR and from the distortion.

    Checks Q(a < Y <= b) = integral of LR dF against S_Q(a) - S_Q(b) on a
    quantile-spaced interval grid avoiding any singular atom.  Raises
    ValueError when both views exist and disagree beyond tol.
    """
    if reins.lr is None or (reins.distortion is None and reins.q_dist is None):
        return 0.0
    lr = reins.lr
    probs = np.linspace(0.01, 0.995, n_intervals + 1)
    edges = np.asarray(dist.quantile(probs), dtype=float)
    if lr.singular_atom is not None:
        edges = edges[np.abs(edges - lr.singular_atom) > 1e-9]
    bks = tuple(dist.breakpoints) + tuple(lr.breakpoints)
    worst = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        via_lr = integrate(lambda u: np.asarray(lr(u) * dist.pdf(u), dtype=float),
                           float(a), float(b), bks)
        if reins.distortion is not None:
            ref = float(distorted_survival(dist, reins.distortion, a)
                        - distorted_survival(dist, reins.distortion, b))
        else:
            ref = float(reins.q_dist.sf(a) - reins.q_dist.sf(b))
        worst = max(worst, abs(via_lr - ref))
    if worst > tol:
        raise ValueError(
            f"likelihood-ratio and distortion views of the reinsurer measure disagree "
            f"(max interval gap {worst:.3e} > {tol:.1e})"
        )
    return worst


def effective_ymax(dist: ClaimDistribution, reins: ReinsurerBelief | None = None) -> float:
    """Truncation point covering the heavier of the two beliefs' tails."""
    y = dist.tail_cut
    if reins is not None and reins.q_dist is not None:
        y = max(y, reins.q_dist.tail_cut)
    return float(y)
