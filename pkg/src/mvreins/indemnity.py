"""Indemnity contracts: evaluation, no-sabotage checks, parametric assembly.

A contract is a chain of segments, each flat (slope 0), full (slope 1) or a
stretch of the pointwise-optimal curve

    phi_lambda(t, y) = y + (lambda - (1 + theta) LR(y)) / (gamma e^{r(T-t)}).

Assembly from a slope-regime partition follows the case table of the
equilibrium characterization: layers on decreasing-LR intervals, clipped
curve sections on moderate intervals, full-then-flat blocks on steep ones.
Segment joins are continuous by construction (anchors propagate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .beliefs import LikelihoodRatio
from .market import MarketParams
from .partition import Partition

__all__ = [
    "Segment",
    "IndemnityFunction",
    "UnconstrainedIndemnity",
    "MarginalIndemnity",
    "Theorem2Params",
    "ConstructionError",
    "phi_lambda",
    "phi_lambda_deriv",
    "build_theorem2",
    "lambda_saturation_bounds",
    "check_class_C",
    "evaluate",
    "zero_indemnity",
    "full_indemnity",
    "excess_of_loss",
    "limited_loss",
    "layer_contract",
    "dual_truncated",
    "segments_to_json",
]

_JOIN_TOL = 1e-12
_SLIVER = 1e-11  # parameter snap: segments thinner than this collapse onto a bound


def _snap(x: float, *targets: float) -> float:
    for tgt in targets:
        if abs(x - tgt) <= _SLIVER * max(1.0, abs(tgt)):
            return tgt
    return x


class ConstructionError(ValueError):
    """Requested parameters cannot produce a feasible contract."""


def phi_lambda(t: float, y, lam: float, lr: LikelihoodRatio, mkt: MarketParams):
    """Pointwise unconstrained minimizer y + (lambda - (1+theta) LR(y)) / (gamma e^{r(T-t)})."""
    if lr.singular_atom is not None:
        raise ValueError("phi_lambda is undefined on a likelihood ratio with a singular atom")
    y = np.asarray(y, dtype=float)
    ge = mkt.gamma_eff(t)
    return y + (lam - (1.0 + mkt.theta) * lr(y)) / ge


def phi_lambda_deriv(t: float, y, lr: LikelihoodRatio, mkt: MarketParams):
    """Slope of the curve: 1 - (1+theta) LR'(y) / (gamma e^{r(T-t)}); independent of lambda."""
    y = np.asarray(y, dtype=float)
    ge = mkt.gamma_eff(t)
    return 1.0 - (1.0 + mkt.theta) * np.asarray(lr.derivative(y), dtype=float) / ge


@dataclass(frozen=True)
class Segment:
    """One maximal piece of a contract.  kind is 'flat', 'full' or 'curve'."""

    lo: float
    hi: float  # math.inf allowed on the last segment
    kind: str
    start_value: float

    def __post_init__(self):
        if self.kind not in ("flat", "full", "curve"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.hi > self.lo:
            raise ValueError(f"empty segment [{self.lo}, {self.hi})")


@dataclass(frozen=True)
class IndemnityFunction:
    """Piecewise contract for a fixed decision time, member of the no-sabotage class.

    Curve segments are evaluated exactly through the stored curve callable
    (one lambda per contract).  The segment list is ordered, gap-free from 0
    and ends at infinity.
    """

    t: float
    segments: tuple[Segment, ...]
    curve: Callable[[np.ndarray], np.ndarray] | None = None
    curve_slope: Callable[[np.ndarray], np.ndarray] | None = None
    lam: float | None = None

    def __post_init__(self):
        segs = self.segments
        if not segs:
            raise ValueError("contract needs at least one segment")
        if segs[0].lo != 0.0:
            raise ValueError("contract must start at y = 0")
        if not math.isinf(segs[-1].hi):
            raise ValueError("last segment must extend to infinity")
        for a, b in zip(segs[:-1], segs[1:]):
            if abs(a.hi - b.lo) > _JOIN_TOL * max(1.0, abs(a.hi)):
                raise ValueError(f"segments not contiguous at {a.hi} vs {b.lo}")
        if any(s.kind == "curve" for s in segs) and self.curve is None:
            raise ValueError("curve segments require the curve callable")

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s.lo for s in self.segments[1:])

    @property
    def kind_sequence(self) -> tuple[str, ...]:
        return tuple(s.kind for s in self.segments)

    def __call__(self, y):
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        los = np.array([s.lo for s in self.segments])
        idx = np.clip(np.searchsorted(los, y_arr, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty_like(y_arr)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not np.any(mask):
                continue
            ys = y_arr[mask]
            if seg.kind == "flat":
                out[mask] = seg.start_value
            elif seg.kind == "full":
                out[mask] = seg.start_value + (ys - seg.lo)
            else:
                out[mask] = self.curve(ys)
        return out if np.ndim(y) else float(out[0])

    def slope(self, y):
        """Marginal indemnity q(y) = dI/dy, exact per segment."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        los = np.array([s.lo for s in self.segments])
        idx = np.clip(np.searchsorted(los, y_arr, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty_like(y_arr)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not np.any(mask):
                continue
            if seg.kind == "flat":
                out[mask] = 0.0
            elif seg.kind == "full":
                out[mask] = 1.0
            else:
                out[mask] = self.curve_slope(y_arr[mask])
        return out if np.ndim(y) else float(out[0])


def evaluate(contract, y):
    """Evaluate any contract object (callable) at claim size(s) y >= 0."""
    return contract(y)


def _merge_segments(segs: list[Segment]) -> tuple[Segment, ...]:
    """Fuse adjacent same-kind segments that continue the same line or curve."""
    out: list[Segment] = []
    for s in segs:
        if s.hi - s.lo <= 0:
            continue
        if out and out[-1].kind == s.kind:
            prev = out[-1]
            if prev.kind == "flat":
                same = abs(prev.start_value - s.start_value) <= 1e-9
            elif prev.kind == "full":
                same = abs(prev.start_value + (s.lo - prev.lo) - s.start_value) <= 1e-9
            else:
                same = True  # one curve per contract
            if same:
                out[-1] = Segment(prev.lo, s.hi, prev.kind, prev.start_value)
                continue
        out.append(s)
    return tuple(out)


def _scan_crossings(fn, lo: float, hi: float, n: int = 160) -> list[float]:
    """Roots of a scalar function on (lo, hi), by sign scan plus Brent refinement."""
    if hi - lo <= 1e-13:
        return []
    ys = np.linspace(lo, hi, n)
    vals = np.array([fn(v) for v in ys])
    roots = []
    for k in range(n - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(ys[k]))
        elif a * b < 0:
            roots.append(float(brentq(fn, ys[k], ys[k + 1], xtol=1e-13, rtol=1e-14)))
    return roots


def _clip_section(curve, lo: float, hi: float, a_lo: float, a_hi: float | None) -> list[Segment]:
    """Cut min{max{curve, lower}, upper} on [lo, hi] into pure segments.

    lower is max(a_lo, a_hi + y - hi); upper is min(a_lo + y - lo, a_hi);
    a_hi = None drops the right-hand constraints (terminal interval).
    The curve is monotone with slope in [0, 1] here, so each envelope line
    is crossed at most once per sub-piece.
    """

    def lower(y):
        if a_hi is None:
            return a_lo
        return max(a_lo, a_hi + y - hi)

    def upper(y):
        if a_hi is None:
            return a_lo + y - lo
        return min(a_lo + y - lo, a_hi)

    cuts = {lo, hi}
    if a_hi is not None:
        dv = a_hi - a_lo
        for kink in (lo + dv, hi - dv):
            if lo < kink < hi:
                cuts.add(kink)
    # within each sub-piece both envelopes are single lines and the curve has
    # slope in [0, 1], so curve-minus-line is monotone: endpoint signs decide
    base_cuts = sorted(cuts)
    for a, b in zip(base_cuts[:-1], base_cuts[1:]):
        for line in (lower, upper):
            fn = lambda y: float(curve(np.array(y))) - line(y)
            fa, fb = fn(a), fn(b)
            if fa == 0.0 or fb == 0.0:
                continue
            if fa * fb < 0:
                cuts.add(float(brentq(fn, a, b, xtol=1e-13, rtol=1e-14)))

    edges = sorted(cuts)
    # collapse cuts that collide with each other or with the section ends,
    # keeping the ends exact
    scale = max(1.0, abs(hi))
    merged_edges = [lo]
    for e in edges[1:]:
        if e - merged_edges[-1] > 1e-12 * scale:
            merged_edges.append(e)
    merged_edges[-1] = hi
    if len(merged_edges) > 1 and merged_edges[-1] - merged_edges[-2] <= 1e-12 * scale:
        del merged_edges[-2]
    edges = merged_edges
    segs: list[Segment] = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-13 * max(1.0, b):
            continue
        mid = 0.5 * (a + b)
        cv = float(curve(np.array(mid)))
        lowv, upv = lower(mid), upper(mid)
        if cv <= lowv:
            if a_hi is not None and a_hi + mid - hi > a_lo:
                segs.append(Segment(a, b, "full", a_hi + a - hi))
            else:
                segs.append(Segment(a, b, "flat", a_lo))
        elif cv >= upv:
            if a_hi is not None and a_hi < a_lo + mid - lo:
                segs.append(Segment(a, b, "flat", a_hi))
            else:
                segs.append(Segment(a, b, "full", a_lo + a - lo))
        else:
            segs.append(Segment(a, b, "curve", float(curve(np.array(a)))))
    return segs


@dataclass(frozen=True)
class Theorem2Params:
    """Free parameters of the parametric equilibrium family on a partition.

    endpoint_values[i] is the contract value at interior breakpoint i+1;
    kinks maps interval index -> layer start for label-1/3 intervals; lam
    drives every curve section.
    """

    endpoint_values: tuple[float, ...] = ()
    kinks: dict = field(default_factory=dict)
    lam: float = 1.0


def build_theorem2(part: Partition, params: Theorem2Params, lr: LikelihoodRatio,
                   mkt: MarketParams, t: float, ymax: float | None = None) -> IndemnityFunction:
    """Assemble the parametric contract for a partition and parameter record.

    Per-interval shapes: label 1 -> layer (terminal: excess-of-loss from the
    kink), label 2 -> clipped curve, label 3 -> full slope then flat
    (terminal: limited block).  The result is continuous and incentive
    compatible whenever the endpoint increments are feasible.
    """
    intervals = part.intervals()
    n_interior = len(intervals) - 1
    if len(params.endpoint_values) != n_interior:
        raise ConstructionError(
            f"expected {n_interior} endpoint values, got {len(params.endpoint_values)}")
    values = (0.0,) + tuple(float(v) for v in params.endpoint_values)
    for i in range(n_interior):
        lo, hi, _ = intervals[i]
        dv = values[i + 1] - values[i]
        if dv < -1e-12 or dv > (hi - lo) + 1e-12:
            raise ConstructionError(
                f"endpoint increment {dv} outside [0, {hi - lo}] on interval {i}")

    if ymax is None:
        ymax = part.ymax
    lam = float(params.lam)
    curve = lambda y: phi_lambda(t, y, lam, lr, mkt)
    curve_slope = lambda y: phi_lambda_deriv(t, y, lr, mkt)

    segs: list[Segment] = []
    for i, (lo, hi, label) in enumerate(intervals):
        a_lo = values[i]
        terminal = i == n_interior
        if terminal:
            if label == 1:
                s = float(params.kinks.get(i, lo))
                if s < lo - 1e-12:
                    raise ConstructionError(f"terminal kink {s} below interval start {lo}")
                s = _snap(max(s, lo), lo)
                if s > lo:
                    segs.append(Segment(lo, s, "flat", a_lo))
                segs.append(Segment(s, math.inf, "full", a_lo))
            elif label == 3:
                s = float(params.kinks.get(i, lo))
                if s < lo - 1e-12:
                    raise ConstructionError(f"terminal kink {s} below interval start {lo}")
                s = _snap(max(s, lo), lo)
                if s > lo:
                    segs.append(Segment(lo, s, "full", a_lo))
                segs.append(Segment(s, math.inf, "flat", a_lo + (s - lo)))
            else:
                body = _clip_section(curve, lo, ymax, a_lo, None)
                if body:
                    last = body[-1]
                    body[-1] = Segment(last.lo, math.inf, last.kind, last.start_value)
                else:
                    body = [Segment(lo, math.inf, "flat", a_lo)]
                segs.extend(body)
        else:
            a_hi = values[i + 1]
            dv = a_hi - a_lo
            width = hi - lo
            if label == 1:
                s = float(params.kinks.get(i, lo))
                if not (lo - 1e-12 <= s <= hi - dv + 1e-12):
                    raise ConstructionError(
                        f"layer start {s} outside [{lo}, {hi - dv}] on interval {i}")
                s = _snap(min(max(s, lo), hi - dv), lo, hi - dv)
                dv = _snap(dv, 0.0, width)
                if s > lo:
                    segs.append(Segment(lo, s, "flat", a_lo))
                if dv > 0:
                    segs.append(Segment(s, s + dv, "full", a_lo))
                if hi - (s + dv) > _SLIVER * max(1.0, hi):
                    segs.append(Segment(s + dv, hi, "flat", a_hi))
                elif segs:
                    segs[-1] = replace(segs[-1], hi=hi)
            elif label == 3:
                s = float(params.kinks.get(i, lo))
                window = _snap(width - dv, 0.0, width)
                if not (lo - 1e-12 <= s <= lo + dv + 1e-12):
                    raise ConstructionError(
                        f"pause start {s} outside [{lo}, {lo + dv}] on interval {i}")
                s = _snap(min(max(s, lo), lo + dv), lo, lo + dv)
                if s > lo:
                    segs.append(Segment(lo, s, "full", a_lo))
                if window > 0:
                    segs.append(Segment(s, s + window, "flat", a_lo + (s - lo)))
                if hi - (s + window) > _SLIVER * max(1.0, hi):
                    segs.append(Segment(s + window, hi, "full", a_lo + (s - lo)))
                elif segs:
                    segs[-1] = replace(segs[-1], hi=hi)
            else:
                segs.extend(_clip_section(curve, lo, hi, a_lo, a_hi))

    merged = _merge_segments(segs)
    has_curve = any(s.kind == "curve" for s in merged)
    return IndemnityFunction(
        t=t,
        segments=merged,
        curve=curve if has_curve else None,
        curve_slope=curve_slope if has_curve else None,
        lam=lam,
    )


def lambda_saturation_bounds(part: Partition, endpoint_values: Sequence[float],
                             lr: LikelihoodRatio, mkt: MarketParams, t: float,
                             n_grid: int = 256) -> tuple[float, float] | None:
    """(lambda_min, lambda_max) beyond which every curve section is fully clipped.

    For lambda >= lambda_max the curve lies above its upper envelope on all
    moderate intervals; for lambda <= lambda_min below the lower envelope.
    Returns None when the partition has no moderate interval.
    """
    intervals = part.intervals()
    values = (0.0,) + tuple(float(v) for v in endpoint_values)
    ge = mkt.gamma_eff(t)
    onep = 1.0 + mkt.theta
    lam_lo = math.inf
    lam_hi = -math.inf
    found = False
    for i, (lo, hi, label) in enumerate(intervals):
        if label != 2:
            continue
        found = True
        a_lo = values[i]
        hi_eff = min(hi, part.ymax)
        ys = np.linspace(lo, hi_eff, n_grid)
        # envelope kinks and ratio knots carry the extrema for convex or
        # piecewise-linear ratios; without them the bound is grid-approximate
        extra = [b for b in lr.breakpoints if lo < b < hi_eff]
        if i < len(intervals) - 1:
            dv = values[i + 1] - a_lo
            extra.extend(k for k in (lo + dv, hi - dv) if lo < k < hi_eff)
        if extra:
            ys = np.unique(np.concatenate([ys, np.asarray(extra, dtype=float)]))
        lrv = np.asarray(lr(ys), dtype=float)
        if i < len(intervals) - 1:
            a_hi = values[i + 1]
            upper = np.minimum(a_lo + ys - lo, a_hi)
            lower = np.maximum(a_lo, a_hi + ys - hi)
        else:
            upper = a_lo + ys - lo
            lower = np.full_like(ys, a_lo)
        lam_hi = max(lam_hi, float(np.max(ge * (upper - ys) + onep * lrv)))
        lam_lo = min(lam_lo, float(np.min(ge * (lower - ys) + onep * lrv)))
    if not found:
        return None
    return lam_lo, lam_hi


def check_class_C(contract, grid) -> tuple[bool, float | None]:
    """No-sabotage membership on a grid: I(0) = 0 and increments within [0, dy].

    Returns (ok, first violating grid point or None).
    """
    ys = np.asarray(grid, dtype=float)
    if ys.ndim != 1 or ys.size < 2 or ys[0] != 0.0 or np.any(np.diff(ys) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    vals = np.asarray(contract(ys), dtype=float)
    tol = 1e-9
    if abs(vals[0]) > tol:
        return False, 0.0
    dI = np.diff(vals)
    dy = np.diff(ys)
    bad = np.where((dI < -tol) | (dI > dy + tol))[0]
    if bad.size:
        return False, float(ys[bad[0]])
    return True, None


@dataclass(frozen=True)
class UnconstrainedIndemnity:
    """Benchmark contract without the no-sabotage constraint: clip of the curve to [0, y].

    Member of the relaxed class (0 <= I <= y) only; slopes may leave [0, 1]
    and the profile may decrease.
    """

    t: float
    lam: float
    lr: LikelihoodRatio
    mkt: MarketParams

    def __call__(self, y):
        y_arr = np.asarray(y, dtype=float)
        phi = phi_lambda(self.t, y_arr, self.lam, self.lr, self.mkt)
        out = np.minimum(y_arr, np.maximum(0.0, phi))
        return out if np.ndim(y) else float(out)

    def breakpoints(self, ymax: float) -> tuple[float, ...]:
        """Kink locations (curve crossing 0 and the diagonal) for quadrature."""
        onep = 1.0 + self.mkt.theta
        pieces = [0.0] + [b for b in self.lr.breakpoints if 0 < b < ymax] + [ymax]
        cuts: list[float] = []
        phi0 = lambda v: float(phi_lambda(self.t, np.array(v), self.lam, self.lr, self.mkt))
        diag = lambda v: self.lam - onep * float(self.lr(np.array(v)))  # phi(y) - y, rescaled
        for a, b in zip(pieces[:-1], pieces[1:]):
            cuts.extend(_scan_crossings(phi0, a, b))
            cuts.extend(_scan_crossings(diag, a, b))
        cuts.extend(self.lr.breakpoints)
        return tuple(sorted(c for c in cuts if 0 < c < ymax))

    def max_slope(self, ymax: float, n: int = 4001) -> float:
        ys = np.linspace(0.0, ymax, n)
        vals = self(ys)
        return float(np.max(np.diff(vals) / np.diff(ys)))


@dataclass(frozen=True)
class MarginalIndemnity:
    """Grid contract given by per-cell slopes in [0, 1]; value is the running integral."""

    ys: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if ys.ndim != 1 or ys.size < 2 or ys[0] != 0.0 or np.any(np.diff(ys) <= 0):
            raise ValueError("grid must be strictly increasing from 0")
        if q.shape != (ys.size - 1,):
            raise ValueError("need one slope per grid cell")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "_values", np.concatenate([[0.0], np.cumsum(q * np.diff(ys))]))

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __call__(self, y):
        y_arr = np.asarray(y, dtype=float)
        out = np.interp(y_arr, self.ys, self._values)
        return out if np.ndim(y) else float(out)

    def in_class_C(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.q >= -tol) and np.all(self.q <= 1.0 + tol))


def zero_indemnity(t: float = 0.0) -> IndemnityFunction:
    return IndemnityFunction(t=t, segments=(Segment(0.0, math.inf, "flat", 0.0),))


def full_indemnity(t: float = 0.0) -> IndemnityFunction:
    return IndemnityFunction(t=t, segments=(Segment(0.0, math.inf, "full", 0.0),))


def excess_of_loss(d: float, t: float = 0.0) -> IndemnityFunction:
    """I(y) = (y - d)_+."""
    if d < 0:
        raise ValueError(f"deductible must be nonnegative, got {d}")
    if d == 0.0:
        return full_indemnity(t)
    return IndemnityFunction(t=t, segments=(
        Segment(0.0, d, "flat", 0.0), Segment(d, math.inf, "full", 0.0)))


def limited_loss(d: float, t: float = 0.0) -> IndemnityFunction:
    """I(y) = y ^ d (full transfer capped at d)."""
    if d < 0:
        raise ValueError(f"cap must be nonnegative, got {d}")
    if d == 0.0:
        return zero_indemnity(t)
    return IndemnityFunction(t=t, segments=(
        Segment(0.0, d, "full", 0.0), Segment(d, math.inf, "flat", d)))


def layer_contract(a: float, b: float, t: float = 0.0) -> IndemnityFunction:
    """I(y) = (y - a)_+ - (y - b)_+ for 0 <= a < b."""
    if not 0.0 <= a < b:
        raise ValueError(f"need 0 <= a < b, got a={a}, b={b}")
    segs = []
    if a > 0:
        segs.append(Segment(0.0, a, "flat", 0.0))
    segs.append(Segment(a, b, "full", 0.0))
    segs.append(Segment(b, math.inf, "flat", b - a))
    return IndemnityFunction(t=t, segments=tuple(segs))


def dual_truncated(a: float, b: float, t: float = 0.0) -> IndemnityFunction:
    """I(y) = y ^ a + (y - b)_+ for 0 <= a <= b (full cover low, excess cover high)."""
    if a < 0 or b < a:
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")
    if a == 0.0:
        return excess_of_loss(b, t)
    if b == a:
        return full_indemnity(t)
    return IndemnityFunction(t=t, segments=(
        Segment(0.0, a, "full", 0.0),
        Segment(a, b, "flat", a),
        Segment(b, math.inf, "full", a)))


def segments_to_json(contract: IndemnityFunction) -> list[dict]:
    """JSON-friendly segment list: {lo, hi, kind, anchor, lambda?}."""
    out = []
    for s in contract.segments:
        row = {"lo": s.lo, "hi": None if math.isinf(s.hi) else s.hi,
               "kind": s.kind, "anchor": s.start_value}
        if s.kind == "curve":
            row["lambda"] = contract.lam
        out.append(row)
    return out
