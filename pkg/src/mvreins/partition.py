"""Slope-regime partition of the claim axis.

The optimal contract's local shape on an interval is decided by where the
likelihood-ratio derivative sits relative to the threshold
gamma e^{r(T-t)} / (1 + theta):

    label 1:  LR'(y) < 0                    (local layer / terminal excess-of-loss)
    label 2:  0 <= LR'(y) <= threshold      (coinsurance along the pointwise curve)
    label 3:  LR'(y) > threshold            (full transfer then flat)

Crossings of LR' with 0 and with the threshold are located by dense
sampling plus bisection inside each C1 piece of the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beliefs import ClaimDistribution, LikelihoodRatio
from .market import MarketParams

__all__ = ["Partition", "PartitionError", "classify_partition"]

_SAMPLES_PER_PIECE = 1024
_MERGE_TOL = 1e-10


class PartitionError(RuntimeError):
    """A detected sign change could not be bracketed and refined."""


@dataclass(frozen=True)
class Partition:
    """Half-open intervals [lo, hi) covering [0, inf) with slope-regime labels."""

    t: float
    breakpoints: tuple[float, ...]  # interior breakpoints, strictly increasing
    labels: tuple[int, ...]         # one label per interval, len = len(breakpoints) + 1
    threshold: float
    ymax: float                     # numerical truncation used during construction

    def __post_init__(self):
        if len(self.labels) != len(self.breakpoints) + 1:
            raise ValueError("labels must have exactly one more entry than breakpoints")
        if any(b <= 0 for b in self.breakpoints):
            raise ValueError("interior breakpoints must be positive")
        if any(l not in (1, 2, 3) for l in self.labels):
            raise ValueError("labels must be 1, 2 or 3")

    @property
    def edges(self) -> tuple[float, ...]:
        return (0.0,) + self.breakpoints + (math.inf,)

    def intervals(self) -> list[tuple[float, float, int]]:
        e = self.edges
        return [(e[i], e[i + 1], self.labels[i]) for i in range(len(self.labels))]

    def label_at(self, y: float) -> int:
        idx = int(np.searchsorted(np.asarray(self.breakpoints), y, side="right"))
        return self.labels[idx]


def _bisect(fn, lo: float, hi: float, rel_tol: float = 1e-12) -> float:
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise PartitionError(f"sign change detected by sampling could not be bracketed on [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rel_tol * max(1.0, abs(mid)):
            return mid
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def _crossings_in_piece(deriv, lo: float, hi: float, level: float) -> list[float]:
    ys = np.linspace(lo, hi, _SAMPLES_PER_PIECE)
    vals = np.asarray(deriv(ys), dtype=float) - level
    out = []
    sign = np.sign(vals)
    for k in range(len(ys) - 1):
        if sign[k] == 0.0:
            continue
        if sign[k] * sign[k + 1] < 0:
            out.append(_bisect(lambda y: float(deriv(np.array(y))) - level, ys[k], ys[k + 1]))
    return out


def _classify_value(d: float, threshold: float) -> int:
    if d < 0.0:
        return 1
    if d > threshold:
        return 3
    return 2  # ties on either boundary belong to the closed middle regime


def classify_partition(lr: LikelihoodRatio, mkt: MarketParams, t: float,
                       dist: ClaimDistribution | None = None,
                       ymax: float | None = None) -> Partition:
    """Partition [0, inf) by the sign regime of LR' against the time-t threshold.

    Breakpoints are the LR's own non-differentiability points plus every
    crossing of LR' with 0 or with the threshold, refined by bisection.
    Contracts priced by VaR (singular LR) are handled by their dedicated
    solver, not here.
    """
    if lr.singular_atom is not None:
        raise ValueError("partition is undefined for a likelihood ratio with a singular atom")
    if not 0.0 <= t <= mkt.T:
        raise ValueError(f"t must lie in [0, T], got {t}")
    if ymax is None:
        ymax = dist.tail_cut if dist is not None else 50.0
    threshold = mkt.slope_threshold(t)

    piece_edges = [0.0] + [b for b in lr.breakpoints if 0.0 < b < ymax] + [ymax]
    cuts: list[float] = []
    for lo, hi in zip(piece_edges[:-1], piece_edges[1:]):
        pad = 1e-12 * max(1.0, hi - lo)
        for level in (0.0, threshold):
            cuts.extend(_crossings_in_piece(lr.derivative, lo + pad, hi - pad, level))
    cuts.extend(b for b in lr.breakpoints if 0.0 < b < ymax)

    cuts = sorted(cuts)
    merged: list[float] = []
    for cpt in cuts:
        if merged and abs(cpt - merged[-1]) <= _MERGE_TOL * max(1.0, cpt):
            continue
        merged.append(cpt)

    edges = [0.0] + merged + [ymax]
    labels: list[int] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        probes = lo + (hi - lo) * np.array([0.25, 0.5, 0.75])
        dvals = np.asarray(lr.derivative(probes), dtype=float)
        votes = [_classify_value(float(d), threshold) for d in dvals]
        labels.append(max(set(votes), key=votes.count))

    # merge crossing-induced splits that ended up with equal labels; splits at
    # genuine LR breakpoints are kept even when labels coincide
    lr_bks = set(float(b) for b in lr.breakpoints)
    keep_bk: list[float] = []
    keep_lb: list[int] = [labels[0]]
    for bpt, lab in zip(merged, labels[1:]):
        is_lr_knot = any(abs(bpt - b) <= _MERGE_TOL * max(1.0, bpt) for b in lr_bks)
        if lab == keep_lb[-1] and not is_lr_knot:
            continue
        keep_bk.append(bpt)
        keep_lb.append(lab)

    return Partition(t=t, breakpoints=tuple(keep_bk), labels=tuple(keep_lb),
                     threshold=threshold, ymax=float(ymax))
