"""Brute-force ground truth for the per-time problem.

The no-sabotage class is exactly the set of contracts whose marginal slopes
lie in [0, 1], so discretizing the slopes on a grid turns the static
objective into a box-constrained convex quadratic in q.  Nothing here knows
about partitions, parametric families or multipliers; agreement with the
structured solvers is the strongest internal check the package has.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beliefs import ClaimDistribution, ReinsurerBelief, effective_ymax, var_alpha
from .indemnity import MarginalIndemnity
from .market import MarketParams
from .quadrature import integrate

__all__ = ["DiscretizedProblem", "DiscretizationError", "discretize", "solve_qp"]


class DiscretizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscretizedProblem:
    """Exact per-cell moments of both measures for piecewise-linear contracts.

    With I linear inside each cell, every term of the objective is a
    polynomial in the slopes with coefficients assembled from the cell
    moments below; the quadratic form is positive semidefinite because the
    underlying functional is convex.
    """

    edges: np.ndarray       # n+1 grid edges from 0
    ge: float               # gamma e^{r(T-t)}
    theta: float
    wP: np.ndarray          # insurer cell masses
    muP: np.ndarray         # insurer cell first moments
    nuP: np.ndarray         # insurer cell second moments
    mean: float
    second_moment: float
    wQ: np.ndarray | None   # reinsurer cell masses (None for VaR pricing)
    muQ: np.ndarray | None
    var_level: float | None = None  # atom location for VaR pricing

    @property
    def n(self) -> int:
        return len(self.edges) - 1

    def q_linear_coeffs(self) -> np.ndarray:
        """c with E_Q[I] = c . q, valid for any slope vector q."""
        dx = np.diff(self.edges)
        y0 = self.edges[:-1]
        if self.var_level is not None:
            # E_Q[I] = I(var_level): widths of the cells below the atom
            c = np.clip(self.var_level - y0, 0.0, dx)
            return c
        mQ = self.muQ - y0 * self.wQ
        wsufQ = np.concatenate([np.cumsum(self.wQ[::-1])[::-1][1:], [0.0]])
        return dx * wsufQ + mQ

    def h_and_grad(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective and gradient in O(n) via suffix sums."""
        dx = np.diff(self.edges)
        y0 = self.edges[:-1]
        wP, muP, nuP = self.wP, self.muP, self.nuP
        mP = muP - y0 * wP
        sP = nuP - 2 * y0 * muP + y0 * y0 * wP
        Il = np.concatenate([[0.0], np.cumsum(q * dx)])[:-1]

        EI = float(np.sum(Il * wP + q * mP))
        EYI = float(np.sum(Il * muP + q * (nuP - y0 * muP)))
        EI2 = float(np.sum(Il * Il * wP + 2 * Il * q * mP + q * q * sP))
        cQ = self.q_linear_coeffs()
        EQ = float(np.dot(cQ, q))
        H = ((1.0 + self.theta) * EQ + (self.mean - EI)
             + 0.5 * self.ge * (self.second_moment - 2 * EYI + EI2))

        def suffix(a):
            return np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])

        dEI = dx * suffix(wP) + mP
        dEYI = dx * suffix(muP) + (nuP - y0 * muP)
        dEI2 = 2 * Il * mP + 2 * q * sP + 2 * dx * suffix(Il * wP + q * mP)
        grad = ((1.0 + self.theta) * cQ - dEI
                + 0.5 * self.ge * (-2 * dEYI + dEI2))
        return H, grad

    def hess_diag(self) -> np.ndarray:
        """Diagonal of the Hessian, used as a preconditioner."""
        dx = np.diff(self.edges)
        y0 = self.edges[:-1]
        sP = self.nuP - 2 * y0 * self.muP + y0 * y0 * self.wP
        wsufP = np.concatenate([np.cumsum(self.wP[::-1])[::-1][1:], [0.0]])
        return self.ge * (sP + dx * dx * wsufP)


def _cell_moments_generic(dist: ClaimDistribution, edges: np.ndarray,
                          weight=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(edges) - 1
    w = np.empty(n)
    mu = np.empty(n)
    nu = np.empty(n)
    wfun = weight if weight is not None else (lambda y: 1.0)
    for k in range(n):
        a, b = edges[k], edges[k + 1]
        w[k] = integrate(lambda y: np.asarray(wfun(y) * dist.pdf(y), dtype=float), a, b,
                         dist.breakpoints)
        mu[k] = integrate(lambda y: np.asarray(y * wfun(y) * dist.pdf(y), dtype=float),
                          a, b, dist.breakpoints)
        nu[k] = integrate(lambda y: np.asarray(y * y * wfun(y) * dist.pdf(y), dtype=float),
                          a, b, dist.breakpoints)
    return w, mu, nu


def discretize(dist: ClaimDistribution, reins: ReinsurerBelief, mkt: MarketParams,
               t: float, n: int = 2000, ymax: float | None = None) -> DiscretizedProblem:
    """Uniform slope grid with exact cell moments under both measures.

    Cell moments come from the distribution's closed form when available,
    from per-cell quadrature otherwise; the reinsurer side goes through the
    closed-form Q distribution, the likelihood ratio, or the VaR atom rule.
    """
    if n < 16:
        raise ValueError(f"need at least 16 cells, got {n}")
    if ymax is None:
        ymax = effective_ymax(dist, reins)
    edges = np.linspace(0.0, ymax, n + 1)
    lo, hi = edges[:-1], edges[1:]
    if dist.cell_moments is not None:
        wP, muP, nuP = dist.cell_moments(lo, hi)
    else:
        wP, muP, nuP = _cell_moments_generic(dist, edges)

    mass = float(np.sum(wP)) + dist.atom_at_zero
    expect = float(dist.cdf(np.array(ymax)))
    if abs(mass - expect) > 1e-9:
        raise DiscretizationError(
            f"cell masses sum to {mass}, expected F(ymax) = {expect}")

    var_level = None
    wQ = muQ = None
    if reins.kind == "var":
        var_level = var_alpha(dist, reins.alpha)
    elif reins.q_dist is not None and reins.q_dist.cell_moments is not None:
        wQ, muQ, _ = reins.q_dist.cell_moments(lo, hi)
    else:
        lr = reins.lr_for(dist)
        wQ, muQ, _ = _cell_moments_generic(dist, edges, weight=lambda y: lr(y))

    return DiscretizedProblem(edges=edges, ge=mkt.gamma_eff(t), theta=mkt.theta,
                              wP=wP, muP=muP, nuP=nuP, mean=dist.mean,
                              second_moment=dist.second_moment, wQ=wQ, muQ=muQ,
                              var_level=var_level)


def solve_qp(prob: DiscretizedProblem, tol: float = 1e-8,
             max_iter: int = 100_000) -> tuple[MarginalIndemnity, float, dict]:
    """Projected gradient on the box [0,1]^n with a spectral step.

    The step is Barzilai-Borwein in the diagonally preconditioned metric
    (plain spectral steps stall in the deep tail, where cell masses and
    gradients both underflow the stopping tolerance), safeguarded by
    halving until the objective does not increase.  Deterministic start at
    q = 1/2.  Returns the best iterate flagged when the cap is hit.
    """
    n = prob.n
    diag = np.maximum(prob.hess_diag(), 1e-300)
    q = np.full(n, 0.5)
    H, g = prob.h_and_grad(q)
    step = 1.0
    prev_q = None
    prev_g = None
    converged = False
    iters = 0
    h_trace = [H]
    for iters in range(1, max_iter + 1):
        direction = -g / diag
        stat = float(np.max(np.abs(np.clip(q + direction, 0.0, 1.0) - q)))
        if stat <= tol:
            converged = True
            break
        if prev_q is not None:
            dq = q - prev_q
            dg = (g - prev_g) / diag
            denom = float(np.dot(dq, dg))
            step = float(np.dot(dq, dq)) / denom if denom > 0 else 1.0
            step = min(max(step, 1e-8), 1e8)
        trial_step = step
        for _ in range(60):
            q_new = np.clip(q + trial_step * direction, 0.0, 1.0)
            H_new, g_new = prob.h_and_grad(q_new)
            if H_new <= H + 1e-15 * max(1.0, abs(H)):
                break
            trial_step *= 0.5
        else:
            converged = True  # no descent direction left at float precision
            break
        prev_q, prev_g = q, g
        q, H, g = q_new, H_new, g_new
        h_trace.append(H)

    contract = MarginalIndemnity(ys=prob.edges.copy(), q=q)
    info = {"iterations": iters, "converged": converged,
            "stationarity": float(np.max(np.abs(np.clip(q - g / diag, 0.0, 1.0) - q))),
            "h_trace": np.asarray(h_trace)}
    return contract, float(H), info
