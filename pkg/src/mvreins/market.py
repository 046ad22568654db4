"""Market and preference parameters shared by every solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .beliefs import ClaimDistribution

__all__ = ["MarketParams", "validate_net_profit"]


@dataclass(frozen=True)
class MarketParams:
    """Risk aversion, safety loading, rate, horizon, premium income, initial surplus.

    The claim arrival intensity is fixed at one per unit time; the premium
    income rate must exceed the expected claim payout per unit time (net
    profit condition), which is validated against a distribution separately.
    """

    gamma: float
    theta: float
    r: float
    T: float
    c: float
    u: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.theta < 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")
        if self.r < 0:
            raise ValueError(f"r must be nonnegative, got {self.r}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.beta != 1.0:
            raise ValueError("claim intensity is fixed at 1")

    def gamma_eff(self, t: float) -> float:
        """Effective risk weight gamma * exp(r (T - t)) at time t."""
        if not 0.0 <= t <= self.T + 1e-12:
            raise ValueError(f"t must lie in [0, T], got {t}")
        return self.gamma * math.exp(self.r * (self.T - t))

    def slope_threshold(self, t: float) -> float:
        """LR-derivative threshold gamma e^{r(T-t)} / (1 + theta) separating slope regimes."""
        return self.gamma_eff(t) / (1.0 + self.theta)

    def discount(self, t: float) -> float:
        """Accumulation factor e^{r(T-t)} from t to the horizon."""
        return math.exp(self.r * (self.T - t))


def validate_net_profit(mkt: MarketParams, dist: ClaimDistribution) -> None:
    """Premium income must exceed expected claims per unit time."""
    if mkt.c <= dist.mean:
        raise ValueError(
            f"net profit condition violated: premium income rate c={mkt.c} "
            f"must exceed the expected claim rate E[Y]={dist.mean}"
        )
