"""Shared fixtures: the three exponential benchmark configurations.

Case (i):   insurer scale 2.0, reinsurer 1.0, gamma 1.0, theta 0.35
Case (ii):  insurer scale 0.5, reinsurer 1.0, gamma 0.1, theta 0.05
Case (iii): insurer scale 1.5, reinsurer 2.0, gamma 0.5, theta 0.35
all with r = 0.1 and T = 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from mvreins import (
    ClaimDistribution,
    MarketParams,
    ReinsurerBelief,
    lr_exponential,
    make_exponential,
    reinsurer_from_lr,
    reinsurer_homogeneous,
)


@dataclass(frozen=True)
class BenchmarkCase:
    scale_p: float
    scale_q: float
    dist: ClaimDistribution
    reins: ReinsurerBelief
    mkt: MarketParams


def _case(scale_p, scale_q, gamma, theta, c) -> BenchmarkCase:
    dist = make_exponential(scale_p)
    reins = reinsurer_from_lr(lr_exponential(scale_p, scale_q),
                              q_dist=make_exponential(scale_q))
    mkt = MarketParams(gamma=gamma, theta=theta, r=0.1, T=10.0, c=c, u=10.0)
    return BenchmarkCase(scale_p, scale_q, dist, reins, mkt)


@pytest.fixture(scope="session")
def case_i() -> BenchmarkCase:
    return _case(2.0, 1.0, gamma=1.0, theta=0.35, c=3.0)


@pytest.fixture(scope="session")
def case_ii() -> BenchmarkCase:
    return _case(0.5, 1.0, gamma=0.1, theta=0.05, c=1.0)


@pytest.fixture(scope="session")
def case_iii() -> BenchmarkCase:
    return _case(1.5, 2.0, gamma=0.5, theta=0.35, c=3.0)


@pytest.fixture(scope="session")
def homog():
    dist = make_exponential(1.0)
    return BenchmarkCase(1.0, 1.0, dist, reinsurer_homogeneous(dist),
                         MarketParams(gamma=1.0, theta=0.2, r=0.1, T=10.0, c=1.5, u=10.0))
