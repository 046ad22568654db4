"""Run configuration: JSON schema, validation, and object construction.

Schema (all blocks required unless noted):

    {
      "distribution": {"kind": "exponential", "scale": 1.0, "atom_at_zero": 0.0},
      "reinsurer":    {"kind": "homogeneous" | "lr_exponential" | "distortion_var"
                               | "distortion_es" | "custom_lr", ...parameters},
      "market":       {"gamma", "theta", "r", "T", "c", "u"},
      "run":          {"solver": "auto", "t": 5.0, "grid": 101,
                       "y_points": 501, "y_max_plot": null}   # optional block
    }

Reinsurer parameters: lr_exponential needs "scale" (the reinsurer's
exponential scale); distortion_var / distortion_es need "alpha"; custom_lr
needs "knots" and "values" for a continuous piecewise-linear ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .beliefs import (
    ClaimDistribution,
    ReinsurerBelief,
    check_reinsurer_consistency,
    lr_exponential,
    lr_piecewise_linear,
    make_exponential,
    reinsurer_es,
    reinsurer_from_lr,
    reinsurer_homogeneous,
    reinsurer_var,
)
from .market import MarketParams, validate_net_profit

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dist: ClaimDistribution
    reins: ReinsurerBelief
    mkt: MarketParams
    solver: str = "auto"
    t: float = 0.0
    grid: int = 101
    y_points: int = 501
    y_max_plot: float | None = None
    raw: dict = field(default_factory=dict)


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing {key!r} in {where} block")
    return block[key]


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    for block in ("distribution", "reinsurer", "market"):
        if block not in doc:
            raise ConfigError(f"missing config block {block!r}")

    dblock = doc["distribution"]
    kind = _require(dblock, "kind", "distribution")
    if kind != "exponential":
        raise ConfigError(f"unsupported distribution kind {kind!r}")
    try:
        dist = make_exponential(float(_require(dblock, "scale", "distribution")),
                                float(dblock.get("atom_at_zero", 0.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    rblock = doc["reinsurer"]
    rkind = _require(rblock, "kind", "reinsurer")
    try:
        if rkind == "homogeneous":
            reins = reinsurer_homogeneous(dist)
        elif rkind == "lr_exponential":
            if dist.atom_at_zero > 0.0:
                raise ConfigError(
                    "lr_exponential assumes atomless exponential beliefs on both "
                    "sides; drop atom_at_zero or use custom_lr")
            scale_q = float(_require(rblock, "scale", "reinsurer"))
            reins = reinsurer_from_lr(
                lr_exponential(dist.mean, scale_q),
                q_dist=make_exponential(scale_q))
        elif rkind == "distortion_var":
            reins = reinsurer_var(float(_require(rblock, "alpha", "reinsurer")))
        elif rkind == "distortion_es":
            reins = reinsurer_es(float(_require(rblock, "alpha", "reinsurer")))
        elif rkind == "custom_lr":
            lr = lr_piecewise_linear(_require(rblock, "knots", "reinsurer"),
                                     _require(rblock, "values", "reinsurer"))
            reins = reinsurer_from_lr(lr)
        else:
            raise ConfigError(f"unsupported reinsurer kind {rkind!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    mblock = doc["market"]
    try:
        mkt = MarketParams(
            gamma=float(_require(mblock, "gamma", "market")),
            theta=float(_require(mblock, "theta", "market")),
            r=float(_require(mblock, "r", "market")),
            T=float(_require(mblock, "T", "market")),
            c=float(_require(mblock, "c", "market")),
            u=float(mblock.get("u", 0.0)),
        )
        validate_net_profit(mkt, dist)
        check_reinsurer_consistency(dist, reins)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    run = doc.get("run", {})
    t = float(run.get("t", 0.0))
    if not 0.0 <= t <= mkt.T:
        raise ConfigError(f"run.t must lie in [0, T], got {t}")
    grid = int(run.get("grid", 101))
    if grid < 2:
        raise ConfigError(f"run.grid must be at least 2, got {grid}")
    return RunConfig(dist=dist, reins=reins, mkt=mkt,
                     solver=str(run.get("solver", "auto")), t=t, grid=grid,
                     y_points=int(run.get("y_points", 501)),
                     y_max_plot=(float(run["y_max_plot"])
                                 if run.get("y_max_plot") is not None else None),
                     raw=doc)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    return parse_config(doc)
