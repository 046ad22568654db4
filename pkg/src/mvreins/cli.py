"""Command-line driver.

Subcommands: solve | partition | oracle | simulate | value | compare | sweep.
All read a JSON config (--config) and write CSV/JSON artifacts into --out.
Exit codes: 0 success, 2 config error, 3 numerical non-certification.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .beliefs import effective_ymax
from .config import ConfigError, RunConfig, load_config
from .hjb import GridTooCoarseError, solve_value_odes
from .quadrature import QuadratureError
from .indemnity import (
    IndemnityFunction,
    Segment,
    check_class_C,
    phi_lambda,
    phi_lambda_deriv,
    segments_to_json,
)
from .oracle import discretize, solve_qp
from .partition import classify_partition
from .simulate import SimConfig, estimate_objective, simulate_terminal
from .solver import (
    CERTIFY_TOL,
    EquilibriumEntry,
    EquilibriumSolution,
    solve_homogeneous,
    solve_path,
    solve_unconstrained,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else repr(float(v)) if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _plot_grid(cfg: RunConfig) -> np.ndarray:
    ymax = cfg.y_max_plot
    if ymax is None:
        ymax = float(cfg.dist.quantile(0.995))
        if cfg.reins.q_dist is not None:
            ymax = max(ymax, float(cfg.reins.q_dist.quantile(0.995)))
    return np.linspace(0.0, ymax, cfg.y_points)


def _entry_params_row(entry: EquilibriumEntry) -> dict:
    flat = {}
    for k, v in entry.params.items():
        if isinstance(v, (int, float)):
            flat[k] = float(v)
    return flat


def _solution_to_json(sol: EquilibriumSolution) -> dict:
    entries = []
    for e in sol.entries:
        entries.append({
            "t": e.t,
            "solver": e.solver,
            "h_star": e.h_star,
            "q_mean": e.q_mean,
            "retained_mean": e.retained_mean,
            "lambda": e.lam,
            "residual": e.residual,
            "certified": e.certified,
            "params": _entry_params_row(e),
            "segments": segments_to_json(e.contract)
            if isinstance(e.contract, IndemnityFunction) else None,
        })
    return {"solver": sol.solver, "ts": [float(t) for t in sol.ts], "entries": entries}


def solution_from_json(doc: dict, cfg: RunConfig) -> EquilibriumSolution:
    """Rebuild a solved strategy from the solve artifact plus its config."""
    ts = np.asarray(doc["ts"], dtype=float)
    lr = cfg.reins.lr_for(cfg.dist) if cfg.reins.kind != "var" else None
    entries = []
    for rec in doc["entries"]:
        t = float(rec["t"])
        lam = rec.get("lambda")
        segs = []
        for s in rec["segments"]:
            hi = math.inf if s["hi"] is None else float(s["hi"])
            segs.append(Segment(float(s["lo"]), hi, s["kind"], float(s["anchor"])))
        has_curve = any(s.kind == "curve" for s in segs)
        curve = curve_slope = None
        if has_curve:
            if lr is None or lam is None:
                raise ConfigError("curve segments need a likelihood ratio and multiplier")
            curve = (lambda lam_, t_: (lambda y: phi_lambda(t_, y, lam_, lr, cfg.mkt)))(lam, t)
            curve_slope = (lambda t_: (lambda y: phi_lambda_deriv(t_, y, lr, cfg.mkt)))(t)
        contract = IndemnityFunction(t=t, segments=tuple(segs), curve=curve,
                                     curve_slope=curve_slope, lam=lam)
        entries.append(EquilibriumEntry(
            t=t, contract=contract, h_star=float(rec["h_star"]),
            q_mean=float(rec["q_mean"]), retained_mean=float(rec["retained_mean"]),
            params=rec.get("params", {}), solver=rec["solver"], lam=lam,
            residual=rec.get("residual"), certified=bool(rec.get("certified"))))
    return EquilibriumSolution(ts=ts, entries=tuple(entries), solver=doc["solver"],
                               dist=cfg.dist, reins=cfg.reins, mkt=cfg.mkt)


def cmd_partition(cfg: RunConfig, args, out: Path) -> int:
    lr = cfg.reins.lr_for(cfg.dist)
    part = classify_partition(lr, cfg.mkt, cfg.t, dist=cfg.dist,
                              ymax=effective_ymax(cfg.dist, cfg.reins))
    rows = [{"lo": lo, "hi": None if math.isinf(hi) else hi, "label": lab}
            for lo, hi, lab in part.intervals()]
    _write_json(out / "partition.json", {"t": cfg.t, "threshold": part.threshold,
                                         "intervals": rows})
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args, out: Path) -> int:
    sol = solve_path(cfg.dist, cfg.reins, cfg.mkt, tag=cfg.solver,
                     n_nodes=cfg.grid, certify=True)
    _write_json(out / "solution.json", _solution_to_json(sol))
    vf = solve_value_odes(sol)
    _write_csv(out / "values.csv", ["t", "M", "m"],
               [(t, M, m) for t, M, m in zip(vf.ts, vf.M, vf.m)])

    ymax = effective_ymax(cfg.dist, cfg.reins)
    grid = np.linspace(0.0, ymax, 2001)
    report = {"criteria": [], "pass": True}
    worst_residual = 0.0
    class_c_ok = True
    for e in sol.entries:
        if e.residual is not None:
            worst_residual = max(worst_residual, e.residual)
        ok, where = check_class_C(e.contract, grid)
        class_c_ok = class_c_ok and ok
    certified = all(e.certified for e in sol.entries)
    report["criteria"].append({"name": "first_order_residual",
                               "worst": worst_residual, "tol": CERTIFY_TOL,
                               "pass": certified})
    report["criteria"].append({"name": "class_C", "pass": class_c_ok})
    if args.with_oracle:
        e = sol.entry_at(cfg.t)
        prob = discretize(cfg.dist, cfg.reins, cfg.mkt, cfg.t, n=args.with_oracle)
        _, h_oracle, _ = solve_qp(prob)
        gap = abs(e.h_star - h_oracle)
        report["criteria"].append({"name": "oracle_gap", "gap": gap, "tol": 1e-3,
                                   "pass": bool(gap <= 1e-3)})
    report["pass"] = all(c["pass"] for c in report["criteria"])
    report["verdict"] = "PASS" if report["pass"] else "FAIL"
    _write_json(out / "certification.json", report)
    print(f"certification: {report['verdict']}")
    return EXIT_OK if report["pass"] else EXIT_NUMERIC


def cmd_value(cfg: RunConfig, args, out: Path) -> int:
    sol = solve_path(cfg.dist, cfg.reins, cfg.mkt, tag=cfg.solver, n_nodes=cfg.grid)
    vf = solve_value_odes(sol)
    _write_csv(out / "values.csv", ["t", "M", "m"],
               [(t, M, m) for t, M, m in zip(vf.ts, vf.M, vf.m)])
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, args, out: Path) -> int:
    n = args.with_oracle or 2000
    prob = discretize(cfg.dist, cfg.reins, cfg.mkt, cfg.t, n=n)
    contract, h_val, info = solve_qp(prob)
    _write_csv(out / "oracle.csv", ["y", "I"],
               [(y, v) for y, v in zip(contract.ys, contract.values)])
    print(f"oracle H = {h_val!r} ({info['iterations']} iterations, "
          f"converged={info['converged']})")
    return EXIT_OK if info["converged"] else EXIT_NUMERIC


def cmd_simulate(cfg: RunConfig, args, out: Path) -> int:
    if args.strategy and Path(args.strategy).exists():
        sol = solution_from_json(json.loads(Path(args.strategy).read_text()), cfg)
    else:
        tag = args.strategy or cfg.solver
        sol = solve_path(cfg.dist, cfg.reins, cfg.mkt, tag=tag, n_nodes=cfg.grid)
    t0 = cfg.t if args.t0 is None else args.t0
    x0 = cfg.mkt.u if args.x0 is None else args.x0
    sim = SimConfig(t0=t0, x0=x0, n_paths=args.paths, seed=args.seed, solution=sol)
    samples = simulate_terminal(sim)
    res = estimate_objective(samples, cfg.mkt.gamma)
    _write_json(out / "simulation.json", {
        "mean": res.mean, "var": res.variance, "J": res.objective,
        "se": res.se_objective, "se_mean": res.se_mean, "paths": res.n_paths,
        "seed": args.seed, "t0": t0, "x0": x0})
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args, out: Path) -> int:
    ys = _plot_grid(cfg)
    sol_entry = solve_path(cfg.dist, cfg.reins, cfg.mkt, tag=cfg.solver,
                           ts=[cfg.t], certify=True).entries[0]
    d_homog, homog = solve_homogeneous(cfg.mkt, cfg.t)
    if cfg.reins.kind == "var":
        no_ic = None  # singular ratio: the relaxed benchmark is not defined
    else:
        _, no_ic = solve_unconstrained(cfg.dist, cfg.reins, cfg.mkt, cfg.t)
    rows = []
    i_full = np.asarray(sol_entry.contract(ys), dtype=float)
    i_homog = np.asarray(homog(ys), dtype=float)
    i_noic = np.asarray(no_ic(ys), dtype=float) if no_ic is not None else [None] * len(ys)
    for k, y in enumerate(ys):
        rows.append((y, i_full[k], i_homog[k],
                     i_noic[k] if no_ic is not None else None))
    _write_csv(out / "compare.csv", ["y", "I_full", "I_homog", "I_noIC"], rows)
    if sol_entry.residual is not None and not sol_entry.certified:
        print(f"warning: solve not certified (residual {sol_entry.residual!r})",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, out: Path) -> int:
    # per-node failures flag the row and the sweep keeps going
    from .solver import detect_solver, solve_at
    tag = cfg.solver if cfg.solver != "auto" else detect_solver(cfg.dist, cfg.reins,
                                                                cfg.mkt)
    ts = np.linspace(0.0, cfg.mkt.T, cfg.grid)
    entries: list[EquilibriumEntry | None] = []
    failures: list[str] = []
    warm = None
    for t in ts:
        try:
            e = solve_at(cfg.dist, cfg.reins, cfg.mkt, float(t), tag=tag, warm=warm,
                         certify=True, residual_grid=4000)
        except Exception as exc:
            entries.append(None)
            failures.append(f"t={t}: {exc}")
            warm = None
            continue
        entries.append(e)
        warm = ({"a": e.params["a"], "d": e.params["d"], "lam": e.params["lam"]}
                if e.solver == "exponential_iii" else None)
    keys: list[str] = []
    for e in entries:
        if e is None:
            continue
        for k in _entry_params_row(e):
            if k not in keys:
                keys.append(k)
    header = ["t", "solver", "H", "residual", "certified"] + keys
    rows = []
    for t, e in zip(ts, entries):
        if e is None:
            rows.append((t, "failed", None, None, False) + (None,) * len(keys))
            continue
        flat = _entry_params_row(e)
        rows.append((e.t, e.solver, e.h_star, e.residual, e.certified)
                    + tuple(flat.get(k) for k in keys))
    _write_csv(out / "sweep.csv", header, rows)
    for msg in failures:
        print(f"warning: node failed: {msg}", file=sys.stderr)
    bad = [e.t for e in entries if e is not None and not e.certified]
    if bad or failures:
        print(f"warning: {len(bad) + len(failures)} node(s) not certified",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "partition": cmd_partition,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "value": cmd_value,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON run config")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="simulation seed")
    common.add_argument("--grid", type=int, default=None,
                        help="override the time-grid node count")
    common.add_argument("--with-oracle", type=int, default=None, metavar="N",
                        help="cross-check against the brute-force oracle on N cells")

    parser = argparse.ArgumentParser(
        prog="mvreins",
        description="Time-consistent mean-variance reinsurance design")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "simulate":
            p.add_argument("--paths", type=int, default=100_000)
            p.add_argument("--t0", type=float, default=None)
            p.add_argument("--x0", type=float, default=None)
            p.add_argument("--strategy", default=None,
                           help="solution.json path or a solver tag")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.grid is not None:
        if args.grid < 2:
            print("config error: --grid must be at least 2", file=sys.stderr)
            return EXIT_CONFIG
        cfg = RunConfig(dist=cfg.dist, reins=cfg.reins, mkt=cfg.mkt, solver=cfg.solver,
                        t=cfg.t, grid=args.grid, y_points=cfg.y_points,
                        y_max_plot=cfg.y_max_plot, raw=cfg.raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridTooCoarseError, QuadratureError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
