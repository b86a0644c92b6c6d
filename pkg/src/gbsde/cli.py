"""Command line: ``gbsde {solve,price,validate,oracle} --config FILE --out DIR``.

Exit codes: 0 success, 2 convergence failure, 3 configuration error.
All artifacts are written atomically and formatted deterministically.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .config import ConfigError, load_price, load_solve, load_validate, read_config
from .errors import ConfigurationError, ConvergenceError, GBSDEError
from .gcore import VolatilityControl
from .lattice import check_problem, complementarity_residual, monte_carlo_lower_bound, rollback
from .market import bs_closed_form, crr_american_oracle, market_grids, price_american
from .pde import solve_obstacle_pde, solve_pde, solve_penalized_pde
from .rbsde import obstacle_deficit, run_ladder, uniform_bound_report
from .stopping import optional_stopping_check
from .validation import run_suites

EXIT_OK, EXIT_CONVERGENCE, EXIT_CONFIG = 0, 2, 3

SURFACE_COLUMNS = ("i", "t", "j", "x", "Y", "Z", "dA", "sigma_star")
LADDER_COLUMNS = ("level", "penalty", "diff", "deficit", "L_T", "Y_sup", "Z_norm", "monotone")
PRICE_COLUMNS = ("h_up", "method", "steps", "nodes", "dt", "dx", "s0", "strike", "oracle", "oracle_value", "rel_error")
BOUNDARY_COLUMNS = ("i", "t", "s_low", "s_high", "x_low", "x_high")
VALIDATE_COLUMNS = ("suite", "check", "measured", "tol", "status")
ORACLE_COLUMNS = ("kind", "sigma", "steps", "value")


def fmt(value) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    write_atomic(path, buf.getvalue())


def write_json(path: str, payload: dict) -> None:
    write_atomic(path, json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n")


def surface_rows(surface):
    t, x = surface.t, surface.x
    for i in range(len(t)):
        for j in range(len(x)):
            yield i, t[i], j, x[j], surface.Y[i, j], surface.Z[i, j], surface.dA[i, j], surface.sigma_star[i, j]


def ladder_rows(ladder):
    if ladder is None:
        return []
    return [(k, lv.penalty, lv.diff, lv.deficit, lv.L_T, lv.Y_sup, lv.Z_norm, lv.monotone) for k, lv in enumerate(ladder.levels)]


def _grid_meta(tg, sg):
    return {"steps": tg.steps, "nodes": sg.nodes, "dt": tg.dt, "dx": sg.dx, "x_min": sg.x_min, "x_max": sg.x_max, "T": tg.T, "t0": tg.t0}


def cmd_solve(cfg, out: str) -> int:
    problem, tg, sg = cfg.problem, cfg.time_grid, cfg.space_grid
    check_problem(problem, tg, sg)
    ladder = None
    report = {"command": "solve", "mode": cfg.mode, "seed": cfg.seed, "grid": _grid_meta(tg, sg)}
    mode = cfg.mode
    if mode in ("plain", "projected"):
        surface = rollback(problem, tg, sg, mode)
    elif mode == "penalized":
        surface = rollback(problem, tg, sg, "penalized", cfg.penalty)
    elif mode == "ladder":
        try:
            surface, ladder = run_ladder(problem, tg, sg, cfg.ladder)
        except ConvergenceError as exc:
            if exc.ladder is not None:
                write_csv(os.path.join(out, "ladder.csv"), LADDER_COLUMNS, ladder_rows(exc.ladder))
            raise
        report["ladder"] = {"converged": ladder.converged, "levels": len(ladder.levels), "final_penalty": ladder.penalties[-1]}
        if len(ladder.levels) >= 3:
            bound = uniform_bound_report(ladder)
            report["ladder"]["bound_growth"] = bound.growth
            report["ladder"]["bound_violation"] = bound.violation
    elif mode == "pde":
        surface = solve_pde(problem, tg, sg)
    elif mode == "pde-obstacle":
        surface = solve_obstacle_pde(problem, tg, sg)
    else:
        surface = solve_penalized_pde(problem, tg, sg, cfg.penalty)

    j0 = surface.node_of(cfg.x0)
    report.update(
        problem=problem.name,
        hash=surface.meta.get("hash"),
        x0=float(surface.x[j0]),
        Y0=float(surface.Y[0, j0]),
        Z0=float(surface.Z[0, j0]),
        reflection_mass=surface.reflection_mass(j0),
        status="ok",
    )
    if surface.obstacle is not None:
        report["complementarity_residual"] = complementarity_residual(surface)
        report["obstacle_deficit"] = obstacle_deficit(surface)
        report["reflection_off_contact"] = optional_stopping_check(surface).max_violation
    if cfg.mc_paths > 0 and not problem.has_obstacle:
        report["monte_carlo"] = {}
        for label, sigma in (("sigma_low", problem.band.sigma_low), ("sigma_high", problem.band.sigma_high)):
            est = monte_carlo_lower_bound(problem, VolatilityControl.constant(sigma, tg.steps), tg, float(surface.x[j0]), cfg.mc_paths, cfg.seed)
            report["monte_carlo"][label] = {"value": est.value, "stderr": est.stderr, "paths": est.n_paths}
    write_csv(os.path.join(out, "surface.csv"), SURFACE_COLUMNS, surface_rows(surface))
    write_csv(os.path.join(out, "ladder.csv"), LADDER_COLUMNS, ladder_rows(ladder))
    write_json(os.path.join(out, "report.json"), report)
    print(f"Y0={fmt(report['Y0'])} at x0={fmt(report['x0'])} mode={mode}")
    return EXIT_OK


def _price_oracle(cfg, steps: int):
    """Classical reference co-emitted with the price: CRR for a constant
    volatility, Black-Scholes at sigma_high for a call (no early exercise)."""
    model, claim = cfg.model, cfg.claim
    kind = cfg.oracle_kind
    if kind == "none":
        return None, None
    if kind in ("auto", "crr") and model.band.degenerate and claim.kind in ("put", "call"):
        return "crr", crr_american_oracle(model.band.sigma_high, model.r, model.s0, model.T, claim, steps)
    if kind in ("auto", "bs") and claim.kind == "call" and claim.obstacle is None:
        return "bs_sigma_high", bs_closed_form(model.band.sigma_high, model.r, model.s0, model.T, claim)
    if kind not in ("auto", "crr", "bs"):
        raise ConfigError(f"unknown oracle kind {kind!r}; expected auto, crr, bs or none")
    return None, None


def cmd_price(cfg, out: str) -> int:
    model, claim = cfg.model, cfg.claim
    tg, sg = market_grids(model, cfg.steps, cfg.intervals, cfg.width)
    result = price_american(model, claim, tg, sg, method=cfg.method)
    oracle, oracle_value = _price_oracle(cfg, tg.steps)
    rel = abs(result.h_up - oracle_value) / abs(oracle_value) if oracle_value else None
    write_csv(
        os.path.join(out, "price.csv"),
        PRICE_COLUMNS,
        [(result.h_up, result.method, tg.steps, sg.nodes, tg.dt, sg.dx, model.s0, claim.strike, oracle or "", oracle_value, rel)],
    )
    pol = result.policy
    rows = []
    for i in range(len(pol.t) - 1):
        lo, hi = pol.boundary[i]
        if not np.isnan(lo):
            rows.append((i, pol.t[i], math.exp(lo), math.exp(hi), lo, hi))
    write_csv(os.path.join(out, "boundary.csv"), BOUNDARY_COLUMNS, rows)
    write_csv(os.path.join(out, "surface.csv"), SURFACE_COLUMNS, surface_rows(result.surface))
    report = {
        "command": "price",
        "method": result.method,
        "h_up": result.h_up,
        "grid": _grid_meta(tg, sg),
        "market": {"r": model.r, "s0": model.s0, "T": model.T, "sigma_low": model.band.sigma_low, "sigma_high": model.band.sigma_high},
        "claim": {"kind": claim.kind, "strike": claim.strike},
        "oracle": {"kind": oracle, "value": oracle_value, "rel_error": rel},
        "exercise_steps": len(rows),
        "hash": result.surface.meta.get("hash"),
        "status": "ok",
    }
    write_json(os.path.join(out, "report.json"), report)
    print(f"h_up={fmt(result.h_up)} method={result.method}" + (f" {oracle}={fmt(oracle_value)}" if oracle else ""))
    return EXIT_OK


def cmd_oracle(cfg, out: str) -> int:
    model, claim = cfg.model, cfg.claim
    kind = "crr" if cfg.oracle_kind == "auto" else cfg.oracle_kind
    sigma = cfg.oracle_sigma if cfg.oracle_sigma is not None else model.band.sigma_high
    steps = cfg.oracle_steps or cfg.steps
    if kind == "crr":
        value = crr_american_oracle(sigma, model.r, model.s0, model.T, claim, steps)
    elif kind == "bs":
        value = bs_closed_form(sigma, model.r, model.s0, model.T, claim)
        steps = 0
    else:
        raise ConfigError(f"unknown oracle kind {kind!r}; expected crr or bs")
    write_csv(os.path.join(out, "oracle.csv"), ORACLE_COLUMNS, [(kind, sigma, steps, value)])
    print(f"{kind}={fmt(value)} sigma={fmt(sigma)}")
    return EXIT_OK


def cmd_validate(cfg, out: str) -> int:
    checks = run_suites(cfg.suites, seed=cfg.seed, samples=cfg.samples, pairs=cfg.pairs, expected_fail=cfg.expected_fail)
    rows = [(c.suite, c.name, c.measured, c.tol, c.status) for c in checks]
    for row in rows:
        print(f"{row[4]:5s} {row[0]}:{row[1]} measured={fmt(row[2])} tol={fmt(row[3])}")
    ok = all(c.ok for c in checks)
    write_csv(os.path.join(out, "validate.csv"), VALIDATE_COLUMNS, rows)
    summary = {}
    for c in checks:
        summary[c.status] = summary.get(c.status, 0) + 1
    write_json(os.path.join(out, "report.json"), {"command": "validate", "suites": list(cfg.suites), "seed": cfg.seed, "counts": summary, "passed": ok})
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbsde", description="Reflected G-BSDE solvers and uncertain-volatility American pricing.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve a (reflected) G-BSDE on a lattice or by finite differences"),
        ("price", "superhedging price of an American claim"),
        ("validate", "run invariant suites"),
        ("oracle", "classical reference price (CRR tree or Black-Scholes)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", default=".", metavar="DIR")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--grid-refine", type=int, default=0, metavar="K", help="halve dt and dx K times")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.grid_refine < 0:
            raise ConfigError("--grid-refine must be >= 0")
        cp = read_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(load_solve(cp, args.grid_refine, args.seed), args.out)
        if args.command == "price":
            return cmd_price(load_price(cp, args.grid_refine, args.seed), args.out)
        if args.command == "oracle":
            return cmd_oracle(load_price(cp, args.grid_refine, args.seed), args.out)
        return cmd_validate(load_validate(cp, args.seed), args.out)
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigurationError, GBSDEError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
