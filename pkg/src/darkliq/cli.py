"""Command-line front end: solve, simulate, sweep, and check workflows.

Usage::

    darkliq solve    --config fig2.cfg [--out DIR]
    darkliq simulate --config fig2.cfg [--seed S] [--threads N]
    darkliq sweep    --config fig3.cfg
    darkliq check    --config fig2.cfg [--seed S]

Exit codes: 0 success, 1 check failure, 2 configuration error,
3 numeric failure.  The output directory comes from --out, else the
DARKLIQ_OUT environment variable, else the config's output.dir.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import checks
from .config import RunConfig, load_config
from .errors import ConfigError, DarkliqError, ValidationError
from .market import derive, validate
from .report import (
    render_sweep_figure,
    render_trajectory_figure,
    render_value_figure,
    write_bounds,
    write_check_report,
    write_mc_summary,
    write_sweep,
    write_trajectory,
    write_value_path,
)
from .simulate import Perturbation, draw_jumps, monte_carlo_value, simulate
from .strategy import action
from .value import (
    GridSpec,
    LadderSpec,
    evaluate_C,
    principal_solution,
    solve_finite_penalty,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="darkliq",
        description="Optimal liquidation with an exchange and a dark pool.")
    parser.add_argument("command",
                        choices=["solve", "simulate", "sweep", "check"])
    parser.add_argument("--config", required=True,
                        help="path to a key-value config file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides config and env)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker thread cap for Monte Carlo")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the base random seed")
    return parser


def _resolve_out_dir(args, cfg: RunConfig) -> str:
    out = args.out or os.environ.get("DARKLIQ_OUT") or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _solve_path(cfg: RunConfig, params=None):
    params = cfg.market if params is None else params
    validate(params).raise_if_invalid()
    d = derive(params)
    grid = GridSpec(steps=cfg.solver.steps)
    if math.isinf(cfg.solver.penalty):
        ladder = LadderSpec(start=cfg.solver.ladder_start,
                            factor=cfg.solver.ladder_factor,
                            tol=cfg.solver.tol,
                            max_rungs=cfg.solver.ladder_max)
        return principal_solution(params, d, grid, ladder,
                                  delta_cut=cfg.solver.delta_cut)
    return solve_finite_penalty(params, d, cfg.solver.penalty, grid)


def cmd_solve(cfg: RunConfig, out_dir, args) -> int:
    path = _solve_path(cfg)
    write_value_path(path, out_dir)
    write_bounds(path, out_dir)
    render_value_figure(path, out_dir)
    C0 = evaluate_C(path, path.grid[0])
    v0 = float(cfg.x0 @ C0 @ cfg.x0)
    print(f"v(0,x) = {v0:.12g}")
    return EXIT_OK


def _perturbation(cfg: RunConfig) -> Perturbation | None:
    sim = cfg.simulate
    if sim.perturbation is None:
        return None
    return Perturbation(tag=sim.perturbation, xi_scale=sim.xi_scale,
                        eta_scale=sim.eta_scale,
                        xi_time_shift=sim.xi_time_shift)


def cmd_simulate(cfg: RunConfig, out_dir, args) -> int:
    path = _solve_path(cfg)
    params = cfg.market
    seed = args.seed if args.seed is not None else cfg.simulate.base_seed
    trajs = []
    for k in range(cfg.simulate.n_trajectories):
        schedule = draw_jumps(params.theta, 0.0, params.horizon_T, [seed, k])
        traj = simulate(path, params, cfg.x0, 0.0, schedule)
        write_trajectory(traj, params.n, k, out_dir)
        trajs.append(traj)
    render_trajectory_figure(trajs, params.n, out_dir)
    est = monte_carlo_value(path, params, cfg.x0, 0.0,
                            n_paths=cfg.simulate.n_paths, base_seed=seed,
                            perturbation=_perturbation(cfg),
                            threads=args.threads)
    write_mc_summary(est, out_dir)
    print(f"mc mean = {est.mean:.12g} +- {est.std_error:.3g} "
          f"(analytic {est.analytic_value:.12g}, remainder "
          f"{est.remainder:.3g}, {est.n_paths} paths)")
    return EXIT_OK


def _swept_params(cfg: RunConfig, value):
    """Market parameters with the sweep parameter replaced by `value`."""
    m = cfg.market
    lam = np.array(m.lambda_)
    sig = np.array(m.sigma)
    theta = np.array(m.theta)
    alpha = m.alpha
    p = cfg.sweep.parameter
    if p == "alpha":
        alpha = value
    elif p == "rho":
        s1 = math.sqrt(sig[0, 0])
        s2 = math.sqrt(sig[1, 1])
        sig[0, 1] = sig[1, 0] = value * s1 * s2
    elif p == "lambda_12":
        lam[0, 1] = lam[1, 0] = value
    elif p.startswith("theta_"):
        theta[int(p.split("_")[1]) - 1] = value
    elif p.startswith("lambda_"):
        i = int(p.split("_")[1]) - 1
        lam[i, i] = value
    else:
        raise ConfigError(f"unknown sweep parameter {p!r}")
    return type(m)(n=m.n, lambda_=lam, sigma=sig, alpha=alpha, theta=theta,
                   horizon_T=m.horizon_T)


def cmd_sweep(cfg: RunConfig, out_dir, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep command requires a sweep.* config block")
    rows = []
    for value in cfg.sweep.grid:
        params = _swept_params(cfg, float(value))
        path = _solve_path(cfg, params)
        t0 = path.grid[0]
        C0 = evaluate_C(path, t0)
        v0 = float(cfg.x0 @ C0 @ cfg.x0)
        act = action(path, params, t0, cfg.x0)
        rows.append((float(value), v0, act.xi, act.eta))
    write_sweep(cfg.sweep.parameter, rows, cfg.market.n, out_dir)
    render_sweep_figure(cfg.sweep.parameter, rows, cfg.market.n, out_dir)
    print(f"sweep over {cfg.sweep.parameter}: {len(rows)} points")
    return EXIT_OK


def cmd_check(cfg: RunConfig, out_dir, args) -> int:
    seed = args.seed if args.seed is not None else cfg.simulate.base_seed
    # the shipped market must itself validate before the battery runs
    validate(cfg.market).raise_if_invalid()
    reports = checks.run_battery(seed=seed, quick=cfg.check_quick)
    txt, _ = write_check_report(reports, out_dir)
    with open(txt, encoding="utf-8") as fh:
        print(fh.read(), end="")
    return EXIT_OK if all(r.status for r in reports) else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = _resolve_out_dir(args, cfg)
        handler = {"solve": cmd_solve, "simulate": cmd_simulate,
                   "sweep": cmd_sweep, "check": cmd_check}[args.command]
        return handler(cfg, out_dir, args)
    except (ConfigError, ValidationError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DarkliqError as err:
        print(f"numeric failure: {type(err).__name__}: {err}",
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
