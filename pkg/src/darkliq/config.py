"""Flat key-value run configuration.

The format is deliberately minimal: one `section.key = value` pair per
line, `#` comments, matrices as row-major whitespace- or comma-separated
number lists.  Example::

    market.n = 2
    market.lambda = 3 0  0 0.2
    market.sigma = 1 0.9  0.9 1
    market.alpha = 4
    market.theta = 0.5 5
    market.horizon = 1
    position.x = 1 1
    solver.steps = 1024
    simulate.n_paths = 10000
    sweep.parameter = rho
    sweep.grid = -1 -0.5 0 0.5 1
    output.dir = out
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .market import MarketParams

SWEEPABLE_PREFIXES = ("rho", "theta_", "lambda_", "alpha")


@dataclass(frozen=True)
class SolverConfig:
    steps: int = 1024
    tol: float = 1e-6
    ladder_start: float | None = None
    ladder_factor: float = 4.0
    ladder_max: int = 20
    delta_cut: float | None = None
    penalty: float = math.inf     # inf selects the principal solution


@dataclass(frozen=True)
class SimulateConfig:
    n_paths: int = 1000
    base_seed: int = 0
    n_trajectories: int = 3
    ode_step_divisor: float = 4.0
    perturbation: str | None = None
    xi_scale: float = 1.0
    eta_scale: float = 1.0
    xi_time_shift: float = 0.0


@dataclass(frozen=True)
class SweepConfig:
    parameter: str = "rho"
    grid: np.ndarray = field(default_factory=lambda: np.array([]))


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams
    x0: np.ndarray
    solver: SolverConfig = SolverConfig()
    simulate: SimulateConfig = SimulateConfig()
    sweep: SweepConfig | None = None
    output_dir: str = "out"
    check_quick: bool = False


def parse_pairs(text: str) -> dict:
    """Parse `key = value` lines into a string dict; `#` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, "
                              f"got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _floats(value, key):
    try:
        return np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as err:
        raise ConfigError(f"{key}: expected numbers, got {value!r}") from err


def _scalar(pairs, key, default=None, cast=float):
    if key not in pairs:
        if default is None and cast is not bool:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = pairs[key]
    try:
        if cast is bool:
            if value.lower() in ("true", "yes", "1"):
                return True
            if value.lower() in ("false", "no", "0"):
                return False
            raise ValueError(value)
        if cast is float and value.lower() in ("inf", "infinite"):
            return math.inf
        return cast(value)
    except ValueError as err:
        raise ConfigError(f"{key}: cannot parse {value!r}") from err


def _matrix(pairs, key, n):
    vals = _floats(pairs[key], key) if key in pairs else None
    if vals is None:
        raise ConfigError(f"missing required key {key!r}")
    if vals.size != n * n:
        raise ConfigError(f"{key}: expected {n * n} entries (row-major "
                          f"{n}x{n}), got {vals.size}")
    return vals.reshape(n, n)


def _validate_sweep(parameter, grid, n):
    if not any(parameter == p or parameter.startswith(p)
               for p in SWEEPABLE_PREFIXES):
        raise ConfigError(f"sweep.parameter: unknown parameter {parameter!r}")
    if parameter.startswith(("theta_", "lambda_")):
        suffix = parameter.split("_", 1)[1]
        if suffix == "12":
            if n != 2:
                raise ConfigError("sweep.parameter: lambda_12 requires n=2")
        else:
            try:
                i = int(suffix)
            except ValueError as err:
                raise ConfigError(f"sweep.parameter: bad index in "
                                  f"{parameter!r}") from err
            if not 1 <= i <= n:
                raise ConfigError(f"sweep.parameter: index {i} outside "
                                  f"[1, {n}]")
    if parameter == "rho" and n != 2:
        raise ConfigError("sweep.parameter: rho requires n=2")
    if grid.size == 0:
        raise ConfigError("sweep grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("sweep grid must be strictly increasing")


def load_config(path) -> RunConfig:
    """Read and validate a run configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            pairs = parse_pairs(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return config_from_pairs(pairs)


def config_from_pairs(pairs: dict) -> RunConfig:
    n = _scalar(pairs, "market.n", cast=int)
    if n < 1:
        raise ConfigError("market.n must be >= 1")
    theta = _floats(pairs.get("market.theta", ""), "market.theta")
    if theta.size != n:
        raise ConfigError(f"market.theta: expected {n} entries, got "
                          f"{theta.size}")
    market = MarketParams(
        n=n,
        lambda_=_matrix(pairs, "market.lambda", n),
        sigma=_matrix(pairs, "market.sigma", n),
        alpha=_scalar(pairs, "market.alpha"),
        theta=theta,
        horizon_T=_scalar(pairs, "market.horizon"),
    )
    x0 = _floats(pairs.get("position.x", " ".join(["1"] * n)), "position.x")
    if x0.size != n:
        raise ConfigError(f"position.x: expected {n} entries, got {x0.size}")

    solver = SolverConfig(
        steps=_scalar(pairs, "solver.steps", 1024, int),
        tol=_scalar(pairs, "solver.tol", 1e-6),
        ladder_start=_scalar(pairs, "solver.ladder_start", 0.0)
        if "solver.ladder_start" in pairs else None,
        ladder_factor=_scalar(pairs, "solver.ladder_factor", 4.0),
        ladder_max=_scalar(pairs, "solver.ladder_max", 20, int),
        delta_cut=_scalar(pairs, "solver.delta_cut", -1.0)
        if "solver.delta_cut" in pairs else None,
        penalty=_scalar(pairs, "solver.penalty", math.inf),
    )
    if solver.steps < 16:
        raise ConfigError("solver.steps must be >= 16")
    if solver.delta_cut is not None and not 0 < solver.delta_cut < market.horizon_T:
        raise ConfigError("solver.delta_cut must lie in (0, horizon)")

    simulate = SimulateConfig(
        n_paths=_scalar(pairs, "simulate.n_paths", 1000, int),
        base_seed=_scalar(pairs, "simulate.base_seed", 0, int),
        n_trajectories=_scalar(pairs, "simulate.n_trajectories", 3, int),
        ode_step_divisor=_scalar(pairs, "simulate.ode_step_divisor", 4.0),
        perturbation=pairs.get("simulate.perturbation"),
        xi_scale=_scalar(pairs, "simulate.xi_scale", 1.0),
        eta_scale=_scalar(pairs, "simulate.eta_scale", 1.0),
        xi_time_shift=_scalar(pairs, "simulate.xi_time_shift", 0.0),
    )
    if simulate.n_paths < 2:
        raise ConfigError("simulate.n_paths must be >= 2")

    sweep = None
    if "sweep.parameter" in pairs or "sweep.grid" in pairs \
            or "sweep.start" in pairs:
        parameter = pairs.get("sweep.parameter", "rho")
        if "sweep.grid" in pairs:
            grid = _floats(pairs["sweep.grid"], "sweep.grid")
        else:
            start = _scalar(pairs, "sweep.start")
            stop = _scalar(pairs, "sweep.stop")
            points = _scalar(pairs, "sweep.points", 21, int)
            if points < 2:
                raise ConfigError("sweep.points must be >= 2")
            grid = np.linspace(start, stop, points)
        _validate_sweep(parameter, grid, n)
        sweep = SweepConfig(parameter=parameter, grid=grid)

    return RunConfig(
        market=market,
        x0=x0,
        solver=solver,
        simulate=simulate,
        sweep=sweep,
        output_dir=pairs.get("output.dir", "out"),
        check_quick=_scalar(pairs, "check.quick", False, bool),
    )
