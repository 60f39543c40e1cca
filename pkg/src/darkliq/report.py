"""File output: delimited data plus rendered figures.

Every workflow writes CSV first (17 significant digits, locale-free) and
then renders a PNG of the same data, so downstream consumers can either
re-plot from the delimited files or use the figures directly.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .simulate import McEstimate, Trajectory, trajectory_header, trajectory_rows
from .value import (  # noqa: E402
    ValuePath,
    bounds_finite,
    bounds_limit,
    value_path_header,
    value_path_rows,
)

FMT = ".17g"


def _fmt(v):
    return format(v, FMT)


def write_value_path(path: ValuePath, out_dir) -> str:
    fname = os.path.join(out_dir, "value_path.csv")
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(value_path_header(path.n) + "\n")
        for row in value_path_rows(path):
            fh.write(row + "\n")
    return fname


def _path_bounds(path: ValuePath):
    if path.is_principal:
        b = bounds_limit(path.params, path.derived, path.grid)
    else:
        b = bounds_finite(path.params, path.derived, path.penalty, path.grid)
    return np.atleast_1d(b.p), np.atleast_1d(b.q)


def write_bounds(path: ValuePath, out_dir) -> str:
    fname = os.path.join(out_dir, "bounds.csv")
    p, q = _path_bounds(path)
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,p,q\n")
        for t, pv, qv in zip(path.grid, p, q):
            fh.write(f"{_fmt(t)},{_fmt(pv)},{_fmt(qv)}\n")
    return fname


def render_value_figure(path: ValuePath, out_dir) -> str:
    """Value matrix entries over time with the scalar bound envelope."""
    fname = os.path.join(out_dir, "value_path.png")
    p, q = _path_bounds(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = path.grid
    n = path.n
    for i in range(n):
        for j in range(i, n):
            ax.plot(t, path.c_matrices[:, i, j],
                    label=f"c_{i + 1}{j + 1}", linewidth=1.4)
    lam_min = path.derived.lambda_min
    lam_max = path.derived.lambda_max
    ax.plot(t, p * lam_min, "k--", linewidth=0.9, label="lower envelope")
    ax.plot(t, q * lam_max, "k:", linewidth=0.9, label="upper envelope")
    ax.set_xlabel("t")
    ax.set_ylabel("value matrix entries")
    ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(fname, dpi=130)
    plt.close(fig)
    return fname


def write_trajectory(traj: Trajectory, n: int, index: int, out_dir) -> str:
    fname = os.path.join(out_dir, f"trajectory_{index}.csv")
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trajectory_header(n) + "\n")
        for row in trajectory_rows(traj, n):
            fh.write(row + "\n")
    return fname


def render_trajectory_figure(trajs: list, n: int, out_dir) -> str:
    """Position paths with dark-pool fills marked."""
    fname = os.path.join(out_dir, "trajectories.png")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for k, traj in enumerate(trajs):
        t = traj.samples[:, 0]
        for i in range(n):
            ax.plot(t, traj.samples[:, 1 + i], color=colors[i % len(colors)],
                    alpha=0.55 if len(trajs) > 1 else 1.0, linewidth=1.2,
                    label=f"x_{i + 1}" if k == 0 else None)
        for t_j, i_j, *_ in traj.jumps:
            ax.axvline(t_j, color=colors[i_j % len(colors)], linewidth=0.6,
                       linestyle=":", alpha=0.5)
    ax.axhline(0.0, color="gray", linewidth=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("position")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(fname, dpi=130)
    plt.close(fig)
    return fname


def write_mc_summary(est: McEstimate, out_dir) -> str:
    fname = os.path.join(out_dir, "mc_summary.json")
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(est.as_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return fname


def sweep_header(n: int, parameter: str = "param") -> str:
    cols = [parameter, "v"] + [f"xi_{i + 1}" for i in range(n)] \
        + [f"eta_{i + 1}" for i in range(n)]
    return ",".join(cols)


def write_sweep(parameter: str, rows, n: int, out_dir) -> str:
    """rows: iterable of (param_value, v, xi vector, eta vector)."""
    fname = os.path.join(out_dir, f"sweep_{parameter}.csv")
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sweep_header(n, parameter) + "\n")
        for pv, v, xi, eta in rows:
            cells = [_fmt(pv), _fmt(v)] + [_fmt(u) for u in xi] \
                + [_fmt(u) for u in eta]
            fh.write(",".join(cells) + "\n")
    return fname


def render_sweep_figure(parameter: str, rows, n: int, out_dir) -> str:
    fname = os.path.join(out_dir, f"sweep_{parameter}.png")
    rows = list(rows)
    pv = [r[0] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))
    axes[0].plot(pv, [r[1] for r in rows], linewidth=1.4)
    axes[0].set_ylabel("v(0, x)")
    for i in range(n):
        axes[1].plot(pv, [r[2][i] for r in rows], label=f"xi_{i + 1}",
                     linewidth=1.4)
        axes[2].plot(pv, [r[3][i] for r in rows], label=f"eta_{i + 1}",
                     linewidth=1.4)
    axes[1].set_ylabel("selling rate")
    axes[2].set_ylabel("dark-pool order")
    for ax in axes:
        ax.set_xlabel(parameter)
    axes[1].legend(fontsize=8)
    axes[2].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(fname, dpi=130)
    plt.close(fig)
    return fname


def format_report_table(reports) -> str:
    """Plain-text pass/fail table for a list of CheckReports."""
    width = max(len(r.name) for r in reports)
    lines = [f"{'check':<{width}}  status  samples  tolerance  margin"]
    for r in reports:
        margin = "-" if r.margin is None else f"{r.margin:.3g}"
        status = "PASS" if r.status else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.samples:>7}  "
                     f"{r.tolerance:<9.3g}  {margin}")
        if not r.status:
            lines.append(f"    witness: {r.witness}")
    return "\n".join(lines)


def write_check_report(reports, out_dir) -> tuple:
    txt = os.path.join(out_dir, "check_report.txt")
    with open(txt, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report_table(reports) + "\n")
    js = os.path.join(out_dir, "check_report.json")
    with open(js, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.as_record() for r in reports], fh, indent=2)
        fh.write("\n")
    return txt, js
