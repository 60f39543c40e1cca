"""Feedback controls derived from a solved value path.

Given C(t), the optimal primary-venue selling rate is xi = Lambda^-1 C x
and the optimal dark-pool order is eta = Itil Cbar C x with
Cbar = diag(1/c_ii) and Itil masking assets whose fill intensity is zero.
Both are linear in the position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRangeError
from .market import MarketParams
from .value import ValuePath, evaluate_C


@dataclass(frozen=True)
class StrategyAction:
    """The feedback pair (xi, eta) evaluated at (t, x)."""

    xi: np.ndarray
    eta: np.ndarray
    t: float
    x: np.ndarray

    def __post_init__(self):
        for name in ("xi", "eta", "x"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
            getattr(self, name).setflags(write=False)


def controls_from_matrix(C, lambda_inv, theta, x):
    """xi and eta from an explicit value matrix (no interpolation)."""
    x = np.asarray(x, dtype=float)
    xi = lambda_inv @ C @ x
    cx = C @ x
    eta = np.where(theta > 0.0, cx / np.diagonal(C), 0.0)
    return xi, eta


def action(path: ValuePath, params: MarketParams, t, x) -> StrategyAction:
    """Optimal feedback action at (t, x); OutOfGridRange beyond the grid."""
    C = evaluate_C(path, t)
    xi, eta = controls_from_matrix(C, path.derived.lambda_inv, params.theta, x)
    return StrategyAction(xi=xi, eta=eta, t=float(t), x=x)


def post_jump_position(x, act: StrategyAction, i: int) -> np.ndarray:
    """Position after asset i's dark-pool order executes: x - eta_i e_i."""
    x = np.asarray(x, dtype=float)
    if not 0 <= i < x.shape[0]:
        raise IndexOutOfRangeError(f"asset index {i} outside [0, {x.shape[0]})")
    out = x.copy()
    out[i] -= act.eta[i]
    return out


def axis_optimality_gap(path: ValuePath, params: MarketParams, t, x,
                        i: int, scan_points: int = 2001) -> float:
    """How far the dark-pool order misses the best post-fill value on axis i.

    Scans v(t, x - eta e_i) over a fine eta grid and returns the scan
    minimum minus the value at the strategy's own eta_i.  The objective
    is quadratic in eta, so the result is >= -1e-9 and bounded above by
    the scan resolution error.
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= i < x.shape[0]:
        raise IndexOutOfRangeError(f"asset index {i} outside [0, {x.shape[0]})")
    C = evaluate_C(path, t)
    # eta* for the scan comparison, independent of the theta mask: the
    # unconstrained axis minimizer is (C x)_i / c_ii.
    eta_star = float((C @ x)[i] / C[i, i])
    r = 5.0 * max(np.linalg.norm(x), 1e-12)
    etas = np.linspace(-r, r, scan_points)
    shifted = np.repeat(x[None, :], scan_points, axis=0)
    shifted[:, i] -= etas
    vals = np.einsum("ki,ij,kj->k", shifted, C, shifted)
    x_opt = x.copy()
    x_opt[i] -= eta_star
    v_opt = float(x_opt @ C @ x_opt)
    return float(np.min(vals) - v_opt)
