"""Backward solver for the value function matrix and its closed-form bounds.

The value of liquidating x over [t, T] with terminal penalty l is
x^T C(l,t) x, where C solves

    C' = C Lambda^-1 C + C Ctil C - alpha Sigma,   C(T) = l I,

with Ctil = diag(theta_i / c_ii).  The liquidation-constrained value uses
the principal solution C(t) = lim_{l -> inf} C(l,t), computed here by
climbing a geometric penalty ladder until the restriction to
[0, T - delta_cut] is Cauchy.  Scalar coth/rational bounds p, q sandwich
sqrt(Lambda^-1) C sqrt(Lambda^-1) and certify every solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    AtSingularityError,
    LadderExhaustedError,
    NumericFailureError,
    OutOfGridRangeError,
    PenaltyTooSmallError,
    PositivityLostError,
    StepFloorReachedError,
)
from .market import DerivedQuantities, MarketParams

INFINITE = math.inf

# Sandwich certification tolerance, relative to q.
SANDWICH_RTOL = 1e-6
# Step floor for positivity-driven halving, relative to T.
STEP_FLOOR_RTOL = 1e-14


def arcoth(x):
    """Inverse hyperbolic cotangent, defined for |x| > 1."""
    return 0.5 * np.log((x + 1.0) / (x - 1.0))


@dataclass(frozen=True)
class GridSpec:
    """Time grid with ~`steps` intervals on the solve window.

    The grid is graded near the terminal end, where the solution grows
    like 1/(T - t + lambda_min/l): node spacing is capped at 1/32 of
    that local scale so entry-wise interpolation stays accurate.
    """

    steps: int = 4096


def _graded_nodes(t_start, t_end, steps, scale_fn):
    """Increasing nodes with spacing <= min(span/steps, scale(t)/64).

    The /64 grading keeps the entry-wise cubic interpolation error of
    the ~1/(T-t) terminal growth below 1e-6 relative between knots.
    """
    h_uniform = (t_end - t_start) / steps
    out = [t_start]
    t = t_start
    while t < t_end - 1e-14 * (abs(t_end) + t_end - t_start):
        h = min(h_uniform, scale_fn(t) / 64.0, t_end - t)
        t += h
        out.append(t)
    out[-1] = t_end
    return np.asarray(out)


@dataclass(frozen=True)
class LadderSpec:
    """Geometric penalty ladder for the principal solution."""

    start: float | None = None  # default max(2 * l0, 1)
    factor: float = 4.0
    tol: float = 1e-6
    max_rungs: int = 20


@dataclass(frozen=True)
class BoundPair:
    p: float
    q: float


@dataclass
class ValuePath:
    """C(.) sampled on a time grid, with entry-wise monotone interpolation.

    penalty is the finite l or INFINITE for the principal solution; for
    the principal case the grid stops at T - delta_cut.
    """

    grid: np.ndarray
    c_matrices: np.ndarray  # shape (len(grid), n, n)
    penalty: float
    delta_cut: float
    params: MarketParams
    derived: DerivedQuantities
    _interp: list | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.params.n

    @property
    def is_principal(self):
        return math.isinf(self.penalty)

    @property
    def grid_end(self):
        return float(self.grid[-1])

    def _interpolators(self):
        if self._interp is None:
            n = self.n
            self._interp = [
                [PchipInterpolator(self.grid, self.c_matrices[:, i, j])
                 for j in range(n)] for i in range(n)
            ]
        return self._interp


def bounds_finite(params: MarketParams, derived: DerivedQuantities,
                  l: float, t) -> BoundPair:
    """Closed-form sandwich bounds p(l,t), q(l,t) for the finite-penalty solve."""
    if l <= derived.l0:
        raise PenaltyTooSmallError(
            f"penalty l={l:g} must exceed l0={derived.l0:g}")
    T = params.horizon_T
    t = np.asarray(t, dtype=float)
    if np.any(t > T * (1 + 1e-12)):
        raise AtSingularityError("bounds requested beyond the horizon")
    tau = T - t
    theta = derived.theta_sum
    g1_sq = theta ** 2 / 4.0 + params.alpha * derived.d_min
    if g1_sq > 0.0:
        g1 = math.sqrt(g1_sq)
        kappa1 = arcoth((l / derived.lambda_max + theta / 2.0) / g1)
        p = g1 / np.tanh(g1 * tau + kappa1) - theta / 2.0
    else:
        p = 1.0 / (tau + derived.lambda_max / l)
    g2_sq = params.alpha * derived.d_max
    if g2_sq > 0.0:
        g2 = math.sqrt(g2_sq)
        kappa2 = arcoth((l / derived.lambda_min) / g2)
        q = g2 / np.tanh(g2 * tau + kappa2)
    else:
        q = 1.0 / (tau + derived.lambda_min / l)
    if np.ndim(t) == 0:
        return BoundPair(p=float(p), q=float(q))
    return BoundPair(p=np.asarray(p), q=np.asarray(q))


def bounds_limit(params: MarketParams, derived: DerivedQuantities, t) -> BoundPair:
    """Large-penalty limits p(t), q(t); both reduce to 1/(T-t) when degenerate."""
    T = params.horizon_T
    t = np.asarray(t, dtype=float)
    if np.any(t >= T):
        raise AtSingularityError("limit bounds are singular at t >= T")
    tau = T - t
    theta = derived.theta_sum
    g1_sq = theta ** 2 / 4.0 + params.alpha * derived.d_min
    if g1_sq > 0.0:
        g1 = math.sqrt(g1_sq)
        p = g1 / np.tanh(g1 * tau) - theta / 2.0
    else:
        p = 1.0 / tau
    g2_sq = params.alpha * derived.d_max
    if g2_sq > 0.0:
        g2 = math.sqrt(g2_sq)
        q = g2 / np.tanh(g2 * tau)
    else:
        q = 1.0 / tau
    if np.ndim(t) == 0:
        return BoundPair(p=float(p), q=float(q))
    return BoundPair(p=np.asarray(p), q=np.asarray(q))


def single_asset_closed_form(Lambda, Sigma, alpha, theta, T, t, penalty):
    """Scalar value coefficient C(l,t) or C(t) for a single asset.

    Four branches: finite vs infinite penalty, crossed with whether
    theta or alpha*Sigma is positive (coth form) or both vanish
    (rational form).
    """
    if Lambda <= 0.0:
        raise ValueError("Lambda must be positive")
    tau = T - t
    a_sig = alpha * Sigma
    if math.isinf(penalty):
        if tau <= 0.0:
            raise AtSingularityError("principal solution is singular at t >= T")
        if theta > 0.0 or a_sig > 0.0:
            theta_til = math.sqrt(theta ** 2 + 4.0 * a_sig / Lambda)
            return (Lambda * theta_til / 2.0 / math.tanh(theta_til / 2.0 * tau)
                    - Lambda * theta / 2.0)
        return Lambda / tau
    l = penalty
    if theta > 0.0 or a_sig > 0.0:
        theta_til = math.sqrt(theta ** 2 + 4.0 * a_sig / Lambda)
        kappa = arcoth((2.0 * l / Lambda + theta) / theta_til)
        return (Lambda * theta_til / 2.0
                / math.tanh(theta_til / 2.0 * tau + kappa)
                - Lambda * theta / 2.0)
    return Lambda / (tau + Lambda / l)


def single_asset_trajectory(Lambda, Sigma, alpha, theta, T, t, x0=1.0):
    """Position at time t under the optimal principal strategy, no dark fill.

    sinh(theta_til/2 (T-t)) exp(theta t / 2) / sinh(theta_til/2 T) * x0,
    degenerating to x0 (T-t)/T when theta = alpha*Sigma = 0.
    """
    a_sig = alpha * Sigma
    if theta > 0.0 or a_sig > 0.0:
        theta_til = math.sqrt(theta ** 2 + 4.0 * a_sig / Lambda)
        h = theta_til / 2.0
        return (np.sinh(h * (T - np.asarray(t))) * np.exp(theta * np.asarray(t) / 2.0)
                / math.sinh(h * T)) * x0
    return x0 * (T - np.asarray(t)) / T


def _rhs_tau(C, lambda_inv, theta, alpha_sigma):
    """dC/dtau for tau = T - t: the negated backward right side."""
    diag = np.diagonal(C)
    ctil_c = (theta / diag)[:, None] * C
    return alpha_sigma - C @ lambda_inv @ C - C @ ctil_c


def _is_pd(C):
    try:
        np.linalg.cholesky(C)
        return True
    except np.linalg.LinAlgError:
        return False


def _integrate_interval(C, tau, tau_end, h_grid, l, params, derived,
                        drift_tracker):
    """Advance C from tau to tau_end with RK4, resolving the terminal layer.

    The step is min(h_grid, max(lambda_min/(10 l), tau/24)) so that the
    O(1/(tau + lambda/l)) transient after the stiff terminal value is
    resolved for large l; the floor uses lambda_min because the fastest
    mode of the quadratic term near C = l I decays on the lambda_min/l
    scale.  A step that loses positivity is retried halved; the cap then
    relaxes back on success so one bad step cannot slow the whole
    interval.
    """
    lambda_inv = derived.lambda_inv
    theta = params.theta
    alpha_sigma = params.alpha * params.sigma
    floor = STEP_FLOOR_RTOL * params.horizon_T
    h_cap = h_grid
    while tau < tau_end - 1e-15 * params.horizon_T:
        # The solution scale near the terminal time is ~ 1/(tau + lambda/l);
        # capping h at tau/24 (floored so the very first steps stay finite)
        # keeps h * C uniformly small through the terminal layer.
        h = min(h_cap, max(derived.lambda_min / (10.0 * l), tau / 24.0))
        h = min(h, tau_end - tau)
        while True:
            k1 = _rhs_tau(C, lambda_inv, theta, alpha_sigma)
            k2 = _rhs_tau(C + 0.5 * h * k1, lambda_inv, theta, alpha_sigma)
            k3 = _rhs_tau(C + 0.5 * h * k2, lambda_inv, theta, alpha_sigma)
            k4 = _rhs_tau(C + h * k3, lambda_inv, theta, alpha_sigma)
            C_new = C + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            drift = np.max(np.abs(C_new - C_new.T))
            C_new = 0.5 * (C_new + C_new.T)
            if np.all(np.isfinite(C_new)) and _is_pd(C_new):
                break
            # PositivityLost: retry with halved step before failing.
            h *= 0.5
            h_cap = min(h_cap, h)
            if h < floor:
                raise StepFloorReachedError(
                    f"step halving hit the floor at tau={tau:g} (l={l:g})")
        scale = max(np.max(np.abs(C_new)), 1.0)
        drift_tracker[0] = max(drift_tracker[0], drift / scale)
        C = C_new
        tau += h
        h_cap = min(h_grid, 2.0 * h_cap)
    return C


def _solve_on_grid(params, derived, l, t_nodes, check_sandwich=True):
    """Integrate the matrix IVP backward from C(T) = l I onto t_nodes.

    t_nodes must be increasing and end at T.  Returns the matrices in
    grid order (ascending t) plus the max pre-symmetrization drift.
    """
    if l <= derived.l0:
        raise PenaltyTooSmallError(
            f"penalty l={l:g} must exceed l0={derived.l0:g}")
    T = params.horizon_T
    n = params.n
    tau_nodes = T - t_nodes[::-1]  # ascending tau, starts at 0
    C = l * np.eye(n)
    out = np.empty((len(t_nodes), n, n))
    out[-1] = C
    drift_tracker = [0.0]
    tau = 0.0
    for k in range(1, len(tau_nodes)):
        h_grid = (tau_nodes[k] - tau_nodes[k - 1])
        C = _integrate_interval(C, tau_nodes[k - 1], tau_nodes[k], h_grid,
                                l, params, derived, drift_tracker)
        tau = tau_nodes[k]
        out[len(t_nodes) - 1 - k] = C
    if check_sandwich:
        _certify_sandwich(params, derived, l, t_nodes, out)
    return out, drift_tracker[0]


def _certify_sandwich(params, derived, l, t_nodes, c_matrices):
    """Assert p(l,t) I <= sqrt(Li) C sqrt(Li) <= q(l,t) I at every node."""
    sli = derived.sqrt_lambda_inv
    if math.isinf(l):
        pb = bounds_limit(params, derived, t_nodes)
    else:
        pb = bounds_finite(params, derived, l, t_nodes)
    p = np.atleast_1d(pb.p)
    q = np.atleast_1d(pb.q)
    for k in range(len(t_nodes)):
        m = sli @ c_matrices[k] @ sli
        eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
        eps = SANDWICH_RTOL * q[k]
        if eigs[0] < p[k] - eps or eigs[-1] > q[k] + eps:
            raise NumericFailureError(
                f"sandwich bound violated at t={t_nodes[k]:g}: eigenvalues "
                f"[{eigs[0]:g}, {eigs[-1]:g}] outside [p,q]=[{p[k]:g}, {q[k]:g}]")


def solve_finite_penalty(params: MarketParams, derived: DerivedQuantities,
                         l: float, grid_spec: GridSpec = GridSpec()) -> ValuePath:
    """Solve the finite-penalty matrix IVP on a graded grid over [0, T]."""
    T = params.horizon_T
    off = derived.lambda_min / l
    t_nodes = _graded_nodes(0.0, T, grid_spec.steps, lambda t: T - t + off)
    c_matrices, _ = _solve_on_grid(params, derived, l, t_nodes)
    return ValuePath(grid=t_nodes, c_matrices=c_matrices, penalty=float(l),
                     delta_cut=0.0, params=params, derived=derived)


def principal_solution(params: MarketParams, derived: DerivedQuantities,
                       grid_spec: GridSpec = GridSpec(),
                       ladder_spec: LadderSpec = LadderSpec(),
                       delta_cut: float | None = None,
                       monotonicity_probes: int = 16) -> ValuePath:
    """Climb the penalty ladder until C(l, .) is Cauchy on [0, T - delta_cut].

    Monotonicity of the quadratic forms x^T C(l,t) x along the ladder is
    asserted on a fixed random probe set while climbing.
    """
    T = params.horizon_T
    if delta_cut is None:
        delta_cut = 1e-3 * T
    if not 0.0 < delta_cut < T:
        raise ValueError("delta_cut must lie in (0, T)")
    t_main = _graded_nodes(0.0, T - delta_cut, grid_spec.steps,
                           lambda t: T - t)
    # Tail nodes bridge (T - delta_cut, T]; the solver integrates through
    # them first (in tau) but they are not part of the returned grid.
    n_tail = 16
    t_nodes = np.concatenate([t_main, T - delta_cut + np.arange(1, n_tail + 1)
                              * (delta_cut / n_tail)])
    n_main = len(t_main)

    start = ladder_spec.start
    if start is None:
        start = max(2.0 * derived.l0, 1.0)
    if start <= derived.l0:
        start = 2.0 * derived.l0 + 1.0

    probe_rng = np.random.default_rng(0)
    probes = probe_rng.standard_normal((monotonicity_probes, params.n))

    prev = None
    l = start
    for _ in range(ladder_spec.max_rungs):
        cur, _ = _solve_on_grid(params, derived, l, t_nodes)
        cur_main = cur[:n_main]
        if prev is not None:
            _assert_ladder_monotone(prev, cur_main, probes)
            diff = np.max(np.abs(cur_main - prev) / (1.0 + np.abs(prev)))
            if diff < ladder_spec.tol:
                path = ValuePath(grid=t_main, c_matrices=cur_main,
                                 penalty=INFINITE, delta_cut=float(delta_cut),
                                 params=params, derived=derived)
                _certify_sandwich(params, derived, INFINITE, t_main, cur_main)
                return path
        prev = cur_main
        l *= ladder_spec.factor
    raise LadderExhaustedError(
        f"penalty ladder did not converge within {ladder_spec.max_rungs} rungs "
        f"(tol {ladder_spec.tol:g})")


def _assert_ladder_monotone(prev, cur, probes):
    # Quadratic forms must be nondecreasing in l (tolerance 1e-9 relative).
    qf_prev = np.einsum("pi,kij,pj->kp", probes, prev, probes)
    qf_cur = np.einsum("pi,kij,pj->kp", probes, cur, probes)
    slack = 1e-9 * (1.0 + np.abs(qf_prev))
    if np.any(qf_cur < qf_prev - slack):
        k, p = np.unravel_index(np.argmin(qf_cur - qf_prev), qf_cur.shape)
        raise NumericFailureError(
            f"ladder monotonicity violated at grid index {k}, probe {p}: "
            f"{qf_cur[k, p]:.12g} < {qf_prev[k, p]:.12g}")


def evaluate_C(path: ValuePath, t) -> np.ndarray:
    """Interpolate C at time t (monotone cubic per entry, re-symmetrized)."""
    t_arr = np.asarray(t, dtype=float)
    lo, hi = path.grid[0], path.grid[-1]
    tol = 1e-12 * max(abs(hi), 1.0)
    if np.any(t_arr < lo - tol) or np.any(t_arr > hi + tol):
        raise OutOfGridRangeError(
            f"time {t} outside grid range [{lo:g}, {hi:g}]")
    t_arr = np.clip(t_arr, lo, hi)
    interp = path._interpolators()
    n = path.n
    scalar = np.ndim(t) == 0
    shape = (n, n) if scalar else (np.size(t_arr), n, n)
    out = np.empty(shape)
    for i in range(n):
        for j in range(i, n):
            v = interp[i][j](t_arr)
            if scalar:
                out[i, j] = out[j, i] = v
            else:
                out[..., i, j] = out[..., j, i] = v
    if scalar:
        eigs = np.linalg.eigvalsh(out)
        if eigs[0] <= 0.0:
            raise PositivityLostError(
                f"interpolated C at t={float(t_arr):g} is not positive definite")
    return out


def value_at(path: ValuePath, t, x) -> float:
    """Quadratic-form value x^T C(t) x."""
    x = np.asarray(x, dtype=float)
    C = evaluate_C(path, t)
    return float(x @ C @ x)


def value_path_header(n):
    return "t," + ",".join(f"c_{i+1}_{j+1}" for i in range(n) for j in range(n))


def value_path_rows(path: ValuePath):
    """CSV rows (17 significant digits) matching value_path_header."""
    for k, t in enumerate(path.grid):
        flat = path.c_matrices[k].reshape(-1)
        yield ",".join([format(t, ".17g")] + [format(v, ".17g") for v in flat])
