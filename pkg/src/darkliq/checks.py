"""Numerical oracles for the model's inequalities and comparative statics.

Each check integrates or evaluates the relevant closed forms on a finite
grid and returns a CheckReport with pass/fail, sample count, tolerance,
and (on failure) a witness.  Strict monotonicity claims are tested as
"gap exceeds tolerance between grid neighbors" with a 1e-7 relative
tolerance, chosen so the analytic derivatives on the default grids
comfortably exceed it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checkreport import CheckReport
from .errors import HypothesisViolatedError, InputNotSPDError
from .market import MarketParams, derive, two_asset_params
from .simulate import build_propagator, draw_jumps
from .value import (
    GridSpec,
    bounds_finite,
    evaluate_C,
    principal_solution,
    single_asset_closed_form,
    single_asset_trajectory,
    solve_finite_penalty,
)

MONOTONE_RTOL = 1e-7
PSD_GAP_RTOL = 1e-10


def random_spd(rng, n):
    """Well-conditioned random SPD matrix: B^T B + eps I."""
    b = rng.standard_normal((n, n))
    a = b.T @ b
    return a + 1e-3 * np.linalg.norm(a, 2) * np.eye(n)


def _assert_spd(C):
    C = np.asarray(C, dtype=float)
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-10 * max(np.max(np.abs(C)), 1.0)):
        raise InputNotSPDError("matrix is not symmetric")
    if np.linalg.eigvalsh(0.5 * (C + C.T))[0] <= 0.0:
        raise InputNotSPDError("matrix is not positive definite")
    return 0.5 * (C + C.T)


def _psd_gap(M):
    """Smallest eigenvalue of the symmetrized gap matrix."""
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def check_matrix_inequality(C, theta) -> CheckReport:
    """C <= theta_sum * diag(c_ii / theta_i) for SPD C and theta > 0."""
    C = _assert_spd(C)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0):
        raise ValueError("theta entries must be positive for this bound")
    scale = float(np.linalg.norm(C, 2))
    bound = np.sum(theta) * np.diag(np.diagonal(C) / theta)
    gap = _psd_gap(bound - C)
    ok = gap >= -PSD_GAP_RTOL * scale
    return CheckReport(
        name="matrix_inequality", status=ok, samples=1,
        tolerance=PSD_GAP_RTOL, margin=gap,
        witness=None if ok else f"gap eigenvalue {gap:g} for C={C.tolist()}, "
                                f"theta={theta.tolist()}")


def check_corollary_bounds(C, theta) -> CheckReport:
    """C Ctil C <= theta_sum C;  C <= n diag(c_ii);  C <= trace(C) I."""
    C = _assert_spd(C)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0):
        raise ValueError("theta entries must be nonnegative")
    n = C.shape[0]
    scale = float(np.linalg.norm(C, 2))
    ctil_c = (theta / np.diagonal(C))[:, None] * C
    gaps = {
        "C Ctil C <= theta C": _psd_gap(np.sum(theta) * C - C @ ctil_c),
        "C <= n diag(c_ii)": _psd_gap(n * np.diag(np.diagonal(C)) - C),
        "C <= trace(C) I": _psd_gap(np.trace(C) * np.eye(n) - C),
    }
    worst_name = min(gaps, key=gaps.get)
    worst = gaps[worst_name]
    ok = worst >= -PSD_GAP_RTOL * max(scale ** 3, scale)
    return CheckReport(
        name="corollary_bounds", status=ok, samples=3,
        tolerance=PSD_GAP_RTOL, margin=worst,
        witness=None if ok else f"{worst_name}: gap {worst:g} for "
                                f"C={C.tolist()}, theta={theta.tolist()}")


def matrix_inequality_battery(n_samples=10000, max_n=6, seed=0) -> CheckReport:
    """Randomized SPD battery over both inequality checks."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for k in range(n_samples):
        n = int(rng.integers(1, max_n + 1))
        C = random_spd(rng, n)
        theta = rng.exponential(1.0, size=n) + 1e-3
        for rep in (check_matrix_inequality(C, theta),
                    check_corollary_bounds(C, theta)):
            if not rep.status:
                return CheckReport(name="matrix_inequality_battery",
                                   status=False, samples=k + 1,
                                   tolerance=PSD_GAP_RTOL,
                                   witness=rep.witness, margin=rep.margin)
            worst = min(worst, rep.margin)
    return CheckReport(name="matrix_inequality_battery", status=True,
                       samples=n_samples, tolerance=PSD_GAP_RTOL,
                       margin=worst, witness=None)


@dataclass(frozen=True)
class RiccatiComparisonSpec:
    """Coefficients of two coupled terminal value problems.

    Both equations have the form F' = -A^T F - F A - F B F + C_coef with
    F(t0) = S, solved backward on [t1, t0].  The comparison hypotheses
    are S_Q <= S_P, 0 <= B_Q <= B_P and C_P <= C_Q, which force
    P >= Q on the interval.
    """

    a_coef: np.ndarray
    b_p: np.ndarray
    c_p: np.ndarray
    s_p: np.ndarray
    b_q: np.ndarray
    c_q: np.ndarray
    s_q: np.ndarray
    t0: float = 1.0
    t1: float = 0.0


def _validate_comparison(spec: RiccatiComparisonSpec):
    tol = 1e-12
    for name in ("b_p", "c_p", "s_p", "b_q", "c_q", "s_q"):
        m = np.asarray(getattr(spec, name), dtype=float)
        if not np.allclose(m, m.T, atol=1e-10 * max(np.max(np.abs(m)), 1.0)):
            raise HypothesisViolatedError(f"{name} is not symmetric")
    if _psd_gap(np.asarray(spec.s_p) - np.asarray(spec.s_q)) < -tol:
        raise HypothesisViolatedError("terminal ordering S_Q <= S_P fails")
    if _psd_gap(np.asarray(spec.b_q)) < -tol:
        raise HypothesisViolatedError("B_Q is not nonnegative definite")
    if _psd_gap(np.asarray(spec.b_p) - np.asarray(spec.b_q)) < -tol:
        raise HypothesisViolatedError("coefficient ordering B_Q <= B_P fails")
    if _psd_gap(np.asarray(spec.c_q) - np.asarray(spec.c_p)) < -tol:
        raise HypothesisViolatedError("coefficient ordering C_P <= C_Q fails")


_RICCATI_CAP = 1e4


def _integrate_comparison(a, b, c, s, t0, t1, steps):
    """RK4 on F' = -A^T F - F A - F B F + C backward from F(t0) = S.

    Solutions may blow up in finite backward time; integration stops at
    the cap and the (possibly truncated) node list is returned in
    backward order, starting at t0.
    """
    def rhs(F):
        return -(a.T @ F) - F @ a - F @ b @ F + c

    h = (t0 - t1) / steps
    F = np.asarray(s, dtype=float).copy()
    out = [F]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            # backward in t: step with negated right side
            k1 = -rhs(F)
            k2 = -rhs(F + 0.5 * h * k1)
            k3 = -rhs(F + 0.5 * h * k2)
            k4 = -rhs(F + h * k3)
            F = F + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            F = 0.5 * (F + F.T)
            if not np.all(np.isfinite(F)) or np.max(np.abs(F)) > _RICCATI_CAP:
                break
            out.append(F)
    return out


def check_riccati_comparison(spec: RiccatiComparisonSpec,
                             steps: int = 512) -> CheckReport:
    """Integrate both terminal value problems and certify P >= Q.

    The ordering hypotheses imply the second problem is solvable
    wherever the first is, so the check also fails if Q leaves its
    existence interval while P is still finite.
    """
    _validate_comparison(spec)
    a = np.asarray(spec.a_coef, dtype=float)
    P = _integrate_comparison(a, np.asarray(spec.b_p, float),
                              np.asarray(spec.c_p, float),
                              np.asarray(spec.s_p, float),
                              spec.t0, spec.t1, steps)
    Q = _integrate_comparison(a, np.asarray(spec.b_q, float),
                              np.asarray(spec.c_q, float),
                              np.asarray(spec.s_q, float),
                              spec.t0, spec.t1, steps)
    h = (spec.t0 - spec.t1) / steps
    if len(Q) < len(P):
        t_bad = spec.t0 - len(Q) * h
        return CheckReport(
            name="riccati_comparison", status=False, samples=len(Q),
            tolerance=PSD_GAP_RTOL, margin=None,
            witness=f"Q left its existence interval at t={t_bad:g} "
                    f"while P was still finite")
    m = len(P)
    scale = max(float(np.max(np.abs(P))), 1.0)
    worst = math.inf
    worst_k = 0
    for k in range(m):
        gap = _psd_gap(P[k] - Q[k])
        if gap < worst:
            worst, worst_k = gap, k
    ok = worst >= -PSD_GAP_RTOL * scale
    t_worst = spec.t0 - worst_k * h
    return CheckReport(
        name="riccati_comparison", status=ok, samples=m,
        tolerance=PSD_GAP_RTOL, margin=worst,
        witness=None if ok else f"P - Q gap {worst:g} at t={t_worst:g}")


def random_riccati_spec(rng, n) -> RiccatiComparisonSpec:
    """Constant-coefficient spec satisfying the comparison hypotheses."""
    a = 0.3 * rng.standard_normal((n, n))
    b_q = 0.5 * random_spd(rng, n) / n
    b_p = b_q + 0.5 * random_spd(rng, n) / n
    c_p = rng.standard_normal((n, n))
    c_p = 0.3 * (c_p + c_p.T)
    c_q = c_p + 0.5 * random_spd(rng, n) / n
    s_q = rng.standard_normal((n, n))
    s_q = 0.3 * (s_q + s_q.T)
    s_p = s_q + 0.5 * random_spd(rng, n) / n
    return RiccatiComparisonSpec(a_coef=a, b_p=b_p, c_p=c_p, s_p=s_p,
                                 b_q=b_q, c_q=c_q, s_q=s_q,
                                 t0=1.0, t1=0.5)


def riccati_comparison_battery(n_specs=100, seed=0) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for k in range(n_specs):
        n = int(rng.integers(1, 5))
        rep = check_riccati_comparison(random_riccati_spec(rng, n), steps=256)
        if not rep.status:
            return CheckReport(name="riccati_comparison_battery", status=False,
                               samples=k + 1, tolerance=PSD_GAP_RTOL,
                               witness=rep.witness, margin=rep.margin)
        worst = min(worst, rep.margin)
    return CheckReport(name="riccati_comparison_battery", status=True,
                       samples=n_specs, tolerance=PSD_GAP_RTOL,
                       margin=worst, witness=None)


def check_scalar_riccati(a, b, c, T=1.0, steps=2048,
                         span=1.0) -> CheckReport:
    """Lower bound for y' = y^2 + a y - b, y(T) = c.

    Requires a, b >= 0, c > 0, b < c^2 + a c and a^2/4 + b > 0; then
    y(t) >= 1/(T - t + 1/(c + a/2)) - a/2 wherever the solution exists
    on [T - span, T].  The backward solution can blow up in finite time,
    so steps adapt to the current magnitude and integration stops once
    y leaves the comparison regime.
    """
    if a < 0 or b < 0 or c <= 0 or b >= c * c + a * c or a * a / 4 + b <= 0:
        raise HypothesisViolatedError(
            f"(a={a:g}, b={b:g}, c={c:g}) violates the scalar preconditions")
    h_base = span / steps
    y = c
    t = T
    worst = math.inf
    worst_t = T
    count = 0
    while t > T - span and y < 1e4 and math.isfinite(y):
        bound = 1.0 / (T - t + 1.0 / (c + a / 2.0)) - a / 2.0
        margin = y - bound
        if margin < worst:
            worst, worst_t = margin, t
        h = min(h_base, 0.05 / (abs(y) + a + 1.0), t - (T - span))

        def f(v):
            return v * v + a * v - b
        k1 = -f(y)
        k2 = -f(y + 0.5 * h * k1)
        k3 = -f(y + 0.5 * h * k2)
        k4 = -f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t -= h
        count += 1
    steps = count
    scale = max(abs(c), 1.0)
    ok = worst >= -1e-8 * scale
    return CheckReport(name="scalar_riccati_bound", status=ok,
                       samples=steps + 1, tolerance=1e-8, margin=worst,
                       witness=None if ok else
                       f"y(t) below bound by {-worst:g} at t={worst_t:g} "
                       f"(a={a:g}, b={b:g}, c={c:g})")


def scalar_riccati_battery(n_specs=100, seed=0) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst = math.inf
    k = 0
    while k < n_specs:
        a = rng.exponential(1.0)
        c = rng.exponential(2.0) + 0.1
        b = rng.uniform(0.0, c * c + a * c)
        if a * a / 4 + b <= 0 or b >= c * c + a * c:
            continue
        rep = check_scalar_riccati(a, b, c)
        if not rep.status:
            return CheckReport(name="scalar_riccati_battery", status=False,
                               samples=k + 1, tolerance=1e-8,
                               witness=rep.witness, margin=rep.margin)
        worst = min(worst, rep.margin)
        k += 1
    return CheckReport(name="scalar_riccati_battery", status=True,
                       samples=n_specs, tolerance=1e-8, margin=worst,
                       witness=None)


def check_bound_construction(params: MarketParams, l: float,
                             steps: int = 512) -> CheckReport:
    """The comparison argument behind the sandwich bounds, end to end.

    After negating (P := -pL, Q := -C) the solved equation and the two
    constant-coefficient envelope equations fit the comparison theorem's
    form with B = Lambda^-1 >= 0; the ordering hypotheses on the
    inhomogeneous terms reduce to D >= d_min I (resp. d_max I >= D) plus
    the quadratic matrix inequality 0 <= C Ctil C <= theta_sum C.  This
    check verifies those hypothesis gaps at every grid node and then the
    conclusion p(l,t) Lambda <= C(l,t) <= q(l,t) Lambda.
    """
    d = derive(params)
    path = solve_finite_penalty(params, d, l, GridSpec(steps=steps))
    lam = params.lambda_
    sqrt_lam = np.linalg.inv(d.sqrt_lambda_inv)
    theta = params.theta
    theta_sum = d.theta_sum
    alpha = params.alpha
    lower_hyp = alpha * sqrt_lam @ (d.d_matrix - d.d_min * np.eye(params.n)) \
        @ sqrt_lam
    upper_hyp = alpha * sqrt_lam @ (d.d_max * np.eye(params.n) - d.d_matrix) \
        @ sqrt_lam
    worst = math.inf
    worst_what = None
    for k, t in enumerate(path.grid):
        C = path.c_matrices[k]
        cc = C @ ((theta / np.diagonal(C))[:, None] * C)
        gaps = {
            "lower hypothesis": _psd_gap(lower_hyp + theta_sum * C - cc),
            "upper hypothesis": _psd_gap(upper_hyp + cc),
        }
        b = bounds_finite(params, d, l, t)
        gaps["lower conclusion"] = _psd_gap(C - b.p * lam)
        gaps["upper conclusion"] = _psd_gap(b.q * lam - C)
        name = min(gaps, key=gaps.get)
        if gaps[name] < worst:
            worst, worst_what = gaps[name], f"{name} at t={t:g}"
    scale = max(l, 1.0)
    ok = worst >= -1e-6 * scale
    return CheckReport(name="bound_construction", status=ok,
                       samples=4 * len(path.grid), tolerance=1e-6,
                       margin=worst,
                       witness=None if ok else f"gap {worst:g} ({worst_what})")


def check_value_bracketing(params: MarketParams, l: float,
                           steps: int = 1024) -> CheckReport:
    """The construction behind the sandwich: p(l,t) Lambda <= C <= q(l,t) Lambda."""
    d = derive(params)
    path = solve_finite_penalty(params, d, l, GridSpec(steps=steps))
    lam = params.lambda_
    worst = math.inf
    for k, t in enumerate(path.grid):
        b = bounds_finite(params, d, l, t)
        low = _psd_gap(path.c_matrices[k] - b.p * lam)
        high = _psd_gap(b.q * lam - path.c_matrices[k])
        worst = min(worst, low, high)
    scale = l
    ok = worst >= -1e-6 * scale
    return CheckReport(name="value_bracketing", status=ok,
                       samples=len(path.grid), tolerance=1e-6, margin=worst,
                       witness=None if ok else
                       f"bracketing gap {worst:g} for l={l:g}")


def _expected_position_sq(Lambda, Sigma, alpha, theta, T, t, x):
    """E[X*(t)^2]: squared no-fill trajectory times survival e^{-theta t}."""
    xt = single_asset_trajectory(Lambda, Sigma, alpha, theta, T, t, x)
    return xt ** 2 * np.exp(-theta * np.asarray(t))


def _single_asset_cost_split(Lambda, Sigma, alpha, theta, T, x, n_quad=2001):
    """(impact, risk) expected cost components by Simpson quadrature."""
    ts = np.linspace(0.0, T * (1.0 - 1e-9), n_quad)
    ex2 = _expected_position_sq(Lambda, Sigma, alpha, theta, T, ts, x)
    C = np.array([single_asset_closed_form(Lambda, Sigma, alpha, theta, T,
                                           t, math.inf) for t in ts])
    g_imp = (C ** 2 / Lambda) * ex2
    g_risk = alpha * Sigma * ex2
    h = ts[1] - ts[0]

    def simpson(g):
        return (h / 3.0) * (g[0] + g[-1] + 4.0 * np.sum(g[1:-1:2])
                            + 2.0 * np.sum(g[2:-1:2]))

    return simpson(g_imp), simpson(g_risk)


def _monotone(values, direction, rtol=MONOTONE_RTOL, strict=True):
    """Index of the first grid neighbor violating the claim, or None."""
    v = np.asarray(values, dtype=float)
    scale = np.maximum(np.abs(v[:-1]), np.abs(v[1:])) + 1e-30
    diff = np.diff(v) * (1 if direction == "increasing" else -1)
    bad = diff <= rtol * scale if strict else diff < -rtol * scale
    idx = np.flatnonzero(bad)
    return int(idx[0]) if idx.size else None


def check_single_asset_statics(Lambda=1.0, Sigma=1.0, alpha=6.0, T=1.0,
                               x=1.0) -> CheckReport:
    """Single-asset monotonicity battery on closed forms.

    Over theta in {0, 0.5, 1, 2, 4, 8} (with alpha*Sigma > 0): value
    coefficient, selling rate, expected position and both cost
    components decrease; the no-fill trajectory increases.  Over Lambda
    and alpha*Sigma grids: value increases in both; the selling rate
    decreases in Lambda and increases in alpha*Sigma.
    """
    if alpha * Sigma <= 0.0:
        raise ValueError("the theta sweep requires alpha * Sigma > 0")
    thetas = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0])
    t_grid = np.array([0.0, 0.25, 0.5, 0.75])
    failures = []
    samples = 0

    for t in t_grid:
        cs = [single_asset_closed_form(Lambda, Sigma, alpha, th, T, t, math.inf)
              for th in thetas]
        samples += len(cs)
        if (i := _monotone(cs, "decreasing")) is not None:
            failures.append(f"C(t={t:g}) not decreasing in theta at "
                            f"theta={thetas[i]:g}")
        xis = [c * x / Lambda for c in cs]
        if (i := _monotone(xis, "decreasing")) is not None:
            failures.append(f"xi(t={t:g}) not decreasing in theta at "
                            f"theta={thetas[i]:g}")
    for t in (0.25, 0.5, 0.75):
        xts = [single_asset_trajectory(Lambda, Sigma, alpha, th, T, t, x)
               for th in thetas]
        if (i := _monotone(xts, "increasing")) is not None:
            failures.append(f"no-fill trajectory at t={t:g} not increasing "
                            f"in theta at theta={thetas[i]:g}")
        exs = [single_asset_trajectory(Lambda, Sigma, alpha, th, T, t, x)
               * math.exp(-th * t) for th in thetas]
        if (i := _monotone(exs, "decreasing")) is not None:
            failures.append(f"expected position at t={t:g} not decreasing "
                            f"in theta at theta={thetas[i]:g}")
    splits = [_single_asset_cost_split(Lambda, Sigma, alpha, th, T, x)
              for th in thetas]
    if (i := _monotone([s[0] for s in splits], "decreasing")) is not None:
        failures.append(f"impact costs not decreasing in theta at "
                        f"theta={thetas[i]:g}")
    if (i := _monotone([s[1] for s in splits], "decreasing")) is not None:
        failures.append(f"risk costs not decreasing in theta at "
                        f"theta={thetas[i]:g}")

    lam_grid = np.array([0.5, 1.0, 2.0, 4.0])
    cs = [single_asset_closed_form(lm, Sigma, alpha, 4.0, T, 0.0, math.inf)
          for lm in lam_grid]
    samples += len(cs)
    if (i := _monotone(cs, "increasing")) is not None:
        failures.append(f"C not increasing in Lambda at {lam_grid[i]:g}")
    xis = [c * x / lm for c, lm in zip(cs, lam_grid)]
    if (i := _monotone(xis, "decreasing")) is not None:
        failures.append(f"xi not decreasing in Lambda at {lam_grid[i]:g}")

    asig_grid = np.array([1.0, 2.0, 6.0, 12.0])
    cs = [single_asset_closed_form(Lambda, s_, 1.0, 4.0, T, 0.0, math.inf)
          for s_ in asig_grid]
    samples += len(cs)
    if (i := _monotone(cs, "increasing")) is not None:
        failures.append(f"C not increasing in alpha*Sigma at {asig_grid[i]:g}")
    if (i := _monotone([c * x / Lambda for c in cs], "increasing")) is not None:
        failures.append(f"xi not increasing in alpha*Sigma at {asig_grid[i]:g}")

    ok = not failures
    return CheckReport(name="single_asset_statics", status=ok,
                       samples=samples, tolerance=MONOTONE_RTOL,
                       witness="; ".join(failures) if failures else None,
                       margin=None)


def _two_asset_c0(rho, lambda1=3.0, lambda2=0.2, theta=(0.5, 5.0),
                  alpha=4.0, sigma1=1.0, sigma2=1.0, T=1.0, steps=384,
                  lambda12=0.0):
    params = two_asset_params(lambda1, lambda2, sigma1, sigma2, rho,
                              alpha, theta, T, lambda12=lambda12)
    d = derive(params)
    path = principal_solution(params, d, GridSpec(steps=steps))
    return path.c_matrices[0]


def check_two_asset_statics(rho_points=41, steps=384, t_eval=0.0,
                            **kwargs) -> CheckReport:
    """Correlation statics of the two-asset value matrix and controls.

    On a rho grid: c_11/c_22 even and c_12 odd in rho; sgn(c_12) =
    sgn(rho); c_ii increasing on [-1, 0) and decreasing on (0, 1];
    c_12 increasing; value of the long-long portfolio decreasing in
    |rho| for rho < 0; dark-pool orders increasing in rho and selling
    rates increasing on [-1, 0); value/lambda_i decreasing in lambda_i
    and value decreasing in theta_i.
    """
    # exact +/- pairs so the parity checks compare identical magnitudes
    half = np.linspace(0.0, 0.99, (rho_points + 1) // 2)
    rhos = np.concatenate([[-1.0], -half[:0:-1], half, [1.0]])
    c0 = {r: _two_asset_c0(r, steps=steps, **kwargs) for r in rhos}
    failures = []
    x = np.array([1.0, 1.0])

    sym_tol = 1e-6
    for r in rhos[rhos > 0]:
        a, b = c0[r], c0[-r]
        if abs(a[0, 0] - b[0, 0]) > sym_tol * abs(a[0, 0]) or \
           abs(a[1, 1] - b[1, 1]) > sym_tol * abs(a[1, 1]):
            failures.append(f"diagonal not even in rho at rho={r:g}")
        if abs(a[0, 1] + b[0, 1]) > sym_tol * max(abs(a[0, 1]), 1e-12):
            failures.append(f"c_12 not odd in rho at rho={r:g}")
        if a[0, 1] <= 0.0:
            failures.append(f"sgn(c_12) != sgn(rho) at rho={r:g}")
    if abs(c0[0.0][0, 1] if 0.0 in c0 else 0.0) > sym_tol:
        failures.append("c_12 nonzero at rho=0")

    neg = rhos[rhos < 0]
    pos = rhos[rhos > 0]
    for label, idx in (("c_11", (0, 0)), ("c_22", (1, 1))):
        if (i := _monotone([c0[r][idx] for r in neg], "increasing")) is not None:
            failures.append(f"{label} not increasing on [-1,0) at rho={neg[i]:g}")
        if (i := _monotone([c0[r][idx] for r in pos], "decreasing")) is not None:
            failures.append(f"{label} not decreasing on (0,1] at rho={pos[i]:g}")
    if (i := _monotone([c0[r][0, 1] for r in rhos], "increasing",
                       strict=False)) is not None:
        failures.append(f"c_12 not increasing in rho at rho={rhos[i]:g}")

    # well diversified (long-long, rho<0): value decreasing in |rho|
    v_neg = [float(x @ c0[r] @ x) for r in neg]
    if (i := _monotone(v_neg, "increasing")) is not None:
        failures.append(f"well-diversified value not decreasing in |rho| "
                        f"at rho={neg[i]:g}")

    # dark-pool orders increasing in rho on the full grid; selling rates
    # increasing on [-1, 0)
    eta1 = [1.0 + c0[r][0, 1] / c0[r][0, 0] for r in rhos]
    eta2 = [1.0 + c0[r][0, 1] / c0[r][1, 1] for r in rhos]
    for label, vals in (("eta_1", eta1), ("eta_2", eta2)):
        if (i := _monotone(vals, "increasing")) is not None:
            failures.append(f"{label} not increasing in rho at rho={rhos[i]:g}")
    lam1 = kwargs.get("lambda1", 3.0)
    lam2 = kwargs.get("lambda2", 0.2)
    xi1 = [(c0[r][0, 0] + c0[r][0, 1]) / lam1 for r in neg]
    xi2 = [(c0[r][1, 1] + c0[r][0, 1]) / lam2 for r in neg]
    for label, vals in (("xi_1", xi1), ("xi_2", xi2)):
        if (i := _monotone(vals, "increasing")) is not None:
            failures.append(f"{label} not increasing on [-1,0) at rho={neg[i]:g}")

    # value/lambda_i decreasing in lambda_i (diagonal impact)
    lam_grid = [1.0, 2.0, 4.0, 8.0]
    vals = []
    for lm in lam_grid:
        c = _two_asset_c0(-0.5, steps=steps,
                          **{**kwargs, "lambda1": lm})
        vals.append(float(x @ c @ x) / lm)
    if (i := _monotone(vals, "decreasing", strict=False)) is not None:
        failures.append(f"v/lambda_1 not decreasing at lambda_1={lam_grid[i]:g}")

    # value decreasing in theta_i
    th_grid = [0.25, 0.5, 1.0, 2.0, 4.0]
    base_theta = kwargs.get("theta", (0.5, 5.0))
    vals = []
    for th in th_grid:
        c = _two_asset_c0(-0.5, steps=steps,
                          **{**kwargs, "theta": (th, base_theta[1])})
        vals.append(float(x @ c @ x))
    if (i := _monotone(vals, "decreasing", strict=False)) is not None:
        failures.append(f"v not decreasing in theta_1 at theta_1={th_grid[i]:g}")

    ok = not failures
    return CheckReport(name="two_asset_statics", status=ok,
                       samples=len(rhos) + len(lam_grid) + len(th_grid),
                       tolerance=MONOTONE_RTOL,
                       witness="; ".join(failures) if failures else None,
                       margin=None)


def _sample_path_states(prop, params, x0, schedule, sample_times):
    """Positions at sample times plus (time, before, after) at each fill."""
    x = np.asarray(x0, dtype=float)
    t_cur = 0.0
    out = np.empty((len(sample_times), params.n))
    jump_states = []
    idx = 0
    events = [e for e in schedule.events if e[0] < prop.t_end]
    for t_ev, i_ev in events + [(prop.t_end, -1)]:
        z = np.linalg.solve(prop.phi_at(t_cur), x)
        while idx < len(sample_times) and sample_times[idx] <= t_ev:
            out[idx] = prop.phi_at(sample_times[idx]) @ z
            idx += 1
        if i_ev < 0:
            break
        before = prop.phi_at(t_ev) @ z
        eta = prop.eta_at(t_ev) @ before
        after = before.copy()
        after[i_ev] -= eta[i_ev]
        jump_states.append((t_ev, i_ev, before, after))
        x, t_cur = after, t_ev
    return out, jump_states


def check_trajectory_structure(lambda1=3.0, lambda2=0.2, theta=(0.5, 3.0),
                               alpha=4.0, rho=0.9, T=1.0, n_seeds=200,
                               steps=384, base_seed=2024) -> CheckReport:
    """Sign structure of optimal trajectories for two correlated assets.

    (i) a well diversified start keeps its component signs to the grid
    end; (ii) a poorly diversified start has every fill (before the
    first sign change) flipping the filled component's sign; (iii) after
    the first fill, each control points toward zero or vanishes; with
    rho = 0 a fill takes the filled component exactly to zero.
    """
    params = two_asset_params(lambda1, lambda2, 1.0, 1.0, rho, alpha,
                              theta, T)
    d = derive(params)
    path = principal_solution(params, d, GridSpec(steps=steps))
    prop = build_propagator(path, params, 0.0, n_nodes=1024)
    sample_times = np.linspace(0.0, path.grid_end, 101)
    C_samples = evaluate_C(path, sample_times)
    lam_inv = d.lambda_inv
    failures = []
    samples = 0

    def controls(C, x):
        xi = lam_inv @ C @ x
        eta = (C @ x) / np.diagonal(C)
        return xi, eta

    for seed in range(n_seeds):
        schedule = draw_jumps(params.theta, 0.0, T, [base_seed, seed])

        # scenario (i): well diversified x = (1, -1)
        x0 = np.array([1.0, -1.0])
        pos, jumps = _sample_path_states(prop, params, x0, schedule,
                                         sample_times)
        samples += len(sample_times)
        tol = 1e-9
        if np.any(pos[:, 0] < -tol) or np.any(pos[:, 1] > tol):
            failures.append(f"seed {seed}: well-diversified sign change")
        for t_ev, i_ev, before, after in jumps:
            if after[0] < -tol or after[1] > tol:
                failures.append(f"seed {seed}: fill at t={t_ev:g} broke "
                                "well-diversified signs")
                break

        # scenario (ii): poorly diversified x = (1, 1); fills flip signs
        # while both components are still positive
        x0 = np.array([1.0, 1.0])
        pos, jumps = _sample_path_states(prop, params, x0, schedule,
                                         sample_times)
        for t_ev, i_ev, before, after in jumps:
            if np.any(before <= 0.0):
                break  # past the first sign change; claim no longer applies
            if after[i_ev] > tol:
                failures.append(f"seed {seed}: fill at t={t_ev:g} did not "
                                f"flip asset {i_ev + 1} "
                                f"({before[i_ev]:g} -> {after[i_ev]:g})")
                break

        # scenario (iii): after the first fill, controls point toward zero
        if jumps:
            t_first = jumps[0][0]
            after_idx = sample_times > t_first
            for t_s, x_s, C_s in zip(sample_times[after_idx],
                                     pos[after_idx],
                                     C_samples[after_idx]):
                xi, eta = controls(C_s, x_s)
                if np.any(xi * x_s < -1e-9) or np.any(eta * x_s < -1e-9):
                    failures.append(f"seed {seed}: control against position "
                                    f"at t={t_s:g}")
                    break
        if failures:
            break

    # rho = 0: fills take the filled component exactly to zero
    params0 = two_asset_params(lambda1, lambda2, 1.0, 1.0, 0.0, alpha,
                               theta, T)
    d0 = derive(params0)
    path0 = principal_solution(params0, d0, GridSpec(steps=steps))
    prop0 = build_propagator(path0, params0, 0.0, n_nodes=1024)
    schedule = draw_jumps(params0.theta, 0.0, T, [base_seed, 0])
    _, jumps = _sample_path_states(prop0, params0, np.array([1.0, 1.0]),
                                   schedule, sample_times)
    for t_ev, i_ev, before, after in jumps:
        if abs(after[i_ev]) > 1e-8 * abs(before[i_ev]) + 1e-12:
            failures.append(f"rho=0 fill at t={t_ev:g} left residual "
                            f"{after[i_ev]:g}")

    ok = not failures
    return CheckReport(name="trajectory_structure", status=ok,
                       samples=samples, tolerance=1e-9,
                       witness="; ".join(failures[:3]) if failures else None,
                       margin=None)


def check_cross_impact(lambda12=0.3, rho=0.2, theta=(3.0, 3.0), alpha=1.0,
                       T=1.0, n_seeds=50, steps=384,
                       base_seed=77) -> CheckReport:
    """Diversification statics with cross price impact, sgn(l12)=sgn(rho).

    (i) flipping the second position of a well diversified portfolio
    raises the value (and conversely); (iii) fills never flip the sign
    of a well diversified component (no oversized dark-pool orders).
    """
    if not (0 < abs(lambda12) < 1.0) or np.sign(lambda12) != np.sign(rho):
        raise ValueError("requires 0 < |lambda12| < sqrt(l1 l2) and "
                         "sgn(lambda12) = sgn(rho)")
    params = two_asset_params(1.0, 1.0, 1.0, 1.0, rho, alpha, theta, T,
                              lambda12=lambda12)
    d = derive(params)
    path = principal_solution(params, d, GridSpec(steps=steps))
    C0 = path.c_matrices[0]
    failures = []
    # rho, lambda12 > 0: opposite signs are well diversified
    x_well = np.array([1.0, -1.0])
    x_poor = np.array([1.0, 1.0])
    v_well = float(x_well @ C0 @ x_well)
    v_poor = float(x_poor @ C0 @ x_poor)
    if not v_well < v_poor:
        failures.append(f"value comparison failed: v(1,-1)={v_well:g} "
                        f">= v(1,1)={v_poor:g}")

    prop = build_propagator(path, params, 0.0, n_nodes=1024)
    sample_times = np.linspace(0.0, path.grid_end, 51)
    tol = 1e-9
    for seed in range(n_seeds):
        schedule = draw_jumps(params.theta, 0.0, T, [base_seed, seed])
        pos, jumps = _sample_path_states(prop, params, x_well, schedule,
                                         sample_times)
        for t_ev, i_ev, before, after in jumps:
            if before[0] <= 0.0 or before[1] >= 0.0:
                break  # past the first sign change
            if after[i_ev] * np.sign(x_well[i_ev]) < -tol:
                failures.append(f"seed {seed}: oversized fill flipped "
                                f"well-diversified asset {i_ev + 1} at "
                                f"t={t_ev:g}")
                break
        pos, jumps = _sample_path_states(prop, params, x_poor, schedule,
                                         sample_times)
        for t_ev, i_ev, before, after in jumps:
            if np.any(before <= 0.0):
                break
            if after[i_ev] > tol:
                failures.append(f"seed {seed}: poorly diversified fill did "
                                f"not flip asset {i_ev + 1} at t={t_ev:g}")
                break
        if failures:
            break

    ok = not failures
    return CheckReport(name="cross_impact", status=ok,
                       samples=n_seeds, tolerance=tol,
                       witness="; ".join(failures[:3]) if failures else None,
                       margin=None)


def run_battery(seed=0, quick=False) -> list[CheckReport]:
    """Full oracle battery (CLI `check` and the release gate)."""
    n_mat = 1000 if quick else 10000
    n_ricc = 20 if quick else 100
    n_seeds = 50 if quick else 200
    rho_points = 21 if quick else 41
    reports = [
        matrix_inequality_battery(n_samples=n_mat, seed=seed),
        riccati_comparison_battery(n_specs=n_ricc, seed=seed),
        scalar_riccati_battery(n_specs=n_ricc, seed=seed),
        check_value_bracketing(
            MarketParams(n=1, lambda_=[[1.0]], sigma=[[1.0]], alpha=6.0,
                         theta=[4.0], horizon_T=1.0), l=10.0),
        check_bound_construction(
            two_asset_params(3.0, 0.2, 1.0, 1.0, 0.5, 4.0, (0.5, 5.0), 1.0),
            l=50.0),
        check_single_asset_statics(),
        check_two_asset_statics(rho_points=rho_points),
        check_trajectory_structure(n_seeds=n_seeds, base_seed=seed + 2024),
        check_cross_impact(n_seeds=max(n_seeds // 4, 10),
                           base_seed=seed + 77),
    ]
    return reports
