import math

import numpy as np
import pytest

from darkliq.errors import (
    AtSingularityError,
    OutOfGridRangeError,
    PenaltyTooSmallError,
)
from darkliq.market import MarketParams, derive, two_asset_params
from darkliq.value import (
    GridSpec,
    LadderSpec,
    arcoth,
    bounds_finite,
    bounds_limit,
    evaluate_C,
    principal_solution,
    single_asset_closed_form,
    single_asset_trajectory,
    solve_finite_penalty,
    value_at,
    value_path_header,
    value_path_rows,
)

REF_SINGLE = dict(Lambda=1.0, Sigma=1.0, alpha=6.0, theta=4.0, T=1.0)


def ref_single_params():
    return MarketParams(n=1, lambda_=[[1.0]], sigma=[[1.0]], alpha=6.0,
                        theta=[4.0], horizon_T=1.0)


class TestClosedForms:
    def test_principal_reference_value(self):
        # (theta_til/2) coth(theta_til/2) - theta/2 with theta_til = sqrt(40)
        th = math.sqrt(40.0)
        expected = th / 2.0 / math.tanh(th / 2.0) - 2.0
        got = single_asset_closed_form(t=0.0, penalty=math.inf, **REF_SINGLE)
        assert got == pytest.approx(expected, rel=1e-15)
        assert got == pytest.approx(1.1736301042196886, rel=1e-12)

    def test_degenerate_principal(self):
        assert single_asset_closed_form(1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                                        math.inf) == pytest.approx(1.0)

    def test_degenerate_finite(self):
        # Lambda/(T - t + Lambda/l) with l = 1: 1/(1+1) = 0.5
        assert single_asset_closed_form(1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                                        1.0) == pytest.approx(0.5)

    def test_finite_matches_rational_limit_for_small_penalty(self):
        # theta = 0, alpha*Sigma = 0 keeps the rational branch for any l
        v = single_asset_closed_form(2.0, 0.0, 0.0, 0.0, 1.5, 0.5, 3.0)
        assert v == pytest.approx(2.0 / (1.0 + 2.0 / 3.0))

    def test_singularity_guard(self):
        with pytest.raises(AtSingularityError):
            single_asset_closed_form(t=1.0, penalty=math.inf, **REF_SINGLE)

    def test_trajectory_endpoints(self):
        x = single_asset_trajectory(t=0.0, x0=2.5, **REF_SINGLE)
        assert x == pytest.approx(2.5)
        assert single_asset_trajectory(t=1.0, x0=2.5, **REF_SINGLE) == 0.0

    def test_trajectory_degenerate_is_linear(self):
        assert single_asset_trajectory(1.0, 0.0, 0.0, 0.0, 2.0, 0.5,
                                       1.0) == pytest.approx(0.75)


class TestBounds:
    def test_ordering_and_positivity(self):
        p = ref_single_params()
        d = derive(p)
        for t in (0.0, 0.5, 0.9, 0.999):
            b = bounds_finite(p, d, 10.0, t)
            assert 0.0 < b.p <= b.q
            bl = bounds_limit(p, d, t)
            assert 0.0 < bl.p <= bl.q

    def test_limit_dominates_finite(self):
        p = ref_single_params()
        d = derive(p)
        b = bounds_finite(p, d, 50.0, 0.3)
        bl = bounds_limit(p, d, 0.3)
        assert b.p <= bl.p + 1e-12
        assert b.q <= bl.q + 1e-12

    def test_penalty_threshold_enforced(self):
        p = ref_single_params()
        d = derive(p)
        with pytest.raises(PenaltyTooSmallError):
            bounds_finite(p, d, d.l0 * 0.5, 0.0)

    def test_degenerate_bounds_are_rational(self):
        p = MarketParams(n=1, lambda_=[[2.0]], sigma=[[0.0]], alpha=0.0,
                         theta=[0.0], horizon_T=1.0)
        d = derive(p)
        b = bounds_finite(p, d, 4.0, 0.0)
        assert b.p == pytest.approx(1.0 / (1.0 + 2.0 / 4.0))
        assert b.q == pytest.approx(b.p)
        bl = bounds_limit(p, d, 0.25)
        assert bl.p == pytest.approx(1.0 / 0.75)

    def test_arcoth_identity(self):
        x = 1.7
        assert 1.0 / math.tanh(arcoth(x)) == pytest.approx(x, rel=1e-12)


class TestFinitePenaltySolver:
    def test_degenerate_closed_form(self):
        p = MarketParams(n=1, lambda_=[[1.0]], sigma=[[0.0]], alpha=0.0,
                         theta=[0.0], horizon_T=1.0)
        d = derive(p)
        path = solve_finite_penalty(p, d, 1.0, GridSpec(steps=256))
        got = evaluate_C(path, 0.0)[0, 0]
        assert got == pytest.approx(0.5, abs=1e-8)

    def test_reference_params_match_coth_form(self):
        p = ref_single_params()
        d = derive(p)
        path = solve_finite_penalty(p, d, 100.0, GridSpec(steps=512))
        for t in (0.0, 0.37, 0.81, 0.99):
            got = evaluate_C(path, t)[0, 0]
            want = single_asset_closed_form(t=t, penalty=100.0, **REF_SINGLE)
            assert got == pytest.approx(want, rel=1e-6)

    def test_terminal_condition_exact(self):
        p = ref_single_params()
        d = derive(p)
        path = solve_finite_penalty(p, d, 25.0, GridSpec(steps=128))
        assert path.c_matrices[-1][0, 0] == pytest.approx(25.0, rel=1e-14)

    def test_decoupled_assets_stay_diagonal(self):
        p = MarketParams(n=2, lambda_=np.eye(2), sigma=np.eye(2), alpha=3.0,
                         theta=[1.0, 5.0], horizon_T=1.0)
        d = derive(p)
        path = solve_finite_penalty(p, d, 20.0, GridSpec(steps=256))
        off = np.max(np.abs(path.c_matrices[:, 0, 1]))
        assert off <= 1e-10

    def test_penalty_too_small_rejected(self):
        p = ref_single_params()
        d = derive(p)
        with pytest.raises(PenaltyTooSmallError):
            solve_finite_penalty(p, d, d.l0, GridSpec(steps=64))

    def test_off_diagonal_satisfies_scalar_equation(self):
        """The off-diagonal entry solves its own linear scalar equation.

        For diagonal impact, c_12' = c_12 (c_11/l1 + c_22/l2 + th1 + th2)
        - alpha rho s1 s2 with c_12(T) = 0; integrate it independently
        using the solver's own diagonal entries and compare.
        """
        rho = 0.6
        p = two_asset_params(3.0, 0.2, 1.0, 1.0, rho, 4.0, (0.5, 5.0), 1.0)
        d = derive(p)
        path = solve_finite_penalty(p, d, 60.0, GridSpec(steps=1024))
        T = 1.0
        m = 20000
        ts = np.linspace(T, 0.0, m + 1)
        Cs = evaluate_C(path, ts)
        c12 = 0.0
        for k in range(m):
            h = ts[k + 1] - ts[k]  # negative: backward in time

            def rhs(v, C):
                growth = C[0, 0] / 3.0 + C[1, 1] / 0.2 + 0.5 + 5.0
                return v * growth - 4.0 * rho

            Cmid = 0.5 * (Cs[k] + Cs[k + 1])
            k1 = rhs(c12, Cs[k])
            k2 = rhs(c12 + 0.5 * h * k1, Cmid)
            k3 = rhs(c12 + 0.5 * h * k2, Cmid)
            k4 = rhs(c12 + h * k3, Cs[k + 1])
            c12 += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        assert c12 == pytest.approx(evaluate_C(path, 0.0)[0, 1], rel=1e-6)


class TestPrincipalSolution:
    def test_reference_value(self):
        p = ref_single_params()
        d = derive(p)
        path = principal_solution(p, d, GridSpec(steps=512))
        assert path.is_principal
        got = evaluate_C(path, 0.0)[0, 0]
        assert got == pytest.approx(1.1736301042196886, rel=1e-7)

    def test_degenerate_reference(self):
        p = MarketParams(n=1, lambda_=[[1.0]], sigma=[[0.0]], alpha=0.0,
                         theta=[0.0], horizon_T=1.0)
        d = derive(p)
        path = principal_solution(p, d, GridSpec(steps=256))
        assert evaluate_C(path, 0.0)[0, 0] == pytest.approx(1.0, rel=1e-7)

    def test_grid_stops_before_horizon(self):
        p = ref_single_params()
        d = derive(p)
        path = principal_solution(p, d, GridSpec(steps=128),
                                  delta_cut=0.01)
        assert path.grid_end == pytest.approx(0.99)
        with pytest.raises(OutOfGridRangeError):
            evaluate_C(path, 0.995)

    def test_custom_ladder_converges(self):
        p = ref_single_params()
        d = derive(p)
        path = principal_solution(p, d, GridSpec(steps=128),
                                  LadderSpec(start=10.0, factor=8.0))
        assert evaluate_C(path, 0.0)[0, 0] == pytest.approx(
            1.1736301042196886, rel=1e-5)

    def test_value_at_matches_quadratic_form(self):
        p = two_asset_params(3.0, 0.2, 1.0, 1.0, -0.5, 4.0, (0.5, 5.0), 1.0)
        d = derive(p)
        path = principal_solution(p, d, GridSpec(steps=256))
        x = np.array([1.0, -2.0])
        C = evaluate_C(path, 0.1)
        assert value_at(path, 0.1, x) == pytest.approx(float(x @ C @ x))


class TestRandomEquivalence:
    def test_solver_matches_closed_form_random_draws(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            lam = float(rng.uniform(0.2, 3.0))
            a_sig = float(rng.uniform(0.0, 5.0))
            theta = float(rng.uniform(0.0, 6.0))
            T = float(rng.uniform(0.5, 2.0))
            p = MarketParams(n=1, lambda_=[[lam]], sigma=[[1.0]],
                             alpha=a_sig, theta=[theta], horizon_T=T)
            d = derive(p)
            l = max(2.0 * d.l0, 0.5) * float(rng.uniform(1.1, 50.0))
            path = solve_finite_penalty(p, d, l, GridSpec(steps=256))
            for t in (0.0, 0.5 * T, 0.95 * T):
                want = single_asset_closed_form(lam, 1.0, a_sig, theta, T,
                                                t, l)
                assert evaluate_C(path, t)[0, 0] == pytest.approx(
                    want, rel=1e-6)


class TestSerialization:
    def test_header_and_row_shape(self):
        p = two_asset_params(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, (1, 1), 1.0)
        d = derive(p)
        path = solve_finite_penalty(p, d, 10.0, GridSpec(steps=64))
        header = value_path_header(2)
        assert header == "t,c_1_1,c_1_2,c_2_1,c_2_2"
        rows = list(value_path_rows(path))
        assert len(rows) == len(path.grid)
        first = rows[0].split(",")
        assert len(first) == 5
        assert float(first[0]) == path.grid[0]
