import math

import numpy as np
import pytest

from darkliq.market import MarketParams, derive, two_asset_params
from darkliq.simulate import (
    JumpSchedule,
    Perturbation,
    build_propagator,
    draw_jumps,
    liquidation_check,
    monte_carlo_value,
    simulate,
    trajectory_header,
    trajectory_rows,
)
from darkliq.value import (
    GridSpec,
    evaluate_C,
    principal_solution,
    single_asset_trajectory,
    solve_finite_penalty,
)


def ref_single():
    params = MarketParams(n=1, lambda_=[[1.0]], sigma=[[1.0]], alpha=6.0,
                          theta=[4.0], horizon_T=1.0)
    return params, derive(params)


@pytest.fixture(scope="module")
def ref_single_path():
    params, d = ref_single()
    return params, d, principal_solution(params, d, GridSpec(steps=512))


class TestJumpDraws:
    def test_deterministic_and_sorted(self):
        theta = np.array([0.5, 5.0])
        s1 = draw_jumps(theta, 0.0, 1.0, [7, 1])
        s2 = draw_jumps(theta, 0.0, 1.0, [7, 1])
        assert s1.events == s2.events
        times = [t for t, _ in s1.events]
        assert times == sorted(times)
        assert all(0.0 < t < 1.0 for t in times)

    def test_zero_intensity_draws_nothing(self):
        s = draw_jumps(np.array([0.0]), 0.0, 1.0, [0, 0])
        assert s.events == ()

    def test_schedule_rejects_unordered(self):
        with pytest.raises(ValueError):
            JumpSchedule(events=((0.5, 0), (0.4, 1)))


class TestSimulate:
    def test_no_fill_matches_closed_form(self, ref_single_path):
        params, d, path = ref_single_path
        traj = simulate(path, params, [1.0], 0.0, JumpSchedule(events=()))
        for row in traj.samples[:: len(traj.samples) // 15]:
            t, x = row[0], row[1]
            want = single_asset_trajectory(1.0, 1.0, 6.0, 4.0, 1.0, t, 1.0)
            assert x == pytest.approx(want, abs=5e-8)

    def test_fill_liquidates_single_asset(self, ref_single_path):
        params, d, path = ref_single_path
        schedule = JumpSchedule(events=((0.4, 0),))
        traj = simulate(path, params, [1.0], 0.0, schedule)
        assert len(traj.jumps) == 1
        t_j, asset, eta, before, after = traj.jumps[0]
        assert t_j == 0.4 and asset == 0
        assert eta == pytest.approx(before[0], rel=1e-12)
        assert after[0] == pytest.approx(0.0, abs=1e-14)
        # position stays at zero afterwards
        post = traj.samples[traj.samples[:, 0] > 0.4]
        assert np.max(np.abs(post[:, 1])) <= 1e-12

    def test_degenerate_costs_exact(self):
        # theta=0, alpha=0, l=1000: impact cost = l^2 T/(lT+Lambda)^2 * ...
        params = MarketParams(n=1, lambda_=[[1.0]], sigma=[[0.0]], alpha=0.0,
                              theta=[0.0], horizon_T=1.0)
        d = derive(params)
        path = solve_finite_penalty(params, d, 1000.0, GridSpec(steps=512))
        traj = simulate(path, params, [1.0], 0.0, JumpSchedule(events=()))
        # constant rate xi = l/(lT+Lambda); X(T) = Lambda/(lT+Lambda)
        xi = 1000.0 / 1001.0
        assert traj.cost_impact == pytest.approx(xi ** 2, rel=1e-7)
        assert traj.cost_risk == 0.0
        assert traj.terminal_penalty == pytest.approx(
            1000.0 * (1.0 / 1001.0) ** 2, rel=1e-6)
        assert traj.total_cost == pytest.approx(1000.0 / 1001.0, rel=1e-7)

    def test_csv_round_trip(self, ref_single_path):
        params, d, path = ref_single_path
        traj = simulate(path, params, [1.0], 0.0,
                        JumpSchedule(events=((0.3, 0),)))
        header = trajectory_header(1)
        assert header == "t,x_1,xi_1,jump_asset"
        rows = list(trajectory_rows(traj, 1))
        assert len(rows) == len(traj.samples)
        flagged = [r for r in rows if r.endswith(",0")]
        assert len(flagged) >= 1  # the fill is marked


class TestLiquidationEnvelope:
    def test_optimal_paths_satisfy_bound(self, ref_single_path):
        params, d, path = ref_single_path
        for seed in range(5):
            schedule = draw_jumps(params.theta, 0.0, 1.0, [99, seed])
            traj = simulate(path, params, [1.0], 0.0, schedule)
            rep = liquidation_check(traj, params, d)
            assert rep.status, rep.witness

    def test_degenerate_path_saturates_bound(self):
        params = MarketParams(n=1, lambda_=[[1.0]], sigma=[[0.0]], alpha=0.0,
                              theta=[0.0], horizon_T=1.0)
        d = derive(params)
        path = principal_solution(params, d, GridSpec(steps=256))
        traj = simulate(path, params, [1.0], 0.0, JumpSchedule(events=()))
        rep = liquidation_check(traj, params, d)
        assert rep.status
        # the rational case is exactly x^2 (T-s)^2/T^2: zero margin
        assert rep.margin == pytest.approx(0.0, abs=1e-7)


class TestMonteCarlo:
    def test_zero_intensity_is_deterministic(self):
        params = MarketParams(n=1, lambda_=[[1.0]], sigma=[[1.0]], alpha=6.0,
                              theta=[0.0], horizon_T=1.0)
        d = derive(params)
        path = principal_solution(params, d, GridSpec(steps=512))
        est = monte_carlo_value(path, params, [1.0], 0.0, n_paths=50,
                                base_seed=0, n_nodes=2048)
        assert est.std_error == pytest.approx(0.0, abs=1e-14)
        assert est.mean == pytest.approx(est.analytic_value,
                                         rel=2e-5)

    def test_estimate_consistent_with_analytic(self, ref_single_path):
        params, d, path = ref_single_path
        est = monte_carlo_value(path, params, [1.0], 0.0, n_paths=4000,
                                base_seed=5, n_nodes=2048)
        assert abs(est.mean - est.analytic_value) <= \
            3.0 * est.std_error + est.remainder
        assert est.n_paths == 4000

    def test_reproducible_across_thread_counts(self, ref_single_path):
        params, d, path = ref_single_path
        kw = dict(n_paths=300, base_seed=21, n_nodes=1024)
        serial = monte_carlo_value(path, params, [1.0], 0.0, **kw)
        threaded = monte_carlo_value(path, params, [1.0], 0.0, threads=4,
                                     **kw)
        assert serial.mean == threaded.mean
        assert serial.std_error == threaded.std_error

    def test_engines_agree_on_jumpy_schedule(self):
        params = two_asset_params(3.0, 0.2, 1.0, 1.0, 0.9, 4.0, (0.5, 3.0),
                                  1.0)
        d = derive(params)
        path = principal_solution(params, d, GridSpec(steps=512))
        schedule = draw_jumps(params.theta, 0.0, 1.0, [4, 2])
        assert len(schedule.events) >= 1
        traj = simulate(path, params, [1.0, 1.0], 0.0, schedule)

        from darkliq.simulate import _run_path
        prop = build_propagator(path, params, 0.0, n_nodes=4096)
        cost, x_end = _run_path(prop, schedule, np.array([1.0, 1.0]))
        assert cost == pytest.approx(traj.cost_impact + traj.cost_risk,
                                     rel=1e-6)

    def test_perturbed_strategy_costs_more(self, ref_single_path):
        params, d, path = ref_single_path
        kw = dict(n_paths=2000, base_seed=13, n_nodes=2048)
        base = monte_carlo_value(path, params, [1.0], 0.0, **kw)
        worse = monte_carlo_value(
            path, params, [1.0], 0.0,
            perturbation=Perturbation(tag="overtrade", xi_scale=1.5), **kw)
        pooled = math.hypot(base.std_error, worse.std_error)
        assert worse.mean - base.mean >= -3.0 * pooled
        assert worse.perturbation == "overtrade"


class TestPrincipalSliverAccounting:
    def test_degenerate_remainder_vanishes(self):
        params = MarketParams(n=1, lambda_=[[1.0]], sigma=[[0.0]], alpha=0.0,
                              theta=[0.0], horizon_T=1.0)
        d = derive(params)
        path = principal_solution(params, d, GridSpec(steps=512))
        est = monte_carlo_value(path, params, [1.0], 0.0, n_paths=10,
                                base_seed=0, n_nodes=2048)
        # p = q in the rational case: the sliver is accounted exactly
        assert est.remainder == pytest.approx(0.0, abs=1e-12)
        assert est.mean == pytest.approx(1.0, rel=1e-6)
        assert est.analytic_value == pytest.approx(
            evaluate_C(path, 0.0)[0, 0])
