import math

import numpy as np
import pytest

from mobrelay import power_opt
from mobrelay.errors import (CaseInconsistency, InvalidDualState,
                             PreconditionError)
from mobrelay.power_opt import (CASE_BALANCED, CASE_RELAY_BOTTLENECK,
                                CASE_SOURCE_BOTTLENECK, DualState,
                                dual_value_and_subgradient,
                                min_power_source_schedule, optimal_power,
                                recover_primal, relay_schedule_given_source,
                                solve_direct, solve_dual, solve_monotone)
from mobrelay.scenario import (ChannelProfile, Trajectory, causality_feasible,
                               channel_profile, check_causality,
                               check_power_budget, throughput)
from mobrelay.waterfill import classic_wf, cwf_rate, weighted_wf
from conftest import make_vii_config, random_feasible_trajectory


def random_channels(n, rng, span=2000.0, alt2=1e4, snr=1e8):
    x = rng.uniform(0, span, n)
    y = rng.uniform(-500, 500, n)
    return ChannelProfile(gamma_sr=snr / (alt2 + x ** 2 + y ** 2),
                          gamma_rd=snr / (alt2 + (span - x) ** 2 + y ** 2))


class TestDualState:
    def test_zero_multipliers(self):
        d = DualState.from_multipliers(np.zeros(4))
        np.testing.assert_array_equal(d.source_weights, 0.0)
        np.testing.assert_array_equal(d.relay_weights, 1.0)

    def test_unit_final_multiplier(self):
        lam = np.zeros(4)
        lam[-1] = 1.0
        d = DualState.from_multipliers(lam)
        np.testing.assert_array_equal(d.source_weights, 1.0)
        np.testing.assert_array_equal(d.relay_weights, 0.0)

    def test_weight_monotonicity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            lam = rng.uniform(0, 1, 6)
            lam = lam / max(lam.sum(), 1.0)
            d = DualState.from_multipliers(lam)
            assert (np.diff(d.source_weights) <= 0).all()
            assert (np.diff(d.relay_weights) >= 0).all()


class TestDualEvaluation:
    def test_half_multiplier_example(self):
        # N=3: source gains [4, 1], relay gains [1, 4], lam = (0, 0.5)
        ch = ChannelProfile(gamma_sr=np.array([4.0, 1.0, 1.0]),
                            gamma_rd=np.array([1.0, 1.0, 4.0]))
        dual = DualState.from_multipliers(np.array([0.0, 0.5]))
        np.testing.assert_allclose(dual.source_weights, [0.5, 0.5])
        np.testing.assert_allclose(dual.relay_weights, [0.5, 0.5])
        budgets = (1.0, 1.0)
        ev = dual_value_and_subgradient(dual, ch, budgets)
        # direct Lagrangian evaluation with the weighted-WF maximizers
        ws = weighted_wf(np.array([4.0, 1.0]), np.array([0.5, 0.5]), 1.0)
        wr = weighted_wf(np.array([1.0, 4.0]), np.array([0.5, 0.5]), 1.0)
        expected = 0.5 * np.log2(1 + ws.powers * np.array([4.0, 1.0])).sum() \
            + 0.5 * np.log2(1 + wr.powers * np.array([1.0, 4.0])).sum()
        assert ev.value == pytest.approx(expected, rel=1e-12)

    def test_subgradient_is_buffer_slack(self):
        rng = np.random.default_rng(1)
        ch = random_channels(6, rng)
        dual = DualState.from_multipliers(np.full(5, 0.1))
        ev = dual_value_and_subgradient(dual, ch, (0.06, 0.06))
        r_s = np.log2(1 + ev.source_powers * ch.gamma_sr[:-1])
        expected = np.cumsum(r_s) - np.cumsum(ev.relay_rates)
        np.testing.assert_allclose(ev.subgradient, expected, atol=1e-12)

    def test_lagrangian_identity(self):
        # g(lam) = sum(relay rates) + lam . subgradient
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(3, 9))
            ch = random_channels(n, rng)
            lam = rng.uniform(0, 1, n - 1)
            lam /= max(1.0, lam.sum() * 1.01)
            ev = dual_value_and_subgradient(DualState.from_multipliers(lam),
                                            ch, (0.01 * n, 0.01 * n))
            lhs = ev.value
            rhs = ev.relay_rates.sum() + lam @ ev.subgradient
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)

    def test_negative_relay_weight_rejected(self):
        ch = random_channels(4, np.random.default_rng(3))
        bad = DualState.from_multipliers(np.array([0.5, 0.4, 0.4]))
        with pytest.raises(InvalidDualState):
            dual_value_and_subgradient(bad, ch, (1.0, 1.0))

    def test_weak_duality(self):
        # every dual value dominates every feasible primal value
        rng = np.random.default_rng(4)
        ch = random_channels(7, rng)
        budgets = (0.07, 0.07)
        ref = solve_direct(ch, budgets, rtol=1e-8)
        for _ in range(30):
            lam = rng.uniform(0, 1, 6)
            lam /= max(1.0, lam.sum() * 1.001)
            ev = dual_value_and_subgradient(DualState.from_multipliers(lam),
                                            ch, budgets)
            assert ev.value >= ref.objective - 1e-7


class TestSolveDual:
    def test_source_bottleneck_balances_totals(self):
        # overwhelmingly strong relay link: the source side limits throughput
        rng = np.random.default_rng(5)
        n = 8
        x = rng.uniform(0, 500, n)
        ch = ChannelProfile(gamma_sr=1e8 / (1e4 + x ** 2),
                            gamma_rd=1e4 * np.ones(n))
        budgets = (0.01 * n, 10.0 * n)
        dual, diag = solve_dual(ch, budgets, gap_tol=1e-7)
        sol = recover_primal(dual, ch, budgets)
        assert sol.case_tag == CASE_SOURCE_BOTTLENECK
        assert sol.schedule.r_r.sum() == pytest.approx(sol.schedule.r_s.sum(),
                                                       rel=1e-5)

    def test_relay_bottleneck_uses_full_relay_budget(self):
        rng = np.random.default_rng(6)
        n = 8
        x = rng.uniform(1500, 2000, n)
        ch = ChannelProfile(gamma_sr=1e6 * np.ones(n),
                            gamma_rd=1e8 / (1e4 + (2000 - x) ** 2))
        budgets = (10.0 * n, 0.01 * n)
        dual, diag = solve_dual(ch, budgets, gap_tol=1e-7)
        sol = recover_primal(dual, ch, budgets)
        assert sol.case_tag == CASE_RELAY_BOTTLENECK
        wf = classic_wf(ch.gamma_rd[1:], budgets[1])
        np.testing.assert_allclose(sol.schedule.p_r[1:], wf.powers, rtol=1e-6,
                                   atol=1e-9)

    def test_two_slot_symmetric_instance(self):
        # single multiplier; optimum is the smaller single-link capacity
        ch = ChannelProfile(gamma_sr=np.array([40.0, 1.0]),
                            gamma_rd=np.array([1.0, 25.0]))
        budgets = (0.5, 0.5)
        dual, diag = solve_dual(ch, budgets, gap_tol=1e-8)
        cap_s = math.log2(1 + 40.0 * 0.5)
        cap_r = math.log2(1 + 25.0 * 0.5)
        sol = recover_primal(dual, ch, budgets)
        assert max(sol.objective, diag.candidate_value) == pytest.approx(
            min(cap_s, cap_r), rel=1e-6)


class TestRecovery:
    def test_balanced_case_has_monotone_levels(self):
        rng = np.random.default_rng(7)
        found = 0
        for _ in range(12):
            n = int(rng.integers(4, 10))
            ch = random_channels(n, rng)
            budgets = (0.01 * n, 0.01 * n)
            dual, _ = solve_dual(ch, budgets, gap_tol=1e-6)
            sol = recover_primal(dual, ch, budgets)
            if sol.case_tag == CASE_BALANCED:
                found += 1
                assert (np.diff(sol.source_levels) <= 1e-9).all()
                assert (np.diff(sol.relay_levels) >= -1e-9).all()
        assert found >= 3  # the sampler produces plenty of balanced instances

    def test_recovered_schedules_always_feasible(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(3, 12))
            ch = random_channels(n, rng)
            budgets = (0.01 * n, 0.01 * n)
            dual, _ = solve_dual(ch, budgets, gap_tol=1e-6)
            sol = recover_primal(dual, ch, budgets)
            assert causality_feasible(sol.schedule)
            assert sol.schedule.p_s.sum() <= budgets[0] * (1 + 1e-9)
            assert sol.schedule.p_r.sum() <= budgets[1] * (1 + 1e-9)

    def test_matches_interior_point_reference(self):
        rng = np.random.default_rng(9)
        for _ in range(8):
            n = int(rng.integers(4, 14))
            ch = random_channels(n, rng)
            budgets = (0.01 * n, 0.01 * n)
            ref = solve_direct(ch, budgets, rtol=1e-8)
            dual, diag = solve_dual(ch, budgets, gap_tol=1e-6)
            sol = recover_primal(dual, ch, budgets)
            best = max(sol.objective, diag.candidate_value)
            assert best == pytest.approx(ref.objective, rel=1e-4)


class TestReducedSchedulers:
    def test_relay_given_source_zero_input(self):
        p_r, r_r = relay_schedule_given_source(np.zeros(4), np.full(4, 2.0), 1.0)
        np.testing.assert_array_equal(p_r, 0.0)
        np.testing.assert_array_equal(r_r, 0.0)

    def test_relay_given_source_monotone_matches_closed_form(self):
        # degrading source / improving relay: reduces to classic WF at the
        # budget that balances the totals
        from mobrelay.waterfill import inverse_cwf
        r_s = np.array([2.0, 1.5, 1.0, 0.5])
        g_rd = np.array([0.5, 1.0, 2.0, 4.0])
        e_r = 6.0
        p_r, r_r = relay_schedule_given_source(r_s, g_rd, e_r)
        target = min(r_s.sum(), cwf_rate(g_rd, e_r))
        e_hat = inverse_cwf(g_rd, target)
        wf = classic_wf(g_rd, e_hat)
        np.testing.assert_allclose(r_r.sum(), target, rtol=1e-7)
        np.testing.assert_allclose(p_r, wf.powers, rtol=1e-5, atol=1e-8)

    def test_relay_given_source_grid_oracle(self):
        r_s = np.array([1.0, 1.0, 0.0])
        g_rd = np.array([0.8, 1.0, 1.0])
        e_r = 6.0
        p_r, r_r = relay_schedule_given_source(r_s, g_rd, e_r)
        # brute force over relay powers on a grid
        grid = np.linspace(0, e_r, 121)
        best = 0.0
        cum = np.cumsum(r_s)
        for p1 in grid:
            for p2 in grid:
                for p3 in grid:
                    if p1 + p2 + p3 > e_r:
                        continue
                    caps = np.log2(1 + np.array([p1, p2, p3]) * g_rd)
                    tot = 0.0
                    sent = 0.0
                    for k in range(3):
                        r = min(caps[k], cum[k] - sent)
                        sent += r
                        tot += r
                    best = max(best, tot)
        assert r_r.sum() >= best - 1e-6
        assert r_r.sum() <= min(cum[-1], cwf_rate(g_rd, e_r)) + 1e-9

    def test_min_power_zero_targets(self):
        p = min_power_source_schedule(np.zeros(3), np.ones(3))
        np.testing.assert_array_equal(p, 0.0)

    def test_min_power_single_slot_inversion(self):
        # N=2: one source slot must carry the single relay rate
        gamma = np.array([5.0])
        r_r = np.array([1.7])
        p = min_power_source_schedule(r_r, gamma)
        assert p[0] == pytest.approx((2 ** 1.7 - 1) / 5.0, rel=1e-6)

    def test_min_power_even_split_is_optimal(self):
        # equal gains, single cumulative target at the end: convexity of
        # 2^r makes the even rate split cheapest
        gamma = np.full(3, 2.0)
        r_r = np.array([0.0, 0.0, 3.0])
        p = min_power_source_schedule(r_r, gamma)
        even = (2.0 ** 1.0 - 1.0) / 2.0
        np.testing.assert_allclose(p, even, rtol=1e-4)
        # grid oracle over two free rates
        r1 = np.linspace(0, 3, 301)
        best = math.inf
        for a in r1:
            for b in r1:
                c = 3.0 - a - b
                if c < -1e-12:
                    continue
                cost = ((2 ** a - 1) + (2 ** b - 1) + (2 ** max(c, 0) - 1)) / 2.0
                best = min(best, cost)
        assert p.sum() == pytest.approx(best, rel=1e-3)

    def test_min_power_budget_guard(self):
        with pytest.raises(CaseInconsistency):
            min_power_source_schedule(np.array([0.0, 20.0]), np.ones(2),
                                      budget=1e-6)


class TestMonotoneClosedForm:
    def test_symmetric_tie(self):
        ch = ChannelProfile(gamma_sr=np.array([4.0, 1.0, 1.0]),
                            gamma_rd=np.array([1.0, 1.0, 4.0]))
        budgets = (1.0, 1.0)
        sol = solve_monotone(ch, budgets)
        expected = cwf_rate(np.array([4.0, 1.0]), 1.0)
        assert sol.objective == pytest.approx(expected, rel=1e-9)
        assert sol.objective == pytest.approx(2.33985, abs=1e-5)
        ref = solve_direct(ch, budgets, rtol=1e-9)
        assert sol.objective == pytest.approx(ref.objective, rel=1e-6)

    def test_constant_channels(self):
        ch = ChannelProfile(gamma_sr=np.full(5, 99.0), gamma_rd=np.full(5, 99.0))
        sol = solve_monotone(ch, (0.05, 0.05))
        caps = cwf_rate(np.full(4, 99.0), 0.05)
        assert sol.objective == pytest.approx(caps, rel=1e-9)

    def test_relay_cap_binding_reduces_source_budget(self):
        ch = ChannelProfile(gamma_sr=np.array([100.0, 50.0, 10.0]),
                            gamma_rd=np.array([0.1, 0.2, 0.3]))
        budgets = (1.0, 1.0)
        sol = solve_monotone(ch, budgets)
        cap_r = cwf_rate(ch.gamma_rd[1:], 1.0)
        assert sol.objective == pytest.approx(cap_r, rel=1e-9)
        assert sol.schedule.p_r.sum() == pytest.approx(1.0, rel=1e-9)
        assert sol.schedule.p_s.sum() < 1.0  # source throttled to balance
        assert causality_feasible(sol.schedule)

    def test_precondition_enforced(self):
        ch = ChannelProfile(gamma_sr=np.array([1.0, 5.0, 1.0]),
                            gamma_rd=np.array([1.0, 1.0, 2.0]))
        with pytest.raises(PreconditionError):
            solve_monotone(ch, (1.0, 1.0))


class TestOptimalPower:
    def test_forward_pass_uses_constant_levels(self):
        cfg = make_vii_config()
        n = cfg.slot_count
        x = np.minimum(np.arange(n) * cfg.step_limit, cfg.distance)
        sol = optimal_power(Trajectory(x=x, y=np.zeros(n)), cfg)
        assert sol.case_tag.startswith("monotone-closed-form")
        # classic WF: active slots share one level per hop
        s = sol.schedule
        lvl_s = s.p_s[:-1] + 1.0 / channel_profile(
            Trajectory(x=x, y=np.zeros(n)), cfg).gamma_sr[:-1]
        active = s.p_s[:-1] > 1e-12
        assert lvl_s[active].ptp() <= 1e-6 * lvl_s[active].mean()

    def test_reverse_pass_has_staircase_levels_and_tight_buffer(self):
        cfg = make_vii_config(horizon=40)
        n = cfg.slot_count
        x = np.maximum(cfg.distance - np.arange(n) * cfg.step_limit, 0.0)
        traj = Trajectory(x=x, y=np.zeros(n))
        sol = optimal_power(traj, cfg, gap_tol=1e-7, loc_tol=1e-6)
        assert sol.case_tag == CASE_BALANCED
        assert (np.diff(sol.source_levels) <= 1e-9).all()
        assert (np.diff(sol.relay_levels) >= -1e-9).all()
        # buffer empties every slot: slack is tiny relative to the traffic
        slack = check_causality(sol.schedule)
        assert slack.max() <= 1e-3 * sol.schedule.r_s.sum()

    def test_cyclic_pass_levels_constant_then_diverging(self):
        cfg = make_vii_config(horizon=80)
        n = cfg.slot_count
        v = cfg.step_limit
        lo, hi = cfg.distance / 4, 3 * cfg.distance / 4
        span = hi - lo
        phase = np.mod(np.arange(n) * v, 2 * span)
        tri = np.where(phase <= span, phase, 2 * span - phase)
        traj = Trajectory(x=lo + tri, y=np.zeros(n))
        sol = optimal_power(traj, cfg, gap_tol=1e-7, loc_tol=1e-6)
        assert sol.case_tag == CASE_BALANCED
        lvl_s, lvl_r = sol.source_levels, sol.relay_levels
        # constant prefix, then strict divergence
        k = max(2, n // 8)
        assert lvl_s[:k].ptp() <= 1e-3 * lvl_s[0]
        assert lvl_r[:k].ptp() <= 1e-3 * lvl_r[0]
        assert lvl_s[-1] < lvl_s[0] * 0.99
        assert lvl_r[-1] > lvl_r[0] * 1.01

    def test_lemma_style_interior_multipliers_vanish_on_monotone(self):
        rng = np.random.default_rng(10)
        for _ in range(4):
            n = int(rng.integers(5, 12))
            x = np.sort(rng.uniform(0, 2000, n))
            ch = ChannelProfile(gamma_sr=1e8 / (1e4 + x ** 2),
                                gamma_rd=1e8 / (1e4 + (2000 - x) ** 2))
            budgets = (0.01 * n, 0.01 * n)
            dual, _ = solve_dual(ch, budgets, gap_tol=1e-8, loc_tol=1e-6)
            assert np.abs(dual.multipliers[:-1]).max(initial=0.0) <= 1e-5

    def test_objective_is_feasible_value(self):
        cfg = make_vii_config(horizon=20)
        rng = np.random.default_rng(11)
        traj = random_feasible_trajectory(cfg, rng)
        sol = optimal_power(traj, cfg)
        assert sol.objective == pytest.approx(throughput(sol.schedule), abs=1e-12)
        assert causality_feasible(sol.schedule)
        assert check_power_budget(sol.schedule, cfg)
