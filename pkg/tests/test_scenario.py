import math

import numpy as np
import pytest

from mobrelay.errors import DimensionError, DomainError
from mobrelay.scenario import (PowerSchedule, ScenarioConfig, Trajectory,
                               causality_feasible, channel_profile,
                               check_causality, check_mobility,
                               config_from_values, dbm_to_watts, link_rate,
                               parse_config_text, throughput)
from conftest import make_vii_config


def constant_trajectory(cfg, x, y=0.0):
    n = cfg.slot_count
    return Trajectory(x=np.full(n, float(x)), y=np.full(n, float(y)))


class TestChannelProfile:
    def test_above_source(self):
        cfg = make_vii_config()
        ch = channel_profile(constant_trajectory(cfg, 0.0), cfg)
        # 1e8 / (100^2 + 0 + 0)
        np.testing.assert_allclose(ch.gamma_sr, 1e4)

    def test_above_destination_symmetry(self):
        cfg = make_vii_config()
        ch = channel_profile(constant_trajectory(cfg, cfg.distance), cfg)
        np.testing.assert_allclose(ch.gamma_rd, cfg.reference_snr / cfg.altitude ** 2)
        ch0 = channel_profile(constant_trajectory(cfg, 0.0), cfg)
        np.testing.assert_allclose(ch.gamma_rd, ch0.gamma_sr)

    def test_midpoint(self):
        cfg = make_vii_config()
        ch = channel_profile(constant_trajectory(cfg, 1000.0), cfg)
        expected = 1e8 / (100.0 ** 2 + 1000.0 ** 2)  # independent distance calc
        np.testing.assert_allclose(ch.gamma_sr, expected)
        np.testing.assert_allclose(ch.gamma_rd, expected)
        assert abs(expected - 99.0099) < 1e-3

    def test_mirror_symmetry_in_y(self):
        cfg = make_vii_config()
        rng = np.random.default_rng(1)
        x = rng.uniform(0, cfg.distance, cfg.slot_count)
        y = rng.uniform(-400, 400, cfg.slot_count)
        up = channel_profile(Trajectory(x=x, y=y), cfg)
        down = channel_profile(Trajectory(x=x, y=-y), cfg)
        np.testing.assert_array_equal(up.gamma_sr, down.gamma_sr)
        np.testing.assert_array_equal(up.gamma_rd, down.gamma_rd)

    def test_monotone_in_distance(self):
        cfg = make_vii_config()
        x = np.linspace(0, cfg.distance, cfg.slot_count)
        ch = channel_profile(Trajectory(x=x, y=np.zeros_like(x)), cfg)
        assert (np.diff(ch.gamma_sr) < 0).all()
        assert (np.diff(ch.gamma_rd) > 0).all()

    def test_length_mismatch(self):
        cfg = make_vii_config()
        with pytest.raises(DimensionError):
            channel_profile(Trajectory(x=np.zeros(3), y=np.zeros(3)), cfg)


class TestLinkRate:
    def test_zero_power(self):
        assert link_rate(0.0, 123.4) == 0.0

    def test_log2_of_four(self):
        assert link_rate(3.0, 1.0) == pytest.approx(2.0, abs=1e-15)

    def test_static_midpoint_rate(self):
        assert link_rate(0.01, 99.0099) == pytest.approx(math.log2(1.990099), rel=1e-12)
        assert link_rate(0.01, 99.0099) == pytest.approx(0.99284, abs=5e-6)

    def test_negative_power_rejected(self):
        with pytest.raises(DomainError):
            link_rate(-1e-9, 1.0)

    def test_concave_increasing_in_power(self):
        gain = 37.5
        p = np.linspace(0, 2, 201)
        r = link_rate(p, gain)
        assert (np.diff(r) > 0).all()
        second = np.diff(r, 2)
        assert (second <= 1e-12).all()


class TestMobility:
    def test_stationary_feasible(self):
        cfg = make_vii_config()
        assert check_mobility(constant_trajectory(cfg, 500.0), cfg) == []

    def test_single_violation_reported(self):
        cfg = make_vii_config(horizon=5)
        v = cfg.step_limit
        x = np.array([0.0, 2 * v, 2 * v, 2 * v, 2 * v])
        report = check_mobility(Trajectory(x=x, y=np.zeros(5)), cfg)
        assert len(report) == 1
        assert report[0].kind == "step" and report[0].slot == 1

    def test_uniform_line_between_endpoints(self):
        cfg = make_vii_config(start_point=(1000.0, 500.0), end_point=(1500.0, 500.0))
        n = cfg.slot_count
        traj = Trajectory(x=np.linspace(1000, 1500, n), y=np.full(n, 500.0))
        assert check_mobility(traj, cfg) == []

    def test_endpoint_violations(self):
        cfg = make_vii_config(start_point=(0.0, 0.0), end_point=(2000.0, 0.0))
        traj = constant_trajectory(cfg, 1000.0)
        kinds = {r.kind for r in check_mobility(traj, cfg)}
        assert kinds == {"start", "end"}


class TestCausality:
    def _schedule(self, r_s, r_r):
        # unit gains on both hops turn rates into powers exactly: p = 2^r - 1
        from mobrelay.scenario import ChannelProfile
        n = len(r_s)
        ch_ones = ChannelProfile(gamma_sr=np.ones(n), gamma_rd=np.ones(n))
        p_s = np.exp2(np.asarray(r_s, float)) - 1.0
        p_r = np.exp2(np.asarray(r_r, float)) - 1.0
        return PowerSchedule.from_powers(p_s, p_r, ch_ones)

    def test_silent_relay_always_feasible(self):
        s = self._schedule([1.0, 2.0, 0.0], [0.0, 0.0, 0.0])
        assert (check_causality(s) >= 0).all()
        assert causality_feasible(s)

    def test_tight_forwarding(self):
        s = self._schedule([1.0, 1.0, 0.0], [0.0, 1.0, 1.0])
        np.testing.assert_allclose(check_causality(s), [0.0, 0.0], atol=1e-12)
        assert causality_feasible(s)

    def test_relay_before_receiving(self):
        s = self._schedule([0.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        slack = check_causality(s)
        assert slack[0] < 0
        assert not causality_feasible(s)

    def test_throughput_sum(self):
        s = self._schedule([5.0, 0.0, 0.0], [0.0, 2.0, 3.0])
        assert throughput(s) == pytest.approx(5.0, abs=1e-12)

    def test_feasible_schedule_delivers_at_most_sent(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            r_s = rng.uniform(0, 2, n)
            r_s[-1] = 0.0
            r_r = rng.uniform(0, 2, n)
            r_r[0] = 0.0
            s = self._schedule(r_s, r_r)
            if causality_feasible(s):
                assert throughput(s) <= s.r_s.sum() + 1e-9


class TestConfig:
    def test_invariants_enforced(self):
        with pytest.raises(DomainError):
            make_vii_config(distance=-1.0)
        with pytest.raises(DomainError):
            ScenarioConfig(distance=2000, altitude=100, max_speed=50, horizon=1.0,
                           slot_count=1, reference_snr=1e8, avg_power_source=0.01,
                           avg_power_relay=0.01)
        with pytest.raises(DomainError):
            # endpoints further apart than the relay can fly
            make_vii_config(horizon=5, start_point=(0.0, 0.0), end_point=(2000.0, 0.0))

    def test_slot_identity(self):
        cfg = ScenarioConfig.from_horizon(horizon=99.7, slot_length=1.0,
                                          distance=2000, altitude=100, max_speed=50,
                                          reference_snr=1e8, avg_power_source=0.01,
                                          avg_power_relay=0.01)
        assert cfg.slot_count == 100
        assert cfg.slot_length * cfg.slot_count == cfg.horizon

    def test_energy_budgets(self):
        cfg = make_vii_config()
        assert cfg.energy_source == pytest.approx(1.0)
        assert cfg.energy_relay == pytest.approx(1.0)

    def test_parse_config_with_db_suffixes(self):
        text = """
        # scenario
        distance = 2000
        altitude = 100
        max_speed = 50
        horizon = 100
        reference_snr_db = 80
        avg_power_source_dbm = 10
        avg_power_relay_dbm = 10
        """
        cfg = config_from_values(parse_config_text(text))
        assert cfg.reference_snr == pytest.approx(1e8)
        assert cfg.avg_power_source == pytest.approx(0.01)
        assert cfg.start_point is None

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(DomainError):
            parse_config_text("voltage = 3")

    def test_dbm_conversion(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(10.0) == pytest.approx(0.01)

    def test_endpoints_from_config(self):
        text = ("distance = 2000\naltitude = 100\nmax_speed = 50\nhorizon = 100\n"
                "reference_snr_db = 80\navg_power_source = 0.01\n"
                "avg_power_relay = 0.01\nstart_x = 1000\nstart_y = 500\n"
                "end_x = 1500\nend_y = 500\n")
        cfg = config_from_values(parse_config_text(text))
        assert cfg.start_point == (1000.0, 500.0)
        assert cfg.end_point == (1500.0, 500.0)


class TestStructuralZeros:
    def test_from_powers_silences_edges(self):
        cfg = make_vii_config(horizon=5)
        ch = channel_profile(constant_trajectory(cfg, 1000.0), cfg)
        s = PowerSchedule.from_powers(np.ones(5), np.ones(5), ch)
        assert s.p_s[-1] == 0.0 and s.r_s[-1] == 0.0
        assert s.p_r[0] == 0.0 and s.r_r[0] == 0.0
