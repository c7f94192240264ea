import numpy as np
import pytest

from mobrelay.scenario import ScenarioConfig


def make_vii_config(horizon=100.0, power_w=0.01, **kw):
    """The default evaluation scenario: 2 km hop, 100 m altitude, 50 m/s."""
    defaults = dict(distance=2000.0, altitude=100.0, max_speed=50.0,
                    reference_snr=1e8, avg_power_source=power_w,
                    avg_power_relay=power_w)
    defaults.update(kw)
    return ScenarioConfig.from_horizon(horizon=horizon, slot_length=1.0, **defaults)


@pytest.fixture
def vii_cfg():
    return make_vii_config()


def random_feasible_trajectory(cfg, rng):
    """Random walk honoring the per-slot displacement limit (no endpoints)."""
    n = cfg.slot_count
    v = cfg.step_limit
    x = np.empty(n)
    y = np.empty(n)
    x[0] = rng.uniform(0.0, cfg.distance)
    y[0] = rng.uniform(-500.0, 500.0)
    ang = rng.uniform(0, 2 * np.pi, n - 1)
    step = rng.uniform(0, v, n - 1)
    x[1:] = x[0] + np.cumsum(step * np.cos(ang))
    y[1:] = y[0] + np.cumsum(step * np.sin(ang))
    from mobrelay.scenario import Trajectory
    return Trajectory(x=x, y=y)
