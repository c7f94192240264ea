"""Physical model of the relay link: geometry, channels, rates, feasibility.

Conventions used throughout the package:

* All quantities are SI (meters, seconds, watts); decibel values are converted
  at the configuration boundary only.
* A run is discretized into ``N`` slots of length ``slot_length``.  Per-slot
  arrays have length ``N``.  The source never transmits in the last slot and
  the relay never transmits in the first one, so ``p_s[-1] == 0`` and
  ``p_r[0] == 0`` structurally.
* Feasibility checks accept iterative-solver residue: the tolerance is
  ``1e-9 * max(1, scale)`` of the constrained quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, DomainError

FEAS_RTOL = 1e-9


def feasibility_tol(scale: float) -> float:
    """Absolute tolerance for feasibility checks at a given magnitude."""
    return FEAS_RTOL * max(1.0, abs(scale))


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and budget parameters for one relaying scenario.

    ``reference_snr`` is the received SNR per watt of transmit power at 1 m
    separation (linear, not dB).  ``avg_power_*`` are per-slot averages; the
    total energy budgets are ``slot_count * avg_power_*``.
    """

    distance: float
    altitude: float
    max_speed: float
    horizon: float
    slot_count: int
    reference_snr: float
    avg_power_source: float
    avg_power_relay: float
    noise_power: float = 1.0
    start_point: Optional[Tuple[float, float]] = None
    end_point: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.distance <= 0 or self.altitude <= 0 or self.max_speed <= 0:
            raise DomainError("distance, altitude and max_speed must be positive")
        if self.slot_count < 2:
            raise DomainError("at least two slots are required")
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")
        if self.reference_snr <= 0:
            raise DomainError("reference_snr must be positive")
        if self.avg_power_source < 0 or self.avg_power_relay < 0:
            raise DomainError("average power limits must be nonnegative")
        if self.noise_power <= 0:
            raise DomainError("noise_power must be positive")
        if self.start_point is not None and self.end_point is not None:
            d_min = math.hypot(self.end_point[0] - self.start_point[0],
                               self.end_point[1] - self.start_point[1])
            if self.max_speed * self.horizon < d_min * (1.0 - 1e-12):
                raise DomainError(
                    f"endpoints unreachable: need speed*horizon >= {d_min:.6g} m, "
                    f"got {self.max_speed * self.horizon:.6g} m")

    @property
    def slot_length(self) -> float:
        return self.horizon / self.slot_count

    @property
    def step_limit(self) -> float:
        """Maximum displacement per slot (max_speed * slot_length)."""
        return self.max_speed * self.slot_length

    @property
    def energy_source(self) -> float:
        return self.slot_count * self.avg_power_source

    @property
    def energy_relay(self) -> float:
        return self.slot_count * self.avg_power_relay

    @classmethod
    def from_horizon(cls, *, horizon: float, slot_length: float = 1.0, **kw) -> "ScenarioConfig":
        """Build a config from a horizon, rounding to an integer slot count.

        The horizon is adjusted to ``N * slot_length`` so that the identity
        ``slot_length * slot_count == horizon`` holds exactly.
        """
        n = max(2, round(horizon / slot_length))
        return cls(horizon=n * slot_length, slot_count=n, **kw)

    def with_horizon(self, horizon: float) -> "ScenarioConfig":
        """Same scenario with a new horizon at the current slot length."""
        slot_length = self.slot_length
        n = max(2, round(horizon / slot_length))
        return replace(self, horizon=n * slot_length, slot_count=n)


@dataclass(frozen=True)
class Trajectory:
    """Per-slot relay x/y coordinates (altitude is fixed in the config)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        object.__setattr__(self, "y", _readonly(self.y))
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise DimensionError("x and y must be 1-d arrays of equal length")

    def __len__(self):
        return self.x.shape[0]

    @property
    def speeds(self) -> np.ndarray:
        """Per-slot displacement magnitudes (length N-1)."""
        return np.hypot(np.diff(self.x), np.diff(self.y))


@dataclass(frozen=True)
class ChannelProfile:
    """Per-slot channel-to-noise power ratios for the two hops (per watt)."""

    gamma_sr: np.ndarray
    gamma_rd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma_sr", _readonly(self.gamma_sr))
        object.__setattr__(self, "gamma_rd", _readonly(self.gamma_rd))
        if self.gamma_sr.shape != self.gamma_rd.shape:
            raise DimensionError("channel arrays must have equal length")
        if np.any(self.gamma_sr <= 0) or np.any(self.gamma_rd <= 0):
            raise DomainError("channel ratios must be strictly positive")

    def __len__(self):
        return self.gamma_sr.shape[0]


@dataclass(frozen=True)
class PowerSchedule:
    """Per-slot transmit powers and the rates they induce."""

    p_s: np.ndarray
    p_r: np.ndarray
    r_s: np.ndarray
    r_r: np.ndarray

    def __post_init__(self):
        for name in ("p_s", "p_r", "r_s", "r_r"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = self.p_s.shape[0]
        if any(getattr(self, name).shape[0] != n for name in ("p_r", "r_s", "r_r")):
            raise DimensionError("schedule arrays must have equal length")

    def __len__(self):
        return self.p_s.shape[0]

    @classmethod
    def from_powers(cls, p_s, p_r, channels: ChannelProfile) -> "PowerSchedule":
        """Build a schedule from powers, deriving rates from the channels.

        Enforces the structural zeros (silent last source slot, silent first
        relay slot) and rejects negative powers.
        """
        p_s = np.array(p_s, dtype=np.float64)
        p_r = np.array(p_r, dtype=np.float64)
        n = len(channels)
        if p_s.shape[0] != n or p_r.shape[0] != n:
            raise DimensionError("power arrays must match the channel length")
        if np.any(p_s < 0) or np.any(p_r < 0):
            raise DomainError("powers must be nonnegative")
        p_s[-1] = 0.0
        p_r[0] = 0.0
        r_s = np.log2(1.0 + p_s * channels.gamma_sr)
        r_r = np.log2(1.0 + p_r * channels.gamma_rd)
        return cls(p_s=p_s, p_r=p_r, r_s=r_s, r_r=r_r)


class MobilityViolation(NamedTuple):
    kind: str        # "start", "step" or "end"
    slot: int        # 1-based slot index (first slot of the step for "step")
    distance: float
    limit: float


def channel_profile(traj: Trajectory, cfg: ScenarioConfig) -> ChannelProfile:
    """Channel-to-noise ratios induced by a trajectory.

    ``gamma_sr[n] = reference_snr / (H^2 + x^2 + y^2)`` and the mirrored
    expression about the destination for ``gamma_rd``.
    """
    if len(traj) != cfg.slot_count:
        raise DimensionError(
            f"trajectory has {len(traj)} slots, config expects {cfg.slot_count}")
    h2 = cfg.altitude ** 2
    g0 = cfg.reference_snr
    gamma_sr = g0 / (h2 + traj.x ** 2 + traj.y ** 2)
    gamma_rd = g0 / (h2 + (cfg.distance - traj.x) ** 2 + traj.y ** 2)
    return ChannelProfile(gamma_sr=gamma_sr, gamma_rd=gamma_rd)


def link_rate(power, gain):
    """Spectral efficiency log2(1 + power * gain) in bits/s/Hz.

    Accepts scalars or arrays; powers must be nonnegative and gains positive.
    """
    power = np.asarray(power, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    if np.any(power < 0):
        raise DomainError("power must be nonnegative")
    if np.any(gain <= 0):
        raise DomainError("gain must be positive")
    out = np.log2(1.0 + power * gain)
    return float(out) if out.ndim == 0 else out


def check_mobility(traj: Trajectory, cfg: ScenarioConfig) -> list:
    """Report every slot whose displacement exceeds the per-slot limit.

    Includes endpoint-ball violations when the config pins endpoints.  An
    empty report means the trajectory is feasible.
    """
    if len(traj) != cfg.slot_count:
        raise DimensionError("trajectory/config slot mismatch")
    v = cfg.step_limit
    tol = feasibility_tol(v)
    report = []
    if cfg.start_point is not None:
        d = math.hypot(traj.x[0] - cfg.start_point[0], traj.y[0] - cfg.start_point[1])
        if d > v + tol:
            report.append(MobilityViolation("start", 1, d, v))
    steps = traj.speeds
    for i in np.nonzero(steps > v + tol)[0]:
        report.append(MobilityViolation("step", int(i) + 1, float(steps[i]), v))
    if cfg.end_point is not None:
        d = math.hypot(cfg.end_point[0] - traj.x[-1], cfg.end_point[1] - traj.y[-1])
        if d > v + tol:
            report.append(MobilityViolation("end", len(traj), d, v))
    return report


def check_causality(schedule: PowerSchedule) -> np.ndarray:
    """Per-slot buffer slack of the relay.

    ``slack[k]`` (for slot ``n = k + 2``) is the data received by the relay up
    to slot ``n-1`` minus the data it has forwarded up to slot ``n``.  The
    schedule is causality-feasible iff all slacks are >= -tol.
    """
    received = np.cumsum(schedule.r_s[:-1])
    forwarded = np.cumsum(schedule.r_r[1:])
    return received - forwarded


def causality_feasible(schedule: PowerSchedule) -> bool:
    slack = check_causality(schedule)
    if slack.size == 0:
        return True
    return float(slack.min()) >= -feasibility_tol(float(np.sum(schedule.r_s)))


def check_power_budget(schedule: PowerSchedule, cfg: ScenarioConfig) -> bool:
    """True iff both energy budgets hold (within tolerance) and powers are >= 0."""
    tol_s = feasibility_tol(cfg.energy_source)
    tol_r = feasibility_tol(cfg.energy_relay)
    return (
        float(schedule.p_s.sum()) <= cfg.energy_source + tol_s
        and float(schedule.p_r.sum()) <= cfg.energy_relay + tol_r
        and float(schedule.p_s.min(initial=0.0)) >= 0.0
        and float(schedule.p_r.min(initial=0.0)) >= 0.0
    )


def throughput(schedule: PowerSchedule) -> float:
    """End-to-end delivered data: the sum of relay rates, in bits/s/Hz x slots.

    The harness additionally reports the per-slot value (this sum divided by
    the slot count).
    """
    return float(np.sum(schedule.r_r[1:]))


# --- configuration file ingestion -------------------------------------------

_CONFIG_FIELDS = {
    "distance", "altitude", "max_speed", "horizon", "slot_count",
    "slot_length", "reference_snr", "avg_power_source", "avg_power_relay",
    "noise_power", "start_x", "start_y", "end_x", "end_y",
}


def _db_to_linear(v: float) -> float:
    return 10.0 ** (v / 10.0)


def dbm_to_watts(v: float) -> float:
    return 10.0 ** ((v - 30.0) / 10.0)


def parse_config_text(text: str) -> dict:
    """Parse the flat key-value scenario format into plain SI values.

    One ``key = value`` pair per line, ``#`` comments.  Keys may carry a
    ``_db`` or ``_dbm`` suffix to supply decibel values, converted here so the
    core only ever sees linear watts/ratios.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise DomainError(f"config line {lineno}: expected 'key = value'")
            key, val = parts
        key = key.strip().lower()
        try:
            num = float(val.strip())
        except ValueError as exc:
            raise DomainError(f"config line {lineno}: bad number {val!r}") from exc
        if key.endswith("_dbm"):
            key, num = key[:-4], dbm_to_watts(num)
        elif key.endswith("_db"):
            key, num = key[:-3], _db_to_linear(num)
        if key not in _CONFIG_FIELDS:
            raise DomainError(f"config line {lineno}: unknown key {key!r}")
        values[key] = num
    return values


def config_from_values(values: dict) -> ScenarioConfig:
    required = ("distance", "altitude", "max_speed", "horizon", "reference_snr",
                "avg_power_source", "avg_power_relay")
    missing = [k for k in required if k not in values]
    if missing:
        raise DomainError(f"config missing keys: {', '.join(missing)}")
    start = end = None
    if "start_x" in values or "start_y" in values:
        start = (values.get("start_x", 0.0), values.get("start_y", 0.0))
    if "end_x" in values or "end_y" in values:
        end = (values.get("end_x", 0.0), values.get("end_y", 0.0))
    kw = dict(
        distance=values["distance"],
        altitude=values["altitude"],
        max_speed=values["max_speed"],
        reference_snr=values["reference_snr"],
        avg_power_source=values["avg_power_source"],
        avg_power_relay=values["avg_power_relay"],
        noise_power=values.get("noise_power", 1.0),
        start_point=start,
        end_point=end,
    )
    if "slot_count" in values:
        return ScenarioConfig(horizon=values["horizon"],
                              slot_count=int(round(values["slot_count"])), **kw)
    return ScenarioConfig.from_horizon(
        horizon=values["horizon"], slot_length=values.get("slot_length", 1.0), **kw)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_values(parse_config_text(fh.read()))
