"""Jointly optimal solution when the relay's endpoints are free.

Without endpoint pins the optimal relay path stays on the source-destination
axis, moves only forward, and uses binary speeds (full speed in the interior,
hovering only above the endpoints).  That collapses the joint problem to a
one-parameter family per hovering pattern: start position for a
destination-side hover, final position for a source-side hover, and the
source-side hover length when there is time to hover at both ends.  Each
parameter is found by bisecting the (monotone) difference of the two
water-filling rate caps; the winner's powers follow the monotone closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .convex_core import bisect
from .errors import PreconditionError
from .power_opt import PowerSolution, solve_monotone
from .scenario import ScenarioConfig, Trajectory, channel_profile
from .waterfill import cwf_rate

HOVER_DESTINATION = "hover-destination"
HOVER_SOURCE = "hover-source"
HOVER_BOTH = "hover-both"


@dataclass
class FreeCandidate:
    tag: str
    parameter: float
    trajectory: Trajectory
    cap_source: float
    cap_relay: float

    @property
    def value(self) -> float:
        return min(self.cap_source, self.cap_relay)


@dataclass
class FreeEndpointSolution:
    trajectory: Trajectory
    powers: PowerSolution
    scenario_tag: str
    throughput: float
    cap_source: float = 0.0
    cap_relay: float = 0.0


def _axis_trajectory(x: np.ndarray) -> Trajectory:
    return Trajectory(x=x, y=np.zeros_like(x))


def caps_for_trajectory(x, cfg: ScenarioConfig) -> Tuple[float, float]:
    """Water-filling rate caps of the two hops along an on-axis forward path.

    The end-to-end throughput of such a path under optimal powers is the
    smaller of the two caps.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.diff(x) < -1e-9 * cfg.distance):
        raise PreconditionError("positions must be non-decreasing")
    if x.min() < -1e-9 or x.max() > cfg.distance * (1 + 1e-12):
        raise PreconditionError("positions must lie between the endpoints")
    channels = channel_profile(_axis_trajectory(x), cfg)
    cap_s = cwf_rate(channels.gamma_sr[:-1], cfg.energy_source)
    cap_r = cwf_rate(channels.gamma_rd[1:], cfg.energy_relay)
    return cap_s, cap_r


def _forward_positions(start: float, cfg: ScenarioConfig) -> np.ndarray:
    n = cfg.slot_count
    return np.clip(start + np.arange(n) * cfg.step_limit, 0.0, cfg.distance)


def _backward_positions(final: float, cfg: ScenarioConfig) -> np.ndarray:
    n = cfg.slot_count
    return np.clip(final - np.arange(n - 1, -1, -1) * cfg.step_limit,
                   0.0, cfg.distance)


def scenario_hover_at_destination(cfg: ScenarioConfig,
                                  pos_rtol: float = 1e-12) -> FreeCandidate:
    """Full speed from a start position, then hover above the destination.

    The source cap falls and the relay cap rises as the start moves right, so
    the max-min sits at their crossing (or at a boundary).
    """
    def gap(x1: float) -> float:
        cap_s, cap_r = caps_for_trajectory(_forward_positions(x1, cfg), cfg)
        return cap_s - cap_r

    root = bisect(gap, 0.0, cfg.distance, tol=pos_rtol * cfg.distance)
    x = _forward_positions(root.x, cfg)
    cap_s, cap_r = caps_for_trajectory(x, cfg)
    return FreeCandidate(HOVER_DESTINATION, root.x, _axis_trajectory(x),
                         cap_s, cap_r)


def scenario_hover_at_source(cfg: ScenarioConfig,
                             pos_rtol: float = 1e-12) -> FreeCandidate:
    """Hover above the source, then full speed to a final position (mirror
    of the destination-side scenario, parameterized by the final slot)."""
    def gap(xn: float) -> float:
        cap_s, cap_r = caps_for_trajectory(_backward_positions(xn, cfg), cfg)
        return cap_s - cap_r

    root = bisect(gap, 0.0, cfg.distance, tol=pos_rtol * cfg.distance)
    x = _backward_positions(root.x, cfg)
    cap_s, cap_r = caps_for_trajectory(x, cfg)
    return FreeCandidate(HOVER_SOURCE, root.x, _axis_trajectory(x), cap_s, cap_r)


def _hover_both_positions(n1: int, cfg: ScenarioConfig) -> np.ndarray:
    n = cfg.slot_count
    return np.clip((np.arange(n) - n1) * cfg.step_limit, 0.0, cfg.distance)


def scenario_hover_both(cfg: ScenarioConfig) -> Optional[FreeCandidate]:
    """Hover above the source, traverse at full speed, hover above the
    destination.

    Applicable only when a full traversal fits in the horizon.  The split is
    an integer, so the cap-difference sign change is bracketed by integer
    bisection and both bracketing splits are compared.
    """
    n = cfg.slot_count
    v = cfg.step_limit
    if n * v <= cfg.distance:
        return None
    n1_max = n - math.ceil(cfg.distance / v)
    if n1_max < 0:
        return None

    def caps_at(n1: int) -> Tuple[float, float]:
        return caps_for_trajectory(_hover_both_positions(n1, cfg), cfg)

    def gap(n1: int) -> float:
        cap_s, cap_r = caps_at(n1)
        return cap_s - cap_r

    lo, hi = 0, n1_max
    if gap(lo) >= 0.0:
        candidates = [lo]
    elif gap(hi) <= 0.0:
        candidates = [hi]
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if gap(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        candidates = [lo, hi]
    best = None
    for n1 in candidates:
        cap_s, cap_r = caps_at(n1)
        cand = FreeCandidate(HOVER_BOTH, float(n1),
                             _axis_trajectory(_hover_both_positions(n1, cfg)),
                             cap_s, cap_r)
        if best is None or cand.value > best.value:
            best = cand
    return best


def solve_free(cfg: ScenarioConfig) -> FreeEndpointSolution:
    """Best of the hovering patterns, with closed-form powers on the winner.

    Requires a config without endpoint pins.  Ties are broken in the order
    destination-hover, source-hover, both-hover.
    """
    if cfg.start_point is not None or cfg.end_point is not None:
        raise PreconditionError("free-endpoint solve requires unpinned endpoints")
    candidates = [scenario_hover_at_destination(cfg), scenario_hover_at_source(cfg)]
    both = scenario_hover_both(cfg)
    if both is not None:
        candidates.append(both)
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.value > best.value:
            best = cand
    channels = channel_profile(best.trajectory, cfg)
    powers = solve_monotone(channels, (cfg.energy_source, cfg.energy_relay))
    return FreeEndpointSolution(trajectory=best.trajectory, powers=powers,
                                scenario_tag=best.tag,
                                throughput=powers.objective,
                                cap_source=best.cap_source,
                                cap_relay=best.cap_relay)
