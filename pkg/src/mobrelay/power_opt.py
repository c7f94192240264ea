"""Optimal source/relay power allocation for a fixed trajectory.

The fixed-trajectory program decouples, via the partial Lagrangian of the
buffer-causality constraints, into two weighted water-filling problems tied
together by the multipliers.  The dual is minimized with the ellipsoid
method; the primal is then recovered per bottleneck case.  For trajectories
whose source channel degrades and relay channel improves over time, a closed
form built from classic water-filling applies instead.

Active-slot convention: the source transmits in slots ``1..N-1`` and the
relay in ``2..N``, so module-internal arrays have length ``M = N - 1``.  The
source array index ``j`` is slot ``j+1``; the relay index ``k`` is slot
``k+2``.  Full-length schedules carry the structural zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .convex_core import (LinearConstraint, LogSumConstraint, ellipsoid_minimize,
                          maximize_linear)
from .errors import CaseInconsistency, InvalidDualState
from .scenario import (ChannelProfile, PowerSchedule, ScenarioConfig, Trajectory,
                       channel_profile, feasibility_tol, throughput)
from .waterfill import classic_wf, cwf_rate, inverse_cwf, weighted_wf

CASE_BALANCED = "balanced"
CASE_SOURCE_BOTTLENECK = "source-bottleneck"
CASE_RELAY_BOTTLENECK = "relay-bottleneck"
CASE_MONOTONE = "monotone-closed-form"
CASE_REFERENCE = "interior-point"

_ACTIVE_POWER = 1e-15


@dataclass(frozen=True)
class DualState:
    """Multipliers of the per-slot buffer constraints and the induced weights.

    ``source_weights[j]`` is the suffix sum of the multipliers from slot
    ``j+2`` on (non-increasing); ``relay_weights[k]`` is one minus the suffix
    sum from slot ``k+2`` (non-decreasing, and nonnegative whenever the
    multipliers sum to at most one).
    """

    multipliers: np.ndarray
    source_weights: np.ndarray
    relay_weights: np.ndarray

    @classmethod
    def from_multipliers(cls, multipliers) -> "DualState":
        lam = np.asarray(multipliers, dtype=np.float64)
        suffix = np.cumsum(lam[::-1])[::-1]
        return cls(multipliers=lam, source_weights=suffix,
                   relay_weights=1.0 - suffix)

    @property
    def num_active_slots(self) -> int:
        return self.multipliers.shape[0]


@dataclass
class DualEval:
    """Lagrangian maximizers at a fixed dual point plus derived quantities."""

    value: float
    subgradient: np.ndarray
    source_powers: np.ndarray
    relay_powers: np.ndarray
    relay_rates: np.ndarray
    source_level: float
    relay_level: float
    candidate_rates: np.ndarray
    candidate_value: float


@dataclass
class PowerSolution:
    schedule: PowerSchedule
    dual: Optional[DualState]
    case_tag: str
    objective: float
    source_levels: Optional[np.ndarray] = None
    relay_levels: Optional[np.ndarray] = None
    solver_iterations: int = 0


@dataclass
class DualDiagnostics:
    dual_value: float
    candidate_value: float
    candidate_source_powers: np.ndarray
    candidate_relay_powers: np.ndarray
    iterations: int
    converged: bool


def _active_channels(channels: ChannelProfile) -> Tuple[np.ndarray, np.ndarray]:
    return channels.gamma_sr[:-1], channels.gamma_rd[1:]


def channels_monotone(channels: ChannelProfile, rtol: float = 1e-12) -> bool:
    """True if the source hop degrades and the relay hop improves over time.

    Non-strict with a small relative tolerance so that constant channels (a
    parked relay) qualify for the closed form.
    """
    gsr, grd = _active_channels(channels)
    tol_s = rtol * float(gsr.max())
    tol_r = rtol * float(grd.max())
    return bool(np.all(np.diff(gsr) <= tol_s) and np.all(np.diff(grd) >= -tol_r))


def dual_value_and_subgradient(dual: DualState, channels: ChannelProfile,
                               budgets: Tuple[float, float]) -> DualEval:
    """Evaluate the dual function at a multiplier vector.

    Both sides reduce to weighted water-filling; the subgradient entry for
    slot ``n`` is the buffer slack of the maximizers up to that slot.  A
    greedy causality-feasible filling of the relay's link caps yields a
    primal candidate whose value lower-bounds the optimum.
    """
    gsr, grd = _active_channels(channels)
    e_s, e_r = budgets
    beta = dual.source_weights
    nu = dual.relay_weights
    if float(nu.min()) < -1e-12:
        raise InvalidDualState("relay weights negative: dual function unbounded")
    nu = np.maximum(nu, 0.0)

    if e_s > 0 and np.any(beta > 0):
        wf_s = weighted_wf(gsr, beta, e_s)
        p_s, eta = wf_s.powers, wf_s.water_level
    else:
        p_s, eta = np.zeros_like(gsr), 0.0
    r_s = np.log2(1.0 + p_s * gsr)

    if e_r > 0 and np.any(nu > 0):
        wf_r = weighted_wf(grd, nu, e_r)
        p_r, xi = wf_r.powers, wf_r.water_level
    else:
        p_r, xi = np.zeros_like(grd), 0.0
    r_r = np.log2(1.0 + p_r * grd)

    value = float(beta @ r_s + nu @ r_r)
    cum_s = np.cumsum(r_s)
    subgrad = cum_s - np.cumsum(r_r)
    cand = _kernels.greedy_fill(r_r, cum_s)
    return DualEval(value=value, subgradient=subgrad, source_powers=p_s,
                    relay_powers=p_r, relay_rates=r_r, source_level=eta,
                    relay_level=xi, candidate_rates=cand,
                    candidate_value=float(cand.sum()))


def solve_dual(channels: ChannelProfile, budgets: Tuple[float, float],
               gap_tol: float = 1e-5, loc_tol: Optional[float] = None,
               max_iters: Optional[int] = None
               ) -> Tuple[DualState, DualDiagnostics]:
    """Minimize the dual over the multiplier simplex with the ellipsoid method.

    Stops when the best primal candidate certifies a relative duality gap
    below ``gap_tol``; with ``loc_tol`` set, additionally requires the
    ellipsoid to localize the optimal multipliers within that radius (used
    when the multipliers themselves, not just the value, must be accurate).
    """
    n = len(channels)
    d = n - 1
    if max_iters is None:
        max_iters = 500 * n * n
    center = np.full(d, 1.0 / (2 * d))
    radius = math.sqrt(n)

    best = {"cand": -math.inf, "p_s": None, "p_r": None}

    def oracle(lam):
        k = int(np.argmin(lam))
        if lam[k] < 0.0:
            cut = np.zeros(d)
            cut[k] = -1.0
            return -lam[k], cut, True
        total = float(lam.sum())
        if total > 1.0:
            return total - 1.0, np.ones(d), True
        ev = dual_value_and_subgradient(DualState.from_multipliers(lam),
                                        channels, budgets)
        if ev.candidate_value > best["cand"]:
            best["cand"] = ev.candidate_value
            best["p_s"] = ev.source_powers
            best["p_r"] = ev.relay_powers
        return ev.value, ev.subgradient, False

    def should_stop(_it, best_dual, state):
        if not math.isfinite(best_dual) or best["p_s"] is None:
            return False
        gap_ok = (best_dual - best["cand"]) <= gap_tol * max(1.0, abs(best["cand"]))
        if not gap_ok:
            return False
        if loc_tol is None:
            return True
        return math.sqrt(max(float(np.trace(state.shape_matrix)), 0.0)) <= loc_tol

    res = ellipsoid_minimize(oracle, center, radius, max_iters, tol=0.0,
                             should_stop=should_stop)
    lam = np.clip(res.point, 0.0, None)
    s = float(lam.sum())
    if s > 1.0:
        lam = lam / s
    diag = DualDiagnostics(dual_value=res.value, candidate_value=best["cand"],
                           candidate_source_powers=best["p_s"],
                           candidate_relay_powers=best["p_r"],
                           iterations=res.iterations, converged=res.converged)
    return DualState.from_multipliers(lam), diag


def _realized_levels(p, gains):
    return np.where(p > _ACTIVE_POWER, p + 1.0 / gains, np.nan)


def _assemble(p_s_act, p_r_act, channels) -> PowerSchedule:
    p_s = np.append(p_s_act, 0.0)
    p_r = np.concatenate(([0.0], p_r_act))
    return PowerSchedule.from_powers(p_s, p_r, channels)


def greedy_feasible_schedule(p_s_act, p_r_act, channels) -> PowerSchedule:
    """Feasible schedule from candidate powers: cap relay rates by the buffer
    and trim the relay power to the rate actually sent."""
    gsr, grd = _active_channels(channels)
    r_s = np.log2(1.0 + p_s_act * gsr)
    caps = np.log2(1.0 + p_r_act * grd)
    r_r = _kernels.greedy_fill(caps, np.cumsum(r_s))
    p_r = (np.exp2(r_r) - 1.0) / grd
    return _assemble(p_s_act, p_r, channels)


def relay_schedule_given_source(r_s, gamma_rd, e_r,
                                gap_rtol: float = 1e-9
                                ) -> Tuple[np.ndarray, np.ndarray]:
    """Best relay powers/rates forwarding a fixed source rate sequence.

    Maximizes the delivered total subject to the per-slot buffer state, the
    rate/power coupling and the relay energy budget; solved with the interior
    point core (the constraint set is convex in powers and rates jointly).
    """
    r_s = np.asarray(r_s, dtype=np.float64)
    gamma_rd = np.asarray(gamma_rd, dtype=np.float64)
    m = r_s.shape[0]
    cum = np.cumsum(r_s)
    if e_r <= 0.0 or cum[-1] <= 0.0:
        return np.zeros(m), np.zeros(m)

    # Relaxation route first: keeping only the total-traffic constraint, the
    # optimum is classic water-filling at the budget whose aggregate rate
    # matches min(total supply, full-budget cap).  When that allocation's
    # prefixes already respect the buffer (always true for a degrading source
    # and improving relay hop), it solves the full problem too.
    target = min(cum[-1], cwf_rate(gamma_rd, e_r))
    wf = classic_wf(gamma_rd, inverse_cwf(gamma_rd, target))
    r_wf = np.log2(1.0 + wf.powers * gamma_rd)
    if np.all(np.cumsum(r_wf) <= cum + 1e-12 * max(1.0, cum[-1])):
        return wf.powers.copy(), r_wf

    cons = []
    # prefix buffer constraints: sum of rates up to k cannot exceed cum[k]
    for k in range(m):
        a = np.zeros(2 * m)
        a[m:m + k + 1] = 1.0
        cons.append(LinearConstraint(a, cum[k]))
    # rate caps tied to powers
    for k in range(m):
        lin = np.zeros(2 * m)
        lin[m + k] = 1.0
        cons.append(LogSumConstraint(lin, 0.0, [k], [gamma_rd[k]], [1.0]))
    a_budget = np.zeros(2 * m)
    a_budget[:m] = 1.0
    cons.append(LinearConstraint(a_budget, e_r))
    for k in range(m):
        a = np.zeros(2 * m)
        a[k] = -1.0
        cons.append(LinearConstraint(a, 0.0))

    p0 = np.full(m, e_r / (2.0 * m))
    caps0 = np.log2(1.0 + p0 * gamma_rd)
    margin = 1e-6 * max(1.0, cum[-1]) / m
    r0 = _kernels.greedy_fill(0.9 * caps0, 0.9 * cum) - margin
    z0 = np.concatenate([p0, r0])

    c_obj = np.zeros(2 * m)
    c_obj[m:] = 1.0
    sol = maximize_linear(c_obj, cons, z0,
                          gap_tol=gap_rtol * max(1.0, cum[-1]))
    p_r = np.clip(sol.point[:m], 0.0, None)
    caps = np.log2(1.0 + p_r * gamma_rd)
    r_r = _kernels.greedy_fill(caps, cum)
    p_r = (np.exp2(r_r) - 1.0) / gamma_rd
    return p_r, r_r


def min_power_source_schedule(r_r, gamma_sr, budget: Optional[float] = None,
                              gap_rtol: float = 1e-10) -> np.ndarray:
    """Minimum-energy source powers whose prefixes keep the relay rates causal.

    With ``budget`` given, raises :class:`CaseInconsistency` if the required
    energy exceeds it (the caller classified the instance as relay-limited,
    which this contradicts).
    """
    r_r = np.asarray(r_r, dtype=np.float64)
    gamma_sr = np.asarray(gamma_sr, dtype=np.float64)
    m = r_r.shape[0]
    targets = np.cumsum(r_r)
    if targets[-1] <= 0.0:
        return np.zeros(m)

    cons = []
    for j in range(m):
        cons.append(LogSumConstraint(np.zeros(m), targets[j],
                                     np.arange(j + 1), gamma_sr[:j + 1],
                                     np.ones(j + 1)))
    for k in range(m):
        a = np.zeros(m)
        a[k] = -1.0
        cons.append(LinearConstraint(a, 0.0))

    # start from "forward immediately": per-slot rate mirrors the relay's
    r0 = r_r + 1e-3 * max(1.0, targets[-1] / m)
    p0 = (np.exp2(r0) - 1.0) / gamma_sr
    sol = maximize_linear(-np.ones(m), cons, p0,
                          gap_tol=gap_rtol * max(1.0, float(p0.sum())))
    p_s = np.clip(sol.point, 0.0, None)
    if budget is not None and float(p_s.sum()) > budget + feasibility_tol(budget):
        raise CaseInconsistency(
            f"relay-limited recovery needs {p_s.sum():.6g} W of source energy, "
            f"budget is {budget:.6g} W")
    return p_s


def recover_primal(dual: DualState, channels: ChannelProfile,
                   budgets: Tuple[float, float],
                   case_eps: float = 1e-6) -> PowerSolution:
    """Primal schedule from (near-)optimal multipliers, by bottleneck case.

    With both extreme weights positive the Lagrangian maximizers are the
    unique optimum; a vanishing relay weight marks the source-limited case
    (relay side re-solved against the fixed source rates) and vanishing
    source weight the relay-limited case (source side re-solved for minimum
    energy).  Both extreme weights vanishing cannot occur for a bounded dual.
    """
    gsr, grd = _active_channels(channels)
    e_s, e_r = budgets
    beta1 = float(dual.source_weights[0])
    nu_n = float(dual.relay_weights[-1])
    assert beta1 > case_eps or nu_n > case_eps, \
        "both extreme dual weights vanish; no bounded dual point does this"

    if beta1 > case_eps and nu_n > case_eps:
        ev = dual_value_and_subgradient(dual, channels, budgets)
        schedule = greedy_feasible_schedule(ev.source_powers, ev.relay_powers, channels)
        return PowerSolution(
            schedule=schedule, dual=dual, case_tag=CASE_BALANCED,
            objective=throughput(schedule),
            source_levels=ev.source_level * dual.source_weights,
            relay_levels=ev.relay_level * np.maximum(dual.relay_weights, 0.0))

    if nu_n <= case_eps:
        wf = classic_wf(gsr, e_s) if e_s > 0 else None
        p_s = wf.powers if wf else np.zeros_like(gsr)
        r_s = np.log2(1.0 + p_s * gsr)
        p_r, _ = relay_schedule_given_source(r_s, grd, e_r)
        schedule = _assemble(p_s, p_r, channels)
        return PowerSolution(
            schedule=schedule, dual=dual, case_tag=CASE_SOURCE_BOTTLENECK,
            objective=throughput(schedule),
            source_levels=np.full(gsr.shape, wf.water_level if wf else 0.0),
            relay_levels=_realized_levels(p_r, grd))

    wf = classic_wf(grd, e_r) if e_r > 0 else None
    p_r = wf.powers if wf else np.zeros_like(grd)
    r_r = np.log2(1.0 + p_r * grd)
    try:
        p_s = min_power_source_schedule(r_r, gsr, budget=e_s)
    except CaseInconsistency:
        # The multipliers are ellipsoid output, so near case boundaries the
        # classification can misfire; fall back to the feasible maximizers.
        ev = dual_value_and_subgradient(dual, channels, budgets)
        schedule = greedy_feasible_schedule(ev.source_powers, ev.relay_powers, channels)
        return PowerSolution(schedule=schedule, dual=dual,
                             case_tag=CASE_RELAY_BOTTLENECK,
                             objective=throughput(schedule),
                             source_levels=ev.source_level * dual.source_weights,
                             relay_levels=ev.relay_level * np.maximum(dual.relay_weights, 0.0))
    schedule = _assemble(p_s, p_r, channels)
    return PowerSolution(
        schedule=schedule, dual=dual, case_tag=CASE_RELAY_BOTTLENECK,
        objective=throughput(schedule),
        source_levels=_realized_levels(p_s, gsr),
        relay_levels=np.full(grd.shape, wf.water_level if wf else 0.0))


def solve_monotone(channels: ChannelProfile,
                   budgets: Tuple[float, float]) -> PowerSolution:
    """Closed form for degrading source / improving relay channels.

    Both sides run classic water-filling; the side with the smaller full
    budget aggregate rate spends everything, the other side's budget is cut
    back until the aggregate rates match.  Causality then holds on its own:
    the source schedule front-loads rate while the relay back-loads it.
    """
    from .errors import PreconditionError

    if not channels_monotone(channels):
        raise PreconditionError("channels are not monotone (source non-increasing,"
                                " relay non-decreasing) for the closed form")
    gsr, grd = _active_channels(channels)
    e_s, e_r = budgets
    cap_s = cwf_rate(gsr, e_s)
    cap_r = cwf_rate(grd, e_r)
    m = gsr.shape[0]
    if cap_s <= cap_r:
        wf_s = classic_wf(gsr, e_s)
        wf_r = classic_wf(grd, inverse_cwf(grd, cap_s))
        lam = np.zeros(m)
        lam[-1] = 1.0  # source-limited: rate totals balance
        tag = CASE_SOURCE_BOTTLENECK
    else:
        wf_r = classic_wf(grd, e_r)
        wf_s = classic_wf(gsr, inverse_cwf(gsr, cap_r))
        lam = np.zeros(m)
        tag = CASE_RELAY_BOTTLENECK
    schedule = _assemble(wf_s.powers, wf_r.powers, channels)
    return PowerSolution(
        schedule=schedule, dual=DualState.from_multipliers(lam),
        case_tag=CASE_MONOTONE + ":" + tag, objective=throughput(schedule),
        source_levels=np.full(m, wf_s.water_level),
        relay_levels=np.full(m, wf_r.water_level))


def solve_direct(channels: ChannelProfile, budgets: Tuple[float, float],
                 rtol: float = 1e-8) -> PowerSolution:
    """Reference interior-point solve of the full fixed-trajectory program.

    Independent of the dual pipeline: powers and rates are decision variables
    of one smooth convex program handled by the barrier core.  Used as the
    oracle the dual machinery is checked against.
    """
    gsr, grd = _active_channels(channels)
    e_s, e_r = budgets
    m = gsr.shape[0]
    if e_s <= 0.0 or e_r <= 0.0:
        schedule = _assemble(np.zeros(m), np.zeros(m), channels)
        return PowerSolution(schedule=schedule, dual=None,
                             case_tag=CASE_REFERENCE, objective=0.0,
                             source_levels=None, relay_levels=None)

    nv = 3 * m  # p_s, p_r, R
    cons = []
    for j in range(m):
        lin = np.zeros(nv)
        lin[2 * m:2 * m + j + 1] = 1.0
        cons.append(LogSumConstraint(lin, 0.0, np.arange(j + 1),
                                     gsr[:j + 1], np.ones(j + 1)))
    for k in range(m):
        lin = np.zeros(nv)
        lin[2 * m + k] = 1.0
        cons.append(LogSumConstraint(lin, 0.0, [m + k], [grd[k]], [1.0]))
    a = np.zeros(nv)
    a[:m] = 1.0
    cons.append(LinearConstraint(a, e_s))
    a = np.zeros(nv)
    a[m:2 * m] = 1.0
    cons.append(LinearConstraint(a, e_r))
    for k in range(2 * m):
        a = np.zeros(nv)
        a[k] = -1.0
        cons.append(LinearConstraint(a, 0.0))

    # scale estimate and start from a strict interior point
    scale = max(1.0, min(cwf_rate(gsr, e_s), cwf_rate(grd, e_r)))
    p_s0 = np.full(m, e_s / (2.0 * m))
    p_r0 = np.full(m, e_r / (2.0 * m))
    cum0 = np.cumsum(np.log2(1.0 + p_s0 * gsr))
    caps0 = np.log2(1.0 + p_r0 * grd)
    r0 = _kernels.greedy_fill(0.9 * caps0, 0.9 * cum0) - 1e-6 * scale / m
    z0 = np.concatenate([p_s0, p_r0, r0])

    c_obj = np.zeros(nv)
    c_obj[2 * m:] = 1.0
    sol = maximize_linear(c_obj, cons, z0, gap_tol=rtol * scale)
    p_s = np.clip(sol.point[:m], 0.0, None)
    p_r = np.clip(sol.point[m:2 * m], 0.0, None)
    schedule = greedy_feasible_schedule(p_s, p_r, channels)
    return PowerSolution(schedule=schedule, dual=None, case_tag=CASE_REFERENCE,
                         objective=throughput(schedule),
                         source_levels=_realized_levels(p_s, gsr),
                         relay_levels=_realized_levels(p_r, grd),
                         solver_iterations=sol.newton_steps)


def optimal_power(traj: Trajectory, cfg: ScenarioConfig,
                  gap_tol: float = 1e-5, loc_tol: Optional[float] = None,
                  case_eps: float = 1e-6) -> PowerSolution:
    """Throughput-optimal powers for a given trajectory.

    Dispatches to the closed form when the induced channels are monotone,
    otherwise runs the dual descent and primal recovery.  The reported
    objective is always the throughput of the returned (feasible) schedule,
    never the dual bound.
    """
    channels = channel_profile(traj, cfg)
    budgets = (cfg.energy_source, cfg.energy_relay)
    if channels_monotone(channels):
        return solve_monotone(channels, budgets)
    dual, diag = solve_dual(channels, budgets, gap_tol=gap_tol, loc_tol=loc_tol)
    sol = recover_primal(dual, channels, budgets, case_eps=case_eps)
    if diag.candidate_source_powers is not None and diag.candidate_value > sol.objective:
        schedule = greedy_feasible_schedule(diag.candidate_source_powers,
                                            diag.candidate_relay_powers, channels)
        if throughput(schedule) > sol.objective:
            sol = PowerSolution(schedule=schedule, dual=dual,
                                case_tag=sol.case_tag,
                                objective=throughput(schedule),
                                source_levels=sol.source_levels,
                                relay_levels=sol.relay_levels)
    sol.solver_iterations = diag.iterations
    return sol
