"""Trajectory optimization for fixed transmit powers.

Each link rate, viewed through the squared link distance, is convex in the
squared-distance perturbation, so its first-order expansion around the
incumbent trajectory is a global concave-quadratic lower bound in the per-slot
position increments.  Maximizing the delivered total over these bounds is a
convex QCQP in the increments; iterating the solve-and-move step never
decreases the true objective and converges to a stationary trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .convex_core import QcqpProblem, solve_qcqp
from .errors import MobrelayError
from .power_opt import greedy_feasible_schedule
from .scenario import (PowerSchedule, ScenarioConfig, Trajectory,
                       channel_profile, feasibility_tol)

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class ScaCoefficients:
    """Per-slot coefficients of the concave-quadratic rate lower bounds.

    Arrays are full length N; slots where the corresponding transmitter is
    silent have zero coefficients.  ``r_s_base``/``r_r_base`` are the exact
    rates at the expansion trajectory.
    """

    a_s: np.ndarray
    b_s: np.ndarray
    c_s: np.ndarray
    a_r: np.ndarray
    b_r: np.ndarray
    c_r: np.ndarray
    r_s_base: np.ndarray
    r_r_base: np.ndarray


def sca_coefficients(traj: Trajectory, powers: PowerSchedule,
                     cfg: ScenarioConfig) -> ScaCoefficients:
    """Expansion coefficients of the rate lower bounds around ``traj``.

    The effective per-slot SNR numerators are ``p * reference_snr`` so that
    the exact rate formulas are reproduced at zero increment.
    """
    h2 = cfg.altitude ** 2
    d = cfg.distance
    x, y = traj.x, traj.y
    d_sr2 = h2 + x ** 2 + y ** 2
    d_rd2 = h2 + (d - x) ** 2 + y ** 2
    snr_s = powers.p_s * cfg.reference_snr
    snr_r = powers.p_r * cfg.reference_snr
    a_s = snr_s * LOG2E / (d_sr2 * (snr_s + d_sr2))
    a_r = snr_r * LOG2E / (d_rd2 * (snr_r + d_rd2))
    return ScaCoefficients(
        a_s=a_s, b_s=2.0 * x * a_s, c_s=2.0 * y * a_s,
        a_r=a_r, b_r=-2.0 * (d - x) * a_r, c_r=2.0 * y * a_r,
        r_s_base=np.log2(1.0 + snr_s / d_sr2),
        r_r_base=np.log2(1.0 + snr_r / d_rd2))


def lower_bound_rates(coeffs: ScaCoefficients, dx, dy
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """Rate lower bounds at the given increments (never above the true rates)."""
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    quad = dx ** 2 + dy ** 2
    r_s = coeffs.r_s_base - coeffs.a_s * quad - coeffs.b_s * dx - coeffs.c_s * dy
    r_r = coeffs.r_r_base - coeffs.a_r * quad - coeffs.b_r * dx - coeffs.c_r * dy
    return r_s, r_r


def _diag_q(nv, idx, vals):
    return sp.coo_matrix((vals, (idx, idx)), shape=(nv, nv)).tocsr()


def build_increment_qcqp(coeffs: ScaCoefficients, traj: Trajectory,
                         cfg: ScenarioConfig) -> QcqpProblem:
    """Assemble the increment program for one trajectory update.

    Variables are ``[dx (N), dy (N), R (N-1)]``: position increments plus the
    relay rates for slots 2..N.  Constraints: cumulative buffer causality
    against the source-rate lower bounds, per-slot relay rate caps, and the
    mobility balls (endpoint balls only when the scenario pins endpoints).
    """
    n = len(traj)
    m = n - 1
    nv = 3 * n - 1
    x, y = traj.x, traj.y
    v2 = cfg.step_limit ** 2
    quad = []
    cum_rs = np.cumsum(coeffs.r_s_base)

    # causality, one per relay slot k+2: R prefix vs. source lower bounds
    for k in range(m):
        src = np.arange(k + 1)
        idx = np.concatenate([src, n + src])
        qv = np.concatenate([coeffs.a_s[src], coeffs.a_s[src]])
        q = np.zeros(nv)
        q[src] = coeffs.b_s[src]
        q[n + src] = coeffs.c_s[src]
        q[2 * n:2 * n + k + 1] = 1.0
        quad.append((_diag_q(nv, idx, qv), q, -float(cum_rs[k])))

    # per-slot rate caps for relay slots
    for k in range(m):
        i = k + 1
        q = np.zeros(nv)
        q[i] = coeffs.b_r[i]
        q[n + i] = coeffs.c_r[i]
        q[2 * n + k] = 1.0
        quad.append((_diag_q(nv, [i, n + i], [coeffs.a_r[i], coeffs.a_r[i]]),
                     q, -float(coeffs.r_r_base[i])))

    # mobility: start ball, per-step balls, end ball.  Scaled by 1/V^2 so the
    # constraint values share the O(1) magnitude of the rate constraints
    # (the barrier's conditioning depends on this).
    s2 = 1.0 / v2
    if cfg.start_point is not None:
        ax = float(x[0] - cfg.start_point[0])
        ay = float(y[0] - cfg.start_point[1])
        q = np.zeros(nv)
        q[0] = 2.0 * ax * s2
        q[n] = 2.0 * ay * s2
        quad.append((_diag_q(nv, [0, n], [s2, s2]), q,
                     (ax * ax + ay * ay - v2) * s2))
    for i in range(n - 1):
        ddx = float(x[i + 1] - x[i])
        ddy = float(y[i + 1] - y[i])
        rows = [i, i, i + 1, i + 1, n + i, n + i, n + i + 1, n + i + 1]
        cols = [i, i + 1, i, i + 1, n + i, n + i + 1, n + i, n + i + 1]
        vals = np.array([1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0]) * s2
        qm = sp.coo_matrix((vals, (rows, cols)), shape=(nv, nv)).tocsr()
        q = np.zeros(nv)
        q[i], q[i + 1] = -2.0 * ddx * s2, 2.0 * ddx * s2
        q[n + i], q[n + i + 1] = -2.0 * ddy * s2, 2.0 * ddy * s2
        quad.append((qm, q, (ddx * ddx + ddy * ddy - v2) * s2))
    if cfg.end_point is not None:
        ax = float(cfg.end_point[0] - x[-1])
        ay = float(cfg.end_point[1] - y[-1])
        q = np.zeros(nv)
        q[n - 1] = -2.0 * ax * s2
        q[2 * n - 1] = -2.0 * ay * s2
        quad.append((_diag_q(nv, [n - 1, 2 * n - 1], [s2, s2]), q,
                     (ax * ax + ay * ay - v2) * s2))

    obj = np.zeros(nv)
    obj[2 * n:] = 1.0
    return QcqpProblem(num_vars=nv, objective=obj, quad_constraints=quad)


def fixed_power_throughput(traj: Trajectory, powers: PowerSchedule,
                           cfg: ScenarioConfig) -> Tuple[float, np.ndarray]:
    """Best deliverable total on a trajectory with the powers held fixed.

    The relay forwards greedily against its buffer each slot, which attains
    the maximum of every prefix and hence of the total.  Returns the total
    and the per-slot forwarded rates (relay slots 2..N).
    """
    channels = channel_profile(traj, cfg)
    r_s = np.log2(1.0 + powers.p_s[:-1] * channels.gamma_sr[:-1])
    caps = np.log2(1.0 + powers.p_r[1:] * channels.gamma_rd[1:])
    r_r = _kernels.greedy_fill(caps, np.cumsum(r_s))
    return float(r_r.sum()), r_r


def realized_schedule(traj: Trajectory, powers: PowerSchedule,
                      cfg: ScenarioConfig) -> PowerSchedule:
    """Feasible schedule on ``traj``: fixed source powers, relay trimmed to
    what the buffer lets it forward."""
    channels = channel_profile(traj, cfg)
    return greedy_feasible_schedule(powers.p_s[:-1], powers.p_r[1:], channels)


def _interior_start(coeffs: ScaCoefficients, traj: Trajectory,
                    cfg: ScenarioConfig) -> np.ndarray:
    """Strictly feasible start: contract slightly toward an interior path,
    then under-fill the rate variables against the shifted bounds."""
    n = len(traj)
    eps = 1e-3
    if cfg.start_point is not None and cfg.end_point is not None:
        ref_x = np.linspace(cfg.start_point[0], cfg.end_point[0], n)
        ref_y = np.linspace(cfg.start_point[1], cfg.end_point[1], n)
    elif cfg.start_point is not None:
        ref_x = np.full(n, cfg.start_point[0])
        ref_y = np.full(n, cfg.start_point[1])
    elif cfg.end_point is not None:
        ref_x = np.full(n, cfg.end_point[0])
        ref_y = np.full(n, cfg.end_point[1])
    else:
        ref_x = np.full(n, float(traj.x.mean()))
        ref_y = np.full(n, float(traj.y.mean()))
    dx = eps * (ref_x - traj.x)
    dy = eps * (ref_y - traj.y)
    r_s_lb, r_r_lb = lower_bound_rates(coeffs, dx, dy)
    supply = np.cumsum(r_s_lb[:-1])
    caps = r_r_lb[1:]
    margin = 1e-3 * max(1.0, abs(float(supply[-1]))) / (n - 1)
    r0 = np.empty(n - 1)
    sent = 0.0
    for k in range(n - 1):
        r = min(caps[k] - margin, supply[k] - margin - sent)
        r0[k] = r
        sent += r
    return np.concatenate([dx, dy, r0])


@dataclass
class ScaStep:
    trajectory: Trajectory
    objective_lb: float
    objective_exact: float
    ok: bool


def sca_step(traj: Trajectory, powers: PowerSchedule, cfg: ScenarioConfig,
             gap_rtol: float = 1e-9) -> ScaStep:
    """One solve-and-move update of the trajectory.

    On solver failure the incumbent trajectory is returned with ``ok=False``.
    """
    exact0, _ = fixed_power_throughput(traj, powers, cfg)
    if not (np.any(powers.p_s > 0) and np.any(powers.p_r > 0)):
        return ScaStep(traj, exact0, exact0, True)
    coeffs = sca_coefficients(traj, powers, cfg)
    prob = build_increment_qcqp(coeffs, traj, cfg)
    try:
        z0 = _interior_start(coeffs, traj, cfg)
        sol = solve_qcqp(prob, tol=gap_rtol * max(1.0, exact0), z0=z0)
    except MobrelayError:
        return ScaStep(traj, exact0, exact0, False)
    n = len(traj)
    new_traj = Trajectory(x=traj.x + sol.point[:n], y=traj.y + sol.point[n:2 * n])
    exact, _ = fixed_power_throughput(new_traj, powers, cfg)
    return ScaStep(new_traj, float(sol.value), exact, True)


@dataclass
class TrajOptResult:
    trajectory: Trajectory
    trace: List[Tuple[int, float, float]]   # (iteration, lb objective, exact)
    converged: bool
    iterations: int
    failed: bool = False

    @property
    def objective(self) -> float:
        return self.trace[-1][2]


def optimize_trajectory(init: Trajectory, powers: PowerSchedule,
                        cfg: ScenarioConfig, max_iters: int = 50,
                        rel_tol: float = 1e-4,
                        gap_rtol: float = 1e-9) -> TrajOptResult:
    """Iterate increment solves until the exact objective stalls.

    The exact objective is re-evaluated after every step; a step that would
    lower it (possible only through solver tolerance) is rejected and treated
    as convergence, so the trace is non-decreasing.
    """
    exact, _ = fixed_power_throughput(init, powers, cfg)
    traj = init
    trace = [(0, exact, exact)]
    converged = False
    failed = False
    for it in range(1, max_iters + 1):
        step = sca_step(traj, powers, cfg, gap_rtol=gap_rtol)
        if not step.ok:
            failed = True
            break
        if step.objective_exact < exact - feasibility_tol(exact):
            converged = True
            break
        prev = exact
        traj = step.trajectory
        exact = step.objective_exact
        trace.append((it, step.objective_lb, exact))
        denom = max(abs(prev), abs(exact), 1e-12)
        if abs(exact - prev) <= rel_tol * denom:
            converged = True
            break
    return TrajOptResult(trajectory=traj, trace=trace, converged=converged,
                         iterations=len(trace) - 1, failed=failed)
