"""Alternating optimization of transmit powers and relay trajectory.

Each round solves the power allocation exactly on the incumbent trajectory,
then improves the trajectory for those powers.  Both half-steps are
monotone (up to solver tolerance), so the per-round throughput trace is
non-decreasing; no global optimality is claimed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

from .power_opt import PowerSolution, optimal_power
from .scenario import ScenarioConfig, Trajectory
from .traj_opt import optimize_trajectory


@dataclass
class JointResult:
    trajectory: Trajectory
    powers: PowerSolution
    throughput: float
    outer_trace: List[float]
    converged: bool
    failed: bool = False


def alternate(init: Trajectory, cfg: ScenarioConfig, outer_max: int = 30,
              rel_tol: float = 1e-4, power_gap_tol: float = 1e-5,
              traj_max_iters: int = 50, traj_rel_tol: float = 1e-4,
              traj_gap_rtol: float = 1e-7) -> JointResult:
    """Alternate power and trajectory half-steps from a feasible start.

    The power half-step runs first; the trajectory half-step warm-starts from
    the incumbent path.  Stops when the round-over-round throughput change
    falls below ``rel_tol`` or after ``outer_max`` rounds; a sub-solver
    failure returns the best solution so far with ``failed`` set.
    """
    traj = init
    trace: List[float] = []
    converged = False
    failed = False
    for _ in range(outer_max):
        psol = optimal_power(traj, cfg, gap_tol=power_gap_tol)
        tres = optimize_trajectory(traj, psol.schedule, cfg,
                                   max_iters=traj_max_iters,
                                   rel_tol=traj_rel_tol,
                                   gap_rtol=traj_gap_rtol)
        traj = tres.trajectory
        trace.append(tres.objective)
        if tres.failed:
            failed = True
            break
        if len(trace) >= 2:
            denom = max(abs(trace[-2]), abs(trace[-1]), 1e-12)
            if abs(trace[-1] - trace[-2]) <= rel_tol * denom:
                converged = True
                break
    # Re-solve the powers on the final trajectory so the returned schedule's
    # rates correspond to it; its objective is the solution's throughput.
    psol = optimal_power(traj, cfg, gap_tol=power_gap_tol)
    return JointResult(trajectory=traj, powers=psol, throughput=psol.objective,
                       outer_trace=trace, converged=converged, failed=failed)
