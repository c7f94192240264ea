"""Experiment layer: baselines, presets, sweeps, CSV artifacts.

All emitted CSV files are byte-deterministic for a given spec (fixed 12
significant digits, ordered rows).  Wall-clock timings go to a separate
``timings.txt`` precisely because they are not reproducible.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, MobrelayError
from .free_endpoint import solve_free
from .joint_opt import alternate
from .power_opt import (PowerSolution, greedy_feasible_schedule, optimal_power)
from .scenario import (PowerSchedule, ScenarioConfig, Trajectory,
                       causality_feasible, channel_profile, check_mobility,
                       check_power_budget, dbm_to_watts, throughput)
from .traj_opt import optimize_trajectory, realized_schedule
from .waterfill import classic_wf, cwf_rate, inverse_cwf

MODES = ("power", "traj", "joint", "free", "baseline", "ferry")
PRESETS = ("forward-max-speed", "reverse-max-speed", "cyclic", "straight-line")


def _fmt(x) -> str:
    return f"{float(x):.12g}"


# --------------------------------------------------------------------------
# trajectory presets
# --------------------------------------------------------------------------

def trajectory_preset(name: str, cfg: ScenarioConfig,
                      cyclic_bounds: Optional[Tuple[float, float]] = None
                      ) -> Trajectory:
    """Named relay paths used by the fixed-trajectory experiments."""
    n = cfg.slot_count
    v = cfg.step_limit
    d = cfg.distance
    steps = np.arange(n) * v
    if name == "forward-max-speed":
        return Trajectory(x=np.minimum(steps, d), y=np.zeros(n))
    if name == "reverse-max-speed":
        return Trajectory(x=np.maximum(d - steps, 0.0), y=np.zeros(n))
    if name == "cyclic":
        lo, hi = cyclic_bounds if cyclic_bounds else (d / 4.0, 3.0 * d / 4.0)
        span = hi - lo
        phase = np.mod(steps, 2.0 * span)
        tri = np.where(phase <= span, phase, 2.0 * span - phase)
        return Trajectory(x=lo + tri, y=np.zeros(n))
    if name == "straight-line":
        if cfg.start_point is not None and cfg.end_point is not None:
            return Trajectory(x=np.linspace(cfg.start_point[0], cfg.end_point[0], n),
                              y=np.linspace(cfg.start_point[1], cfg.end_point[1], n))
        return Trajectory(x=np.linspace(0.0, d, n), y=np.zeros(n))
    raise DomainError(f"unknown trajectory preset {name!r}")


def uniform_power_schedule(traj: Trajectory, cfg: ScenarioConfig) -> PowerSchedule:
    """Constant per-slot powers at the configured averages (hardware-limited
    transmitters): the fixed-power trajectory experiments use this."""
    n = cfg.slot_count
    p_s = np.full(n, cfg.avg_power_source)
    p_r = np.full(n, cfg.avg_power_relay)
    return PowerSchedule.from_powers(p_s, p_r, channel_profile(traj, cfg))


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

def _without_endpoints(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.start_point is None and cfg.end_point is None:
        return cfg
    return replace(cfg, start_point=None, end_point=None)


def static_baseline(cfg: ScenarioConfig) -> Tuple[Trajectory, PowerSolution]:
    """Relay parked midway between the endpoints, optimal powers."""
    cfg = _without_endpoints(cfg)
    n = cfg.slot_count
    traj = Trajectory(x=np.full(n, cfg.distance / 2.0), y=np.zeros(n))
    return traj, optimal_power(traj, cfg)


@dataclass
class FerryResult:
    trajectory: Trajectory
    powers: PowerSolution
    throughput: float
    load_range: float
    unload_range: float


def data_ferry(cfg: ScenarioConfig, d1: float = 100.0,
               d2: float = 100.0) -> FerryResult:
    """Load-carry-unload benchmark.

    The carrier may receive only within horizontal range ``d1`` of the source
    and transmit only within ``d2`` of the destination; it is silent while
    traveling in between.  The hover split balances the two restricted
    water-filling caps; powers follow classic water-filling on the admissible
    slots, with the stronger side's budget trimmed to balance the rates.
    """
    cfg = _without_endpoints(cfg)
    n = cfg.slot_count
    v = cfg.step_limit
    d = cfg.distance

    def positions(n1: int) -> np.ndarray:
        return np.clip((np.arange(n) - n1) * v, 0.0, d)

    def restricted_caps(x: np.ndarray) -> Tuple[float, float, np.ndarray, np.ndarray]:
        ch = channel_profile(Trajectory(x=x, y=np.zeros(n)), cfg)
        src_ok = x[:-1] <= d1 + 1e-9
        rel_ok = (d - x[1:]) <= d2 + 1e-9
        cap_s = cwf_rate(ch.gamma_sr[:-1][src_ok], cfg.energy_source) if src_ok.any() else 0.0
        cap_r = cwf_rate(ch.gamma_rd[1:][rel_ok], cfg.energy_relay) if rel_ok.any() else 0.0
        return cap_s, cap_r, src_ok, rel_ok

    if n * v > d:
        n1_max = max(0, n - int(np.ceil(d / v)))
        lo, hi = 0, n1_max

        def gap(n1: int) -> float:
            cap_s, cap_r, _, _ = restricted_caps(positions(n1))
            return cap_s - cap_r

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
        best_n1, best_val = candidates[0], -1.0
        for n1 in candidates:
            cap_s, cap_r, _, _ = restricted_caps(positions(n1))
            if min(cap_s, cap_r) > best_val:
                best_n1, best_val = n1, min(cap_s, cap_r)
        x = positions(best_n1)
    else:
        x = np.minimum(np.arange(n) * v, d)  # never arrives; unload window empty
    traj = Trajectory(x=x, y=np.zeros(n))
    channels = channel_profile(traj, cfg)
    cap_s, cap_r, src_ok, rel_ok = restricted_caps(x)

    if not src_ok.any() or not rel_ok.any() or min(cap_s, cap_r) <= 0.0:
        warnings.warn("data ferry has no admissible loading or unloading slots; "
                      "throughput is zero", stacklevel=2)
        schedule = PowerSchedule.from_powers(np.zeros(n), np.zeros(n), channels)
        powers = PowerSolution(schedule=schedule, dual=None, case_tag="data-ferry",
                               objective=0.0)
        return FerryResult(traj, powers, 0.0, d1, d2)

    g_src = channels.gamma_sr[:-1][src_ok]
    g_rel = channels.gamma_rd[1:][rel_ok]
    e_s, e_r = cfg.energy_source, cfg.energy_relay
    if cap_s <= cap_r:
        wf_s = classic_wf(g_src, e_s)
        wf_r = classic_wf(g_rel, inverse_cwf(g_rel, cap_s))
    else:
        wf_r = classic_wf(g_rel, e_r)
        wf_s = classic_wf(g_src, inverse_cwf(g_src, cap_r))
    p_s = np.zeros(n - 1)
    p_s[src_ok] = wf_s.powers
    p_r = np.zeros(n - 1)
    p_r[rel_ok] = wf_r.powers
    # greedy pass enforces causality exactly even when the windows overlap
    schedule = greedy_feasible_schedule(p_s, p_r, channels)
    powers = PowerSolution(schedule=schedule, dual=None, case_tag="data-ferry",
                           objective=throughput(schedule))
    return FerryResult(traj, powers, powers.objective, d1, d2)


# --------------------------------------------------------------------------
# experiment spec and runner
# --------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    mode: str
    sweep_horizons: Optional[Sequence[float]] = None
    sweep_powers_dbm: Optional[Sequence[float]] = None
    preset: Optional[str] = None
    out_dir: Optional[Path] = None
    ferry_load_range: float = 100.0
    ferry_unload_range: float = 100.0
    rel_tol: float = 1e-4
    max_iters: int = 50
    emit_plots: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.sweep_horizons is not None and self.sweep_powers_dbm is not None:
            raise DomainError("sweep over either horizons or powers, not both")
        if self.sweep_horizons is not None:
            if not self.sweep_horizons or any(t <= 0 for t in self.sweep_horizons):
                raise DomainError("horizon sweep values must be positive and nonempty")
        for values in (self.sweep_horizons, self.sweep_powers_dbm):
            if values is not None and list(values) != sorted(values):
                raise DomainError("sweep values must be sorted ascending")
        if self.preset is not None and self.preset not in PRESETS:
            raise DomainError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")


@dataclass
class ResultRow:
    sweep_value: float
    mode: str
    throughput_sum: float
    throughput_per_slot: float
    solver_iterations: int
    status: str
    wall_time_seconds: float = 0.0
    label: str = ""


@dataclass
class RunArtifacts:
    trajectory: Trajectory
    schedule: PowerSchedule
    source_levels: Optional[np.ndarray]
    relay_levels: Optional[np.ndarray]
    trace: Optional[List[Tuple[float, float, float]]]


def _default_preset(mode: str) -> str:
    return "forward-max-speed" if mode == "power" else "straight-line"


def _execute_point(spec: ExperimentSpec, cfg: ScenarioConfig
                   ) -> Tuple[ResultRow, RunArtifacts]:
    t0 = time.perf_counter()
    status = "ok"
    iterations = 0
    trace = None
    levels = (None, None)
    traj = trajectory_preset("straight-line", _without_endpoints(cfg), None)
    schedule = PowerSchedule.from_powers(np.zeros(cfg.slot_count),
                                         np.zeros(cfg.slot_count),
                                         channel_profile(traj, _without_endpoints(cfg)))
    value = 0.0
    try:
        if spec.mode == "power":
            traj = trajectory_preset(spec.preset or _default_preset("power"), cfg)
            psol = optimal_power(traj, cfg)
            schedule, value = psol.schedule, psol.objective
            iterations = psol.solver_iterations
            levels = (psol.source_levels, psol.relay_levels)
        elif spec.mode == "traj":
            traj = trajectory_preset(spec.preset or _default_preset("traj"), cfg)
            powers = uniform_power_schedule(traj, cfg)
            res = optimize_trajectory(traj, powers, cfg,
                                      max_iters=spec.max_iters,
                                      rel_tol=spec.rel_tol)
            if res.failed:
                status = "solver-failure"
            traj = res.trajectory
            schedule = realized_schedule(traj, powers, cfg)
            value = throughput(schedule)
            iterations = res.iterations
            trace = [(float(i), lb, ex) for i, lb, ex in res.trace]
        elif spec.mode == "joint":
            traj = trajectory_preset(spec.preset or _default_preset("joint"), cfg)
            res = alternate(traj, cfg, outer_max=spec.max_iters,
                            rel_tol=spec.rel_tol)
            if res.failed:
                status = "solver-failure"
            traj = res.trajectory
            schedule, value = res.powers.schedule, res.throughput
            iterations = len(res.outer_trace)
            levels = (res.powers.source_levels, res.powers.relay_levels)
            trace = [(float(i + 1), v, v) for i, v in enumerate(res.outer_trace)]
        elif spec.mode == "free":
            res = solve_free(_without_endpoints(cfg))
            traj = res.trajectory
            schedule, value = res.powers.schedule, res.throughput
            levels = (res.powers.source_levels, res.powers.relay_levels)
        elif spec.mode == "baseline":
            traj, psol = static_baseline(cfg)
            schedule, value = psol.schedule, psol.objective
            levels = (psol.source_levels, psol.relay_levels)
        elif spec.mode == "ferry":
            res = data_ferry(cfg, spec.ferry_load_range, spec.ferry_unload_range)
            traj = res.trajectory
            schedule, value = res.powers.schedule, res.throughput
        else:  # pragma: no cover - guarded by __post_init__
            raise DomainError(spec.mode)
    except MobrelayError:
        status = "solver-failure"
    # re-validate every schedule before it is written out
    if status == "ok":
        mobility_ok = (spec.mode in ("free", "baseline", "ferry")
                       or not check_mobility(traj, cfg))
        if not (mobility_ok and causality_feasible(schedule)
                and check_power_budget(schedule, cfg)):
            status = "infeasible-output"
    row = ResultRow(sweep_value=0.0, mode=spec.mode, throughput_sum=value,
                    throughput_per_slot=value / cfg.slot_count,
                    solver_iterations=iterations, status=status,
                    wall_time_seconds=time.perf_counter() - t0)
    return row, RunArtifacts(trajectory=traj, schedule=schedule,
                             source_levels=levels[0], relay_levels=levels[1],
                             trace=trace)


def _sweep_points(spec: ExperimentSpec) -> List[Tuple[float, str, ScenarioConfig]]:
    base = spec.scenario
    if spec.sweep_horizons is not None:
        return [(t, f"t{_fmt(t)}", base.with_horizon(t)) for t in spec.sweep_horizons]
    if spec.sweep_powers_dbm is not None:
        out = []
        for dbm in spec.sweep_powers_dbm:
            w = dbm_to_watts(dbm)
            out.append((dbm, f"p{_fmt(dbm)}dbm",
                        replace(base, avg_power_source=w, avg_power_relay=w)))
        return out
    return [(base.horizon, "base", base)]


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_run_artifacts(run_dir: Path, art: RunArtifacts) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    traj = art.trajectory
    n = len(traj)
    speeds = np.append(traj.speeds, 0.0)
    _write_csv(run_dir / "trajectory.csv", ["n", "x", "y", "v"],
               ((i + 1, traj.x[i], traj.y[i], speeds[i]) for i in range(n)))
    sch = art.schedule
    lvl_s = np.full(n, np.nan)
    lvl_r = np.full(n, np.nan)
    if art.source_levels is not None:
        lvl_s[:n - 1] = art.source_levels
    if art.relay_levels is not None:
        lvl_r[1:] = art.relay_levels
    _write_csv(run_dir / "powers.csv",
               ["n", "p_s", "p_r", "r_s", "r_r", "level_s", "level_r"],
               ((i + 1, sch.p_s[i], sch.p_r[i], sch.r_s[i], sch.r_r[i],
                 lvl_s[i], lvl_r[i]) for i in range(n)))
    if art.trace is not None:
        _write_csv(run_dir / "trace.csv", ["iteration", "objective_lb", "objective_exact"],
                   art.trace)


_PLOT_TEMPLATE = """# gnuplot script generated by the experiment runner
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 960,640

set output "throughput_vs_sweep.png"
set xlabel "sweep value"
set ylabel "throughput (bits/s/Hz, per-slot)"
plot "results.csv" using 1:4 with linespoints title "throughput per slot"

{run_sections}
"""

_RUN_SECTION = """set output "{label}_trajectory.png"
set xlabel "x (m)"
set ylabel "y (m)"
plot "{label}/trajectory.csv" using 2:3 with linespoints title "{label} path"

set output "{label}_speed.png"
set xlabel "slot"
set ylabel "speed (m per slot)"
plot "{label}/trajectory.csv" using 1:4 with steps title "{label} speed"

set output "{label}_powers.png"
set xlabel "slot"
set ylabel "power (W)"
plot "{label}/powers.csv" using 1:2 with steps title "source", \\
     "{label}/powers.csv" using 1:3 with steps title "relay"
"""


def run(spec: ExperimentSpec):
    """Execute the experiment, returning rows and (optionally) writing files.

    Sweep points run in a thread pool; a single collector writes artifacts in
    sweep order so outputs are deterministic.
    """
    points = _sweep_points(spec)

    def work(point):
        value, label, cfg = point
        row, art = _execute_point(spec, cfg)
        row.sweep_value = value
        row.label = label
        return row, art

    if spec.workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(work, points))
    else:
        results = [work(p) for p in points]

    rows = [row for row, _ in results]
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_csv(out / "results.csv",
                       ["sweep_value", "mode", "throughput_sum",
                        "throughput_per_slot", "solver_iterations", "status"],
                       ((r.sweep_value, r.mode, r.throughput_sum,
                         r.throughput_per_slot, r.solver_iterations, r.status)
                        for r in rows))
            (out / "timings.txt").write_text(
                "".join(f"{r.label} {r.wall_time_seconds:.3f}s\n" for r in rows),
                encoding="utf-8")
            for row, art in results:
                _write_run_artifacts(out / row.label, art)
            if spec.emit_plots:
                sections = "\n".join(_RUN_SECTION.format(label=row.label)
                                     for row, _ in results)
                (out / "plots.gp").write_text(
                    _PLOT_TEMPLATE.format(run_sections=sections), encoding="utf-8")
        except OSError as exc:
            raise IOError(f"cannot write outputs under {out}: {exc}") from exc
    return rows
