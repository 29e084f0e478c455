"""Alternating optimization driver over powers and trajectory."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import model
from .model import PowerAllocation, Scenario, Trajectory
from .power_dc import DcOptions, StageFailure, dc_allocate
from .report import RunReport
from .trajectory_scp import (ScpOptions, initial_trajectory,
                             restore_feasibility, scp_optimize)


@dataclass
class AoOptions:
    rel_tol: float = 1e-4
    max_iter: int = 30
    feas_tol: float = 1e-6
    dc: DcOptions = field(default_factory=DcOptions)
    scp: ScpOptions = field(default_factory=ScpOptions)


@dataclass(frozen=True)
class EvalSnapshot:
    """Pure re-evaluation of a candidate solution."""

    objective: float
    secrecy_avg: float
    mobility: model.FeasibilityVerdict
    causality: model.FeasibilityVerdict
    power_budget: model.FeasibilityVerdict

    @property
    def feasible(self) -> bool:
        return (self.mobility.feasible and self.causality.feasible
                and self.power_budget.feasible)


def evaluate(scn: Scenario, traj: Trajectory,
             pw: PowerAllocation,
             tol: float = model.DEFAULT_FEAS_TOL) -> EvalSnapshot:
    rp = model.rate_profile(scn, traj, pw)
    checks = model.check_all(scn, traj, pw, tol)
    return EvalSnapshot(
        objective=rp.secrecy_sum, secrecy_avg=rp.secrecy_avg,
        mobility=checks["mobility"], causality=checks["causality"],
        power_budget=checks["power_budget"])


def _ao_single(scn: Scenario, traj: Trajectory,
               opts: AoOptions) -> tuple[Trajectory, PowerAllocation, RunReport]:
    report = RunReport(stage="ao")
    t0 = time.perf_counter()
    # Feasible warm start for the first power step: equal power, relay
    # scaled down until causality holds on the initial trajectory.
    pw = restore_feasibility(scn, traj,
                             model.equal_power_allocation(scn),
                             tol=opts.feas_tol)
    obj = model.secrecy_sum(scn, traj, pw)
    report.add(obj, feasible=True)
    report.status = "max_iter"

    if scn.p_bar_r <= 0.0:
        report.status = "converged"
        report.total_time = time.perf_counter() - t0
        return traj, model.zero_power_allocation(scn), report

    for _ in range(opts.max_iter):
        try:
            pw_start = restore_feasibility(scn, traj, pw, tol=opts.feas_tol)
            pw, dc_rep = dc_allocate(scn, traj, pw_0=pw_start, opts=opts.dc)
            report.sub_reports.append(dc_rep)
            traj, scp_rep = scp_optimize(scn, pw, traj, opts=opts.scp)
            report.sub_reports.append(scp_rep)
        except StageFailure as exc:
            report.status = "inner_stage_failure"
            report.extras["failure"] = str(exc)
            break
        obj_new = model.secrecy_sum(scn, traj, pw)
        rel = abs(obj_new - obj) / max(abs(obj_new), 1e-10)
        feas = all(v.feasible for v in
                   model.check_all(scn, traj, pw, opts.feas_tol).values())
        report.add(obj_new, feasible=feas,
                   kkt_residual=scp_rep.extras.get("final_subproblem_kkt"))
        obj = obj_new
        if rel < opts.rel_tol:
            report.status = "converged"
            break
    report.total_time = time.perf_counter() - t0
    return traj, pw, report


def default_starts(scn: Scenario) -> list[Trajectory]:
    """Multi-start pool: straight line / hover, plus (with free
    endpoints) the ferry plan and a hover at the most promising fixed
    location, so a locally hopeless hover start cannot trap the search."""
    starts = [initial_trajectory(scn)]
    if scn.start_xy is None and scn.end_xy is None:
        from . import baselines
        ferry = baselines.data_ferry(scn)
        if ferry.load_slots > 0:
            starts.append(ferry.traj)
        grid = baselines.StaticGrid.default(scn)
        xs = np.linspace(grid.x_min, grid.x_max, grid.nx)
        ys = np.linspace(grid.y_min, grid.y_max, grid.ny)
        cand = np.array([(x, y) for x in xs for y in ys])
        ub = np.array([baselines._location_upper_bound(scn, c) for c in cand])
        best = cand[int(np.argmax(ub))]
        starts.append(Trajectory(np.tile(best, (scn.n_slots, 1))))
    return starts


def ao_optimize(scn: Scenario, opts: Optional[AoOptions] = None,
                init_trajs: Optional[Sequence[Trajectory]] = None
                ) -> tuple[Trajectory, PowerAllocation, RunReport]:
    """Alternate power allocation and trajectory steps until the secrecy
    objective settles; with several starting trajectories, keeps the best
    run (multi-start)."""
    opts = opts or AoOptions()
    if init_trajs is None:
        init_trajs = default_starts(scn)
    best = None
    runs = []
    for traj0 in init_trajs:
        out = _ao_single(scn, traj0, opts)
        runs.append(out)
        if best is None or out[2].final_objective > best[2].final_objective:
            best = out
    traj, pw, report = best
    if len(runs) > 1:
        report.extras["multistart_objectives"] = [
            r[2].final_objective for r in runs]
    return traj, pw, report
