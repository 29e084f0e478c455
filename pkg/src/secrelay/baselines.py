"""Benchmark schemes: static relaying and data ferrying.

Both ignore endpoint constraints (the relay is deployed wherever the
scheme wants it), matching how they are compared against the mobile
relay with free endpoints.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model
from .model import PowerAllocation, Scenario, Trajectory
from .power_dc import DcOptions, dc_allocate
from .trajectory_scp import restore_feasibility


@dataclass
class StaticGrid:
    """Search grid for the fixed relay location."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 41
    ny: int = 21
    refine_halvings: int = 2

    @classmethod
    def default(cls, scn: Scenario) -> "StaticGrid":
        d = float(np.linalg.norm(scn.bob_xy - scn.alice_xy))
        span = max(3.0 * abs(scn.eve_xy[1] - scn.alice_xy[1]),
                   scn.altitude_h)
        return cls(x_min=min(scn.alice_xy[0], scn.bob_xy[0]),
                   x_max=max(scn.alice_xy[0], scn.bob_xy[0]),
                   y_min=scn.alice_xy[1] - span, y_max=scn.alice_xy[1] + span)


@dataclass(frozen=True)
class StaticResult:
    location: np.ndarray
    pw: PowerAllocation
    objective: float
    evaluated: int          # locations where the power problem was solved


@dataclass(frozen=True)
class FerryResult:
    traj: Trajectory
    pw: PowerAllocation
    objective: float
    load_slots: int
    diagnostic: str = ""


def _free_endpoints(scn: Scenario) -> Scenario:
    return dataclasses.replace(scn, start_xy=None, end_xy=None)


def _constant_traj(scn: Scenario, xy) -> Trajectory:
    return Trajectory(np.tile(np.asarray(xy, dtype=float), (scn.n_slots, 1)))


def _location_upper_bound(scn: Scenario, xy) -> float:
    """Secrecy upper bound at a fixed location.

    Two caps, both by concavity of the rate in the power: the deliverable
    secrecy with the full relay budget split equally over the N-1
    transmit slots, and the total receivable from the source with its
    budget split equally over the N-1 receive slots (causality forbids
    forwarding more than was received)."""
    h2 = scn.altitude_h ** 2
    xy = np.asarray(xy, dtype=float)
    g_rd = scn.ref_snr / (h2 + np.sum((xy - scn.bob_xy) ** 2))
    g_re = scn.ref_snr / (h2 + np.sum((xy - scn.eve_xy) ** 2))
    if g_rd <= g_re:
        return 0.0
    n = scn.n_slots
    p_r = n * scn.p_bar_r / (n - 1)
    deliver = (n - 1) * float(np.log2(1 + p_r * g_rd)
                              - np.log2(1 + p_r * g_re))
    g_ar = scn.ref_snr / (h2 + np.sum((xy - scn.alice_xy) ** 2))
    p_s = n * scn.p_bar_s / (n - 1)
    receive = (n - 1) * float(np.log2(1 + p_s * g_ar))
    return min(deliver, receive)


def _solve_location(scn: Scenario, xy, opts: DcOptions) -> tuple[float, PowerAllocation]:
    traj = _constant_traj(scn, xy)
    pw0 = restore_feasibility(scn, traj, model.equal_power_allocation(scn),
                              tol=opts.feas_tol)
    pw, _ = dc_allocate(scn, traj, pw_0=pw0, opts=opts)
    return model.secrecy_sum(scn, traj, pw), pw


def static_relay_best(scn: Scenario,
                      grid: Optional[StaticGrid] = None,
                      dc_opts: Optional[DcOptions] = None) -> StaticResult:
    """Best fixed relay location at altitude H with optimized powers.

    Scans the grid in decreasing order of a cheap secrecy upper bound and
    prunes locations whose bound cannot beat the incumbent, then refines
    locally with the grid step halved twice.
    """
    scn = _free_endpoints(scn)
    grid = grid or StaticGrid.default(scn)
    scan_opts = dc_opts or DcOptions(rel_tol=1e-4, max_iter=40)
    xs = np.linspace(grid.x_min, grid.x_max, grid.nx)
    ys = np.linspace(grid.y_min, grid.y_max, grid.ny)
    cand = np.array([(x, y) for x in xs for y in ys])
    bounds = np.array([_location_upper_bound(scn, c) for c in cand])
    order = np.argsort(-bounds, kind="stable")

    best_obj = 0.0
    best_xy = cand[order[0]]
    best_pw = model.zero_power_allocation(scn)
    evaluated = 0
    for idx in order:
        if bounds[idx] <= best_obj + 1e-12:
            break
        obj, pw = _solve_location(scn, cand[idx], scan_opts)
        evaluated += 1
        if obj > best_obj:
            best_obj, best_xy, best_pw = obj, cand[idx], pw

    # Local refinement around the incumbent, step halved twice.
    step_x = (xs[1] - xs[0]) if grid.nx > 1 else scn.altitude_h
    step_y = (ys[1] - ys[0]) if grid.ny > 1 else scn.altitude_h
    for _ in range(grid.refine_halvings):
        step_x *= 0.5
        step_y *= 0.5
        for dx in (-step_x, 0.0, step_x):
            for dy in (-step_y, 0.0, step_y):
                if dx == 0.0 and dy == 0.0:
                    continue
                xy = best_xy + np.array([dx, dy])
                if _location_upper_bound(scn, xy) <= best_obj:
                    continue
                obj, pw = _solve_location(scn, xy, scan_opts)
                evaluated += 1
                if obj > best_obj:
                    best_obj, best_xy, best_pw = obj, xy, pw

    # Tighten the winner with default tolerances.
    if best_obj > 0.0:
        obj, pw = _solve_location(scn, best_xy, dc_opts or DcOptions())
        evaluated += 1
        if obj >= best_obj:
            best_obj, best_pw = obj, pw
    return StaticResult(location=np.asarray(best_xy, dtype=float),
                        pw=best_pw, objective=best_obj, evaluated=evaluated)


def transit_slot_count(scn: Scenario) -> int:
    dist = float(np.linalg.norm(scn.bob_xy - scn.alice_xy))
    return int(math.ceil(dist / scn.slot_travel - 1e-12))


def ferry_plan(scn: Scenario, load_slots: int) -> tuple[Trajectory, PowerAllocation]:
    """Three-phase plan: load above the source, fly silent, unload above
    the destination; equal power within each active phase, relay power
    capped to respect causality."""
    n = scn.n_slots
    transit = transit_slot_count(scn)
    unload = n - load_slots - transit
    if load_slots < 1 or unload < 1:
        raise ValueError("horizon too short for the requested phase split")
    dist = float(np.linalg.norm(scn.bob_xy - scn.alice_xy))
    u = (scn.bob_xy - scn.alice_xy) / dist
    xy = np.empty((n, 2))
    xy[:load_slots] = scn.alice_xy
    for k in range(1, transit + 1):
        xy[load_slots + k - 1] = scn.alice_xy + min(k * scn.slot_travel,
                                                    dist) * u
    xy[load_slots + transit:] = scn.bob_xy
    traj = Trajectory(xy)

    p_s = np.zeros(n)
    p_s[:load_slots] = n * scn.p_bar_s / load_slots
    p_r = np.zeros(n)
    p_r[load_slots + transit:] = n * scn.p_bar_r / unload
    pw = PowerAllocation(p_s=p_s, p_r=p_r)
    pw = restore_feasibility(scn, traj, pw)
    return traj, pw


def data_ferry(scn: Scenario,
               load_slot_sweep: Optional[range] = None) -> FerryResult:
    """Best load/fly/unload split, swept over the loading-phase length."""
    scn = _free_endpoints(scn)
    n = scn.n_slots
    transit = transit_slot_count(scn)
    max_load = n - transit - 1
    if max_load < 1:
        traj = _constant_traj(scn, scn.alice_xy)
        return FerryResult(
            traj=traj, pw=model.zero_power_allocation(scn), objective=0.0,
            load_slots=0,
            diagnostic=(f"transit needs {transit} of {n} slots; no time "
                        "left to load and unload"))
    sweep = load_slot_sweep or range(1, max_load + 1)
    best: Optional[FerryResult] = None
    for n1 in sweep:
        traj, pw = ferry_plan(scn, n1)
        obj = model.secrecy_sum(scn, traj, pw)
        if best is None or obj > best.objective:
            best = FerryResult(traj=traj, pw=pw, objective=obj, load_slots=n1)
    return best
