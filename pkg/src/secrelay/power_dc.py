"""Power allocation with the trajectory held fixed.

The secrecy objective is a difference of concave functions of the relay
power.  Each iteration linearizes the subtracted (eavesdropper) term and
the concave left-hand sides of the causality prefixes at the current
allocation, solves the resulting convex program, and repeats.  The
surrogate is tight at the linearization point and minorizes the true
objective, so the true objective ascends monotonically and the limit is
a KKT point of the power allocation problem.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model
from .model import PowerAllocation, Scenario, Trajectory
from .report import RunReport
from .solver import (ConstraintBlock, SmoothConvexProgram, SolverOptions,
                     kkt_residual, solve)

LN2 = float(np.log(2.0))


class StageFailure(RuntimeError):
    """Inner solver failed; carries the last consistent iterate."""

    def __init__(self, message: str, last_iterate, report: RunReport):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.report = report


@dataclass
class DcOptions:
    rel_tol: float = 1e-5
    max_iter: int = 100
    kkt_tol: float = 1e-5
    feas_tol: float = 1e-6
    # Subproblems are solved well below kkt_tol so the outer loop can
    # keep certifying progress without hitting the solver's noise floor.
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(tol=1e-8))


@dataclass
class _Pieces:
    """Channel slices over the active power slots."""

    n: int
    gar: np.ndarray   # alice->relay gain, slots 1..N-1
    grd: np.ndarray   # relay->bob gain,   slots 2..N
    gre: np.ndarray   # relay->eve gain,   slots 2..N
    u_s: float        # variable scale for source powers
    u_r: float        # variable scale for relay powers
    tri: np.ndarray   # (N-1, N-1) lower-triangular ones (prefix operator)


def _pieces(scn: Scenario, traj: Trajectory) -> _Pieces:
    ch = model.channel_state(scn, traj)
    n = scn.n_slots
    u_s = max(n * scn.p_bar_s / (n - 1), 1e-9)
    u_r = max(n * scn.p_bar_r / (n - 1), 1e-9)
    return _Pieces(
        n=n, gar=ch.gamma_ar[:-1], grd=ch.gamma_rd[1:], gre=ch.gamma_re[1:],
        u_s=u_s, u_r=u_r, tri=np.tril(np.ones((n - 1, n - 1))))


def _split(pc: _Pieces, z: np.ndarray):
    k = pc.n - 1
    return pc.u_s * z[:k], pc.u_r * z[k:]


def _pw_from_z(pc: _Pieces, z: np.ndarray) -> PowerAllocation:
    ps, pr = _split(pc, np.maximum(z, 0.0))
    return PowerAllocation(p_s=np.append(ps, 0.0), p_r=np.insert(pr, 0, 0.0))


def _z_from_pw(pc: _Pieces, pw: PowerAllocation) -> np.ndarray:
    return np.concatenate([pw.p_s[:-1] / pc.u_s, pw.p_r[1:] / pc.u_r])


def _relay_rates(pc: _Pieces, ps: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + ps * pc.gar)


def _causality_block(pc: _Pieces, const: np.ndarray, coef: np.ndarray,
                     name: str) -> ConstraintBlock:
    """Prefix constraints: cumsum(const + coef*p_r) - cumsum(R_relay) <= 0."""
    k = pc.n - 1

    def value(z):
        ps, pr = _split(pc, z)
        lhs = np.cumsum(const + coef * pr)
        rhs = np.cumsum(_relay_rates(pc, ps))
        return lhs - rhs

    def jacobian(z):
        ps, _ = _split(pc, z)
        J = np.zeros((k, 2 * k))
        J[:, k:] = pc.tri * (coef * pc.u_r)
        d_ps = pc.gar / (LN2 * (1.0 + ps * pc.gar)) * pc.u_s
        J[:, :k] = -pc.tri * d_ps
        return J

    def hess_weighted(z, w):
        ps, _ = _split(pc, z)
        # Only the -log2(1+ps*gar) part curves; diagonal in the ps block.
        h = pc.gar ** 2 / (LN2 * (1.0 + ps * pc.gar) ** 2) * pc.u_s ** 2
        wsum = np.cumsum(w[::-1])[::-1]          # sum_{j >= i} w_j
        H = np.zeros((2 * k, 2 * k))
        H[np.arange(k), np.arange(k)] = wsum * h
        return H

    return ConstraintBlock(m=k, value=value, jacobian=jacobian,
                           hess_weighted=hess_weighted, name=name)


def _budget_block(pc: _Pieces, scn: Scenario) -> ConstraintBlock:
    k = pc.n - 1
    J = np.zeros((2, 2 * k))
    J[0, :k] = pc.u_s
    J[1, k:] = pc.u_r

    def value(z):
        ps, pr = _split(pc, z)
        return np.array([np.sum(ps) - scn.n_slots * scn.p_bar_s,
                         np.sum(pr) - scn.n_slots * scn.p_bar_r])

    return ConstraintBlock(m=2, value=value, jacobian=lambda z: J,
                           name="budgets")


def build_dc_surrogate(scn: Scenario, traj: Trajectory,
                       pw_k: PowerAllocation,
                       feas_tol: float = 1e-6) -> SmoothConvexProgram:
    """Convex surrogate of the power problem, linearized at pw_k.

    The decision vector stacks scaled source powers (slots 1..N-1) and
    scaled relay powers (slots 2..N); the scales are the equal-power
    per-slot levels, recoverable via the returned program's callbacks
    only through :func:`dc_allocate`.
    """
    checks = model.check_all(scn, traj, pw_k, tol=feas_tol)
    bad = [k for k, v in checks.items() if k != "mobility" and not v.feasible]
    if bad:
        raise ValueError(f"linearization point infeasible: {bad}")
    pc = _pieces(scn, traj)
    return _build_surrogate(scn, pc, pw_k)


def _build_surrogate(scn: Scenario, pc: _Pieces,
                     pw_k: PowerAllocation) -> SmoothConvexProgram:
    k = pc.n - 1
    prk = pw_k.p_r[1:]
    c_d = pc.grd / (LN2 * (1.0 + prk * pc.grd))
    c_e = pc.gre / (LN2 * (1.0 + prk * pc.gre))
    bob_const = np.log2(1.0 + prk * pc.grd) - c_d * prk
    eve_const = np.log2(1.0 + prk * pc.gre) - c_e * prk
    eve_lin_total = float(np.sum(eve_const))

    def objective(z):
        _, pr = _split(pc, z)
        bob = np.sum(np.log2(1.0 + pr * pc.grd))
        eve_lin = eve_lin_total + np.sum(c_e * pr)
        return -(bob - eve_lin)

    def gradient(z):
        _, pr = _split(pc, z)
        g = np.zeros(2 * k)
        g[k:] = (-pc.grd / (LN2 * (1.0 + pr * pc.grd)) + c_e) * pc.u_r
        return g

    def hessian(z):
        _, pr = _split(pc, z)
        H = np.zeros((2 * k, 2 * k))
        d = pc.grd ** 2 / (LN2 * (1.0 + pr * pc.grd) ** 2) * pc.u_r ** 2
        H[np.arange(k, 2 * k), np.arange(k, 2 * k)] = d
        return H

    start = _strict_start(scn, pc)
    return SmoothConvexProgram(
        dim=2 * k, objective=objective, gradient=gradient, hessian=hessian,
        ineqs=[
            _causality_block(pc, bob_const, c_d, "bob_causality"),
            _causality_block(pc, eve_const, c_e, "eve_causality"),
            _budget_block(pc, scn),
        ],
        lb=np.zeros(2 * k),
        strictly_feasible_start=start,
    )


def _strict_start(scn: Scenario, pc: _Pieces) -> Optional[np.ndarray]:
    # Near-equal source power, tiny relay power: strictly inside the
    # budgets and (usually) the linearized causality prefixes.
    k = pc.n - 1
    z = np.concatenate([np.full(k, 0.9), np.full(k, 1e-6)])
    return z


def _original_power_program(scn: Scenario, pc: _Pieces) -> SmoothConvexProgram:
    """The true (nonconvex) power problem, for KKT certification only."""
    k = pc.n - 1

    def objective(z):
        _, pr = _split(pc, z)
        return -float(np.sum(np.log2(1.0 + pr * pc.grd)
                             - np.log2(1.0 + pr * pc.gre)))

    def gradient(z):
        _, pr = _split(pc, z)
        g = np.zeros(2 * k)
        g[k:] = (-pc.grd / (LN2 * (1.0 + pr * pc.grd))
                 + pc.gre / (LN2 * (1.0 + pr * pc.gre))) * pc.u_r
        return g

    def caus_block(gain, name):
        def value(z):
            ps, pr = _split(pc, z)
            return (np.cumsum(np.log2(1.0 + pr * gain))
                    - np.cumsum(_relay_rates(pc, ps)))

        def jacobian(z):
            ps, pr = _split(pc, z)
            J = np.zeros((k, 2 * k))
            J[:, k:] = pc.tri * (gain / (LN2 * (1.0 + pr * gain)) * pc.u_r)
            J[:, :k] = -pc.tri * (pc.gar / (LN2 * (1.0 + ps * pc.gar)) * pc.u_s)
            return J

        return ConstraintBlock(m=k, value=value, jacobian=jacobian, name=name)

    return SmoothConvexProgram(
        dim=2 * k, objective=objective, gradient=gradient,
        ineqs=[caus_block(pc.grd, "bob_causality"),
               caus_block(pc.gre, "eve_causality"),
               _budget_block(pc, scn)],
        lb=np.zeros(2 * k),
    )


def default_power_start(scn: Scenario) -> PowerAllocation:
    """Always-feasible start: silent relay, equal source power."""
    n = scn.n_slots
    p_s = np.full(n, n * scn.p_bar_s / (n - 1))
    p_s[-1] = 0.0
    return PowerAllocation(p_s=p_s, p_r=np.zeros(n))


def dc_allocate(scn: Scenario, traj: Trajectory,
                pw_0: Optional[PowerAllocation] = None,
                opts: Optional[DcOptions] = None
                ) -> tuple[PowerAllocation, RunReport]:
    """Ascend the secrecy rate over the power allocations at fixed traj."""
    opts = opts or DcOptions()
    report = RunReport(stage="power_dc")
    t0 = time.perf_counter()
    pw = pw_0 if pw_0 is not None else default_power_start(scn)

    if scn.p_bar_s <= 0.0 or scn.p_bar_r <= 0.0:
        pw = model.zero_power_allocation(scn)
        report.add(0.0, kkt_residual=0.0, feasible=True)
        report.status = "converged"
        report.total_time = time.perf_counter() - t0
        return pw, report

    checks = model.check_all(scn, traj, pw, tol=opts.feas_tol)
    if not (checks["causality"].feasible and checks["power_budget"].feasible):
        raise ValueError("initial power allocation infeasible")

    pc = _pieces(scn, traj)
    orig = _original_power_program(scn, pc)
    obj = model.secrecy_sum(scn, traj, pw)
    report.add(obj, feasible=True)
    report.status = "max_iter"
    for it in range(opts.max_iter):
        prog = _build_surrogate(scn, pc, pw)
        res = solve(prog, opts.solver)
        if res.status != "optimal":
            report.status = f"solver_{res.status}"
            report.total_time = time.perf_counter() - t0
            raise StageFailure(
                f"power subproblem solve failed ({res.status})", pw, report)
        pw_new = _pw_from_z(pc, res.x_opt)
        obj_new = model.secrecy_sum(scn, traj, pw_new)
        if obj_new < obj - 1e-9:
            # Solver-tolerance hiccup; keep the better point and stop.
            report.status = "converged"
            break
        z_new = _z_from_pw(pc, pw_new)
        duals = np.concatenate([res.duals, res.bound_duals])
        kkt_orig = kkt_residual(orig, z_new, duals)
        feas = model.check_all(scn, traj, pw_new, tol=opts.feas_tol)
        rel = abs(obj_new - obj) / max(abs(obj_new), 1e-10)
        pw, obj = pw_new, obj_new
        report.add(obj, kkt_residual=kkt_orig,
                   feasible=all(v.feasible for k, v in feas.items()
                                if k != "mobility"),
                   subproblem_kkt=res.kkt_residual,
                   subproblem_iters=res.iterations)
        if rel < opts.rel_tol:
            if kkt_orig <= opts.kkt_tol:
                report.status = "converged"
                break
            if rel < 1e-13:
                # Iterates stopped moving without certifying; report as is.
                report.status = "stalled"
                break
    report.total_time = time.perf_counter() - t0
    return pw, report
