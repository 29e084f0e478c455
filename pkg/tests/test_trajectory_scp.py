"""Sequential convex trajectory optimization at fixed powers."""
import numpy as np
import pytest

from conftest import (random_feasible_trajectory, random_power,
                      random_scenario, small_scenario)
from secrelay import model
from secrelay.model import PowerAllocation, Scenario, Trajectory
from secrelay.solver import solve, verify_derivatives
from secrelay.trajectory_scp import (build_subproblem, distance_lower_bounds,
                                     initial_trajectory, make_iterate,
                                     rate_lower_bounds, restore_feasibility,
                                     scp_optimize)


class TestInitialTrajectory:
    def test_fixed_endpoints_equally_spaced(self):
        scn = small_scenario(n_slots=4, start_xy=[200.0, -100.0],
                             end_xy=[1800.0, -100.0], v_max=400.0)
        traj = initial_trajectory(scn)
        t = np.arange(1, 5) / 5.0
        want = np.stack([200.0 + t * 1600.0, np.full(4, -100.0)], axis=1)
        np.testing.assert_allclose(traj.xy, want, atol=1e-9)
        assert model.check_mobility(scn, traj).feasible

    def test_start_equals_end_constant(self):
        scn = small_scenario(n_slots=5, start_xy=[30.0, 40.0],
                             end_xy=[30.0, 40.0])
        traj = initial_trajectory(scn)
        np.testing.assert_allclose(traj.xy, np.tile([30.0, 40.0], (5, 1)))

    def test_unreachable_endpoints_error(self):
        scn = small_scenario(n_slots=4, v_max=10.0, start_xy=[0.0, 0.0],
                             end_xy=[1000.0, 0.0])
        with pytest.raises(ValueError):
            initial_trajectory(scn)

    def test_free_endpoints_hover_midway(self):
        scn = small_scenario()
        traj = initial_trajectory(scn)
        mid = 0.5 * (scn.alice_xy + scn.bob_xy)
        np.testing.assert_allclose(traj.xy, np.tile(mid, (scn.n_slots, 1)))


class TestRateLowerBounds:
    def _setup(self, rng):
        scn = random_scenario(rng)
        traj = random_feasible_trajectory(rng, scn)
        pw = random_power(rng, scn)
        return scn, make_iterate(scn, traj, pw), pw

    def test_equality_at_zero_displacement(self, rng):
        scn, it, _ = self._setup(rng)
        z = np.zeros(scn.n_slots)
        relay_lb, bob_lb = rate_lower_bounds(scn, it, z, z)
        np.testing.assert_allclose(relay_lb, it.r_relay, rtol=1e-12,
                                   atol=1e-12)
        np.testing.assert_allclose(bob_lb, it.r_bob, rtol=1e-12, atol=1e-12)

    def test_soundness_random_draws(self, rng):
        # 10^4 (point, displacement) draws: bound never above the truth.
        for _ in range(10):
            scn, it, pw = self._setup(rng)
            v = scn.slot_travel
            for _ in range(1000 // scn.n_slots + 1):
                delta = rng.uniform(-v, v, scn.n_slots)
                xi = rng.uniform(-v, v, scn.n_slots)
                relay_lb, bob_lb = rate_lower_bounds(scn, it, delta, xi)
                moved = Trajectory(it.traj.xy + np.stack([delta, xi], axis=1))
                rp = model.rate_profile(scn, moved, pw)
                assert np.all(relay_lb <= rp.r_relay + 1e-9 * (1 + rp.r_relay))
                assert np.all(bob_lb <= rp.r_bob + 1e-9 * (1 + rp.r_bob))

    def test_gradient_match_at_zero(self, rng):
        scn, it, pw = self._setup(rng)
        h = 1e-5 * (1.0 + float(np.max(np.abs(it.traj.xy))))
        for axis in (0, 1):
            e = np.zeros((scn.n_slots, 2))
            e[:, axis] = h
            rp_p = model.rate_profile(scn, Trajectory(it.traj.xy + e), pw)
            rp_m = model.rate_profile(scn, Trajectory(it.traj.xy - e), pw)
            for lb_idx, (true_p, true_m) in enumerate(
                    [(rp_p.r_relay, rp_m.r_relay), (rp_p.r_bob, rp_m.r_bob)]):
                fd = (true_p - true_m) / (2 * h)
                step = np.zeros(scn.n_slots)
                step[:] = h
                zero = np.zeros(scn.n_slots)
                args_p = (step, zero) if axis == 0 else (zero, step)
                args_m = (-step, zero) if axis == 0 else (zero, -step)
                lb_p = rate_lower_bounds(scn, it, *args_p)[lb_idx]
                lb_m = rate_lower_bounds(scn, it, *args_m)[lb_idx]
                an = (lb_p - lb_m) / (2 * h)
                scale = 1.0 + np.abs(fd)
                assert np.all(np.abs(an - fd) <= 1e-5 * scale)


class TestDistanceLowerBounds:
    def test_equality_and_soundness(self, rng):
        for _ in range(10):
            scn = random_scenario(rng)
            it = make_iterate(scn, random_feasible_trajectory(rng, scn),
                              random_power(rng, scn))
            z = np.zeros(scn.n_slots)
            zeta_lb, eta_lb = distance_lower_bounds(scn, it, z, z)
            np.testing.assert_allclose(zeta_lb, it.zeta, rtol=1e-12)
            np.testing.assert_allclose(eta_lb, it.eta, rtol=1e-12)
            v = scn.slot_travel
            for _ in range(1000 // scn.n_slots + 1):
                delta = rng.uniform(-v, v, scn.n_slots)
                xi = rng.uniform(-v, v, scn.n_slots)
                zeta_lb, eta_lb = distance_lower_bounds(scn, it, delta, xi)
                moved = it.traj.xy + np.stack([delta, xi], axis=1)
                zeta = np.sum((scn.eve_xy - moved) ** 2, axis=1)
                eta = np.sum((scn.bob_xy - moved) ** 2, axis=1)
                assert np.all(zeta_lb <= zeta + 1e-9 * (1 + zeta))
                assert np.all(eta_lb <= eta + 1e-9 * (1 + eta))

    def test_zero_at_eve(self):
        scn = small_scenario(n_slots=2)
        traj = Trajectory(np.tile(scn.eve_xy, (2, 1)))
        it = make_iterate(scn, traj, model.zero_power_allocation(scn))
        zeta_lb, _ = distance_lower_bounds(scn, it, np.zeros(2), np.zeros(2))
        np.testing.assert_allclose(zeta_lb, 0.0, atol=1e-9)


class TestSubproblem:
    def test_silent_relay_constant_objective(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        pw = PowerAllocation(p_s=np.append(np.full(scn.n_slots - 1, 0.01),
                                           0.0),
                             p_r=np.zeros(scn.n_slots))
        prog = build_subproblem(scn, pw, make_iterate(scn, traj, pw))
        vals = {prog.objective(rng.uniform(-0.5, 0.5, prog.dim))
                for _ in range(5)}
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in vals)

    def test_tangency_and_base_feasibility(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        pw = restore_feasibility(scn, traj,
                                 model.equal_power_allocation(scn))
        it = make_iterate(scn, traj, pw)
        prog = build_subproblem(scn, pw, it)
        # Base point: zero displacement, slacks at their affine bounds.
        z0 = np.zeros(prog.dim)
        act = np.flatnonzero(it.gamma_r[1:] > 0.0) + 1
        h2 = scn.altitude_h ** 2
        na = act.size
        z0[2 * scn.n_slots:2 * scn.n_slots + na] = it.eta[act] / h2
        z0[2 * scn.n_slots + na:] = it.zeta[act] / h2
        # Surrogate objective (negated) equals the true secrecy sum.
        assert -prog.objective(z0) == pytest.approx(it.objective, abs=1e-9)
        # All surrogate constraints hold at the base point, within the
        # model feasibility tolerance the base point itself was checked at.
        for block in prog.ineqs:
            assert np.all(block.value(z0) <= 2e-6)

    def test_step_toward_bob_helps(self):
        scn = small_scenario(eve_xy=[5000.0, 5000.0])  # Eve far away
        traj = Trajectory(np.tile([200.0, 0.0], (scn.n_slots, 1)))
        pw = restore_feasibility(scn, traj,
                                 model.equal_power_allocation(scn))
        it = make_iterate(scn, traj, pw)
        prog = build_subproblem(scn, pw, it)
        z_stay = np.zeros(prog.dim)
        act = np.flatnonzero(it.gamma_r[1:] > 0.0) + 1
        h2 = scn.altitude_h ** 2
        na = act.size
        for z in (z_stay,):
            z[2 * scn.n_slots:2 * scn.n_slots + na] = it.eta[act] / h2
            z[2 * scn.n_slots + na:] = it.zeta[act] / h2
        z_move = z_stay.copy()
        # Displace the last slot toward Bob by 10 m (scaled by H).
        z_move[scn.n_slots - 1] = 10.0 / scn.altitude_h
        assert prog.objective(z_move) < prog.objective(z_stay)

    def test_derivatives(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        pw = restore_feasibility(scn, traj,
                                 model.equal_power_allocation(scn))
        prog = build_subproblem(scn, pw, make_iterate(scn, traj, pw))
        z0 = np.asarray(prog.strictly_feasible_start)
        for _ in range(10):
            z = z0 + rng.uniform(-0.05, 0.05, prog.dim)
            z[2 * scn.n_slots:] = np.maximum(z[2 * scn.n_slots:], 0.05)
            assert verify_derivatives(prog, z) < 1e-5

    def test_infeasible_base_point_rejected(self):
        scn = small_scenario()
        traj = Trajectory(np.tile([200.0, 0.0], (scn.n_slots, 1)))
        pw = model.equal_power_allocation(scn)
        if model.check_causality(scn, traj, pw).feasible:
            pytest.skip("equal power happens to be causal here")
        with pytest.raises(ValueError):
            build_subproblem(scn, pw, make_iterate(scn, traj, pw))


class TestRestoreFeasibility:
    def test_feasible_unchanged(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        pw = PowerAllocation(
            p_s=np.append(np.full(scn.n_slots - 1, 0.01), 0.0),
            p_r=np.zeros(scn.n_slots))
        assert restore_feasibility(scn, traj, pw) is pw

    def test_overdriven_relay_scaled_back(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        base = restore_feasibility(scn, traj,
                                   model.equal_power_allocation(scn))
        hot = PowerAllocation(p_s=base.p_s, p_r=base.p_r * 10.0)
        if model.check_causality(scn, traj, hot).feasible:
            pytest.skip("tenfold relay power still causal")
        fixed = restore_feasibility(scn, traj, hot)
        assert model.check_causality(scn, traj, fixed).feasible
        assert np.all(fixed.p_r <= hot.p_r)

    def test_silent_source_silences_relay(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        n = scn.n_slots
        p_r = np.append(0.0, np.full(n - 1, 0.01))
        pw = PowerAllocation(p_s=np.zeros(n), p_r=p_r)
        fixed = restore_feasibility(scn, traj, pw)
        # With nothing received, the relay is silenced down to the
        # causality tolerance: every transmit rate is negligible.
        rp = model.rate_profile(scn, traj, fixed)
        assert np.all(rp.r_bob <= 2e-6)
        assert np.all(rp.r_eve <= 2e-6)
        assert model.check_causality(scn, traj, fixed).feasible


def _triple_oracle(scn, pw, cand, v_eff, tol=1e-6):
    """Exhaustive best value over mobility-feasible candidate triples for
    a 3-slot scenario, vectorized; the per-triple power treatment mirrors
    restore_feasibility (40-step bisection on a relay power scale)."""
    h2 = scn.altitude_h ** 2

    def gains(term):
        d2 = h2 + np.sum((cand - term) ** 2, axis=1)
        return scn.ref_snr / d2

    g_ar = gains(scn.alice_xy)
    g_rd = gains(scn.bob_xy)
    g_re = gains(scn.eve_xy)

    # Enumerate feasible triples as index arrays.
    k = cand.shape[0]
    dist = np.sqrt(np.sum((cand[:, None] - cand[None]) ** 2, axis=2))
    ok_start = np.linalg.norm(cand - scn.start_xy, axis=1) <= v_eff
    ok_end = np.linalg.norm(cand - scn.end_xy, axis=1) <= v_eff
    ia, ib = np.nonzero((dist <= v_eff) & ok_start[:, None])
    best = -np.inf
    r1 = np.log2(1.0 + pw.p_s[0] * g_ar)
    r2 = np.log2(1.0 + pw.p_s[1] * g_ar)
    for c_idx in np.flatnonzero(ok_end):
        mask = dist[ib, c_idx] <= v_eff
        if not np.any(mask):
            continue
        a, b = ia[mask], ib[mask]
        recv1 = r1[a]
        recv2 = recv1 + r2[b]
        gd2, ge2 = g_rd[b], g_re[b]
        gd3, ge3 = g_rd[c_idx], g_re[c_idx]

        alpha = np.ones(a.size)
        needs = ~_gaps_ok_subset(pw, recv1, recv2, gd2, ge2, gd3, ge3,
                                 alpha, tol)
        if np.any(needs):
            lo = np.zeros(np.count_nonzero(needs))
            hi = np.ones_like(lo)
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                sub_ok = _gaps_ok_subset(pw, recv1[needs], recv2[needs],
                                         gd2[needs], ge2[needs], gd3, ge3,
                                         mid, tol)
                lo = np.where(sub_ok, mid, lo)
                hi = np.where(sub_ok, hi, mid)
            alpha[needs] = lo
        b2 = np.log2(1.0 + alpha * pw.p_r[1] * gd2)
        b3 = np.log2(1.0 + alpha * pw.p_r[2] * gd3)
        e2 = np.log2(1.0 + alpha * pw.p_r[1] * ge2)
        e3 = np.log2(1.0 + alpha * pw.p_r[2] * ge3)
        vals = (b2 - e2) + (b3 - e3)
        best = max(best, float(np.max(vals)))
    return best


def _gaps_ok_subset(pw, recv1, recv2, gd2, ge2, gd3, ge3, alpha, tol):
    b2 = np.log2(1.0 + alpha * pw.p_r[1] * gd2)
    b3 = np.log2(1.0 + alpha * pw.p_r[2] * gd3)
    e2 = np.log2(1.0 + alpha * pw.p_r[1] * ge2)
    e3 = np.log2(1.0 + alpha * pw.p_r[2] * ge3)
    worst = np.maximum.reduce([b2 - recv1, b2 + b3 - recv2,
                               e2 - recv1, e2 + e3 - recv2])
    return worst <= tol


class TestScpOptimize:
    def test_silent_relay_returns_start(self, rng):
        scn = small_scenario()
        traj = random_feasible_trajectory(rng, scn)
        pw = PowerAllocation(
            p_s=np.append(np.full(scn.n_slots - 1, 0.01), 0.0),
            p_r=np.zeros(scn.n_slots))
        out, report = scp_optimize(scn, pw, traj)
        assert out is traj
        assert report.status == "converged"
        assert report.final_objective == 0.0

    def test_monotone_feasible_ascent(self, rng):
        for _ in range(3):
            scn = random_scenario(rng, n_slots=8)
            traj = random_feasible_trajectory(rng, scn)
            pw = restore_feasibility(scn, traj,
                                     model.equal_power_allocation(scn))
            out, report = scp_optimize(scn, pw, traj)
            objs = report.objectives
            assert all(b >= a - 1e-6 for a, b in zip(objs, objs[1:]))
            assert model.check_mobility(scn, out).feasible
            assert model.check_causality(scn, out, pw).feasible
            for rec in report.iterations:
                if rec.feasible is not None:
                    assert rec.feasible

    def test_three_slot_grid_restriction_vs_oracle(self):
        # Post-hoc comparison: snap the SCP trajectory onto a 21x21 grid
        # per slot; the snapped value cannot beat the exhaustive optimum
        # over the same grid (mobility relaxed by the snap radius so the
        # snapped trajectory stays inside the enumerated set).
        scn = Scenario(bob_xy=[40.0, 0.0], eve_xy=[20.0, 8.0],
                       altitude_h=10.0, n_slots=3, slot_len=1.0, v_max=15.0,
                       ref_snr=4e4, p_bar_s=0.02, p_bar_r=0.02,
                       start_xy=[5.0, 0.0], end_xy=[35.0, 0.0])
        traj0 = initial_trajectory(scn)
        pw = restore_feasibility(scn, traj0,
                                 model.equal_power_allocation(scn))
        out, report = scp_optimize(scn, pw, traj0)
        assert report.final_objective >= report.objectives[0] - 1e-9

        xs = np.linspace(0.0, 40.0, 21)
        ys = np.linspace(-10.0, 10.0, 21)
        cand = np.array([(x, y) for x in xs for y in ys])
        snap_r = float(np.hypot(xs[1] - xs[0], ys[1] - ys[0])) / 2.0
        v_eff = scn.slot_travel + 2.0 * snap_r + 1e-9

        def value(xy_triple):
            """Deterministic value of a position triple: fixed-power
            profile with the relay side rescaled to restore causality."""
            traj = Trajectory(np.asarray(xy_triple))
            pw_c = restore_feasibility(scn, traj, pw)
            return model.secrecy_sum(scn, traj, pw_c)

        def mobility_ok(xy, v):
            hops = [np.linalg.norm(xy[1] - xy[0]),
                    np.linalg.norm(xy[2] - xy[1]),
                    np.linalg.norm(xy[0] - scn.start_xy),
                    np.linalg.norm(xy[2] - scn.end_xy)]
            return max(hops) <= v

        best = _triple_oracle(scn, pw, cand, v_eff)

        snapped = cand[np.argmin(
            np.sum((out.xy[:, None, :] - cand[None]) ** 2, axis=2), axis=1)]
        assert mobility_ok(snapped, v_eff)
        assert value(snapped) <= best + 1e-9

    def test_iteration_callback_sees_each_iterate(self, rng):
        scn = random_scenario(rng, n_slots=6)
        traj = random_feasible_trajectory(rng, scn)
        pw = restore_feasibility(scn, traj,
                                 model.equal_power_allocation(scn))
        seen = []
        out, report = scp_optimize(scn, pw, traj,
                                   iteration_callback=seen.append)
        assert len(seen) == len(report.iterations) - 1
        if seen:
            np.testing.assert_array_equal(seen[-1].xy, out.xy)
