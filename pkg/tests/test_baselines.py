"""Static-relay and data-ferry benchmark schemes."""
import dataclasses

import numpy as np
import pytest

from conftest import random_scenario, small_scenario
from secrelay import model
from secrelay.ao import ao_optimize
from secrelay.baselines import (StaticGrid, data_ferry, ferry_plan,
                                static_relay_best, transit_slot_count)
from secrelay.model import Scenario


def _free(scn):
    return dataclasses.replace(scn, start_xy=None, end_xy=None)


class TestStaticRelay:
    def test_single_point_grid(self):
        scn = small_scenario(n_slots=6)
        grid = StaticGrid(x_min=300.0, x_max=300.0, y_min=-50.0, y_max=-50.0,
                          nx=1, ny=1, refine_halvings=0)
        res = static_relay_best(scn, grid=grid)
        np.testing.assert_allclose(res.location, [300.0, -50.0])
        traj = np.tile(res.location, (scn.n_slots, 1))
        assert res.objective == pytest.approx(
            model.secrecy_sum(scn, model.Trajectory(traj), res.pw),
            abs=1e-9)

    def test_output_feasible(self):
        scn = small_scenario(n_slots=6)
        res = static_relay_best(scn)
        traj = model.Trajectory(np.tile(res.location, (scn.n_slots, 1)))
        checks = model.check_all(_free(scn), traj, res.pw)
        assert all(v.feasible for v in checks.values())

    def test_eve_under_bob_dominated_by_mobile(self):
        # Eve on Bob's ground projection: hardly any secrecy anywhere
        # static; the mobile relay must do at least as well.
        scn = small_scenario(n_slots=6, eve_xy=[400.0, 0.0])
        res = static_relay_best(scn)
        _, _, rep = ao_optimize(_free(scn))
        assert rep.final_objective >= res.objective - 1e-6

    def test_pruning_matches_exhaustive_scan(self):
        # The bound-ordered scan with pruning returns the same winner as
        # evaluating every grid cell.
        scn = small_scenario(n_slots=5)
        grid = StaticGrid(x_min=0.0, x_max=400.0, y_min=-120.0, y_max=120.0,
                          nx=7, ny=5, refine_halvings=0)
        res = static_relay_best(scn, grid=grid)
        from secrelay.baselines import _solve_location
        from secrelay.power_dc import DcOptions
        best = 0.0
        opts = DcOptions(rel_tol=1e-4, max_iter=40)
        for x in np.linspace(0.0, 400.0, 7):
            for y in np.linspace(-120.0, 120.0, 5):
                obj, _ = _solve_location(_free(scn), [x, y], opts)
                best = max(best, obj)
        assert res.objective >= best - 1e-6


class TestDataFerry:
    def test_transit_too_long_zero(self):
        scn = small_scenario(n_slots=4, v_max=40.0)  # needs 10 slots
        res = data_ferry(scn)
        assert res.objective == 0.0
        assert res.load_slots == 0
        assert res.diagnostic != ""

    def test_eve_at_bob_zero(self):
        scn = small_scenario(n_slots=8, eve_xy=[400.0, 0.0], v_max=100.0)
        res = data_ferry(scn)
        assert res.objective == pytest.approx(0.0, abs=1e-9)

    def test_output_feasible(self):
        scn = small_scenario(n_slots=10, v_max=100.0)
        res = data_ferry(scn)
        checks = model.check_all(_free(scn), res.traj, res.pw)
        assert all(v.feasible for v in checks.values())

    def test_sweep_is_exhaustive(self):
        # The returned split matches re-running every admissible split.
        scn = small_scenario(n_slots=10, v_max=100.0)
        res = data_ferry(scn)
        scn_f = _free(scn)
        transit = transit_slot_count(scn_f)
        best = -np.inf
        best_n1 = None
        for n1 in range(1, scn.n_slots - transit):
            traj, pw = ferry_plan(scn_f, n1)
            obj = model.secrecy_sum(scn_f, traj, pw)
            if obj > best:
                best, best_n1 = obj, n1
        assert res.objective == pytest.approx(best, abs=1e-12)
        assert res.load_slots == best_n1

    def test_transit_slots_silent(self):
        scn = small_scenario(n_slots=10, v_max=100.0)
        scn_f = _free(scn)
        transit = transit_slot_count(scn_f)
        traj, pw = ferry_plan(scn_f, 3)
        sl = slice(3, 3 + transit)
        assert np.all(pw.p_s[sl] == 0.0)
        assert np.all(pw.p_r[sl] == 0.0)
        np.testing.assert_allclose(traj.xy[0], scn.alice_xy)
        np.testing.assert_allclose(traj.xy[-1], scn.bob_xy)


class TestDominance:
    def test_ao_beats_both_baselines(self, rng):
        # With a hover at the static winner and the ferry plan among the
        # starting trajectories, the joint optimizer must match or beat
        # both benchmark schemes.
        from secrelay.ao import default_starts
        for _ in range(3):
            scn = random_scenario(rng, n_slots=8)
            st = static_relay_best(scn)
            fe = data_ferry(scn)
            hover = model.Trajectory(np.tile(st.location, (scn.n_slots, 1)))
            starts = default_starts(scn) + [hover]
            _, _, rep = ao_optimize(scn, init_trajs=starts)
            assert rep.final_objective >= st.objective - 1e-6
            assert rep.final_objective >= fe.objective - 1e-6
