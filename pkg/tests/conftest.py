"""Shared helpers for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from secrelay.model import PowerAllocation, Scenario, Trajectory


def small_scenario(**overrides) -> Scenario:
    """A hand-sized instance with positive secrecy potential."""
    base = dict(bob_xy=[400.0, 0.0], eve_xy=[200.0, 60.0],
                altitude_h=50.0, n_slots=6, slot_len=1.0, v_max=80.0,
                ref_snr=1e7, p_bar_s=0.01, p_bar_r=0.01)
    base.update(overrides)
    return Scenario(**base)


def random_scenario(rng: np.random.Generator, n_slots=None,
                    free_endpoints=True) -> Scenario:
    n = int(n_slots if n_slots is not None else rng.integers(4, 12))
    d = float(rng.uniform(200.0, 900.0))
    eve = [float(rng.uniform(0.2 * d, 0.8 * d)),
           float(rng.uniform(-0.3 * d, 0.3 * d))]
    kw = {}
    if not free_endpoints:
        kw = {"start_xy": [0.1 * d, 0.0], "end_xy": [0.9 * d, 0.0]}
    return Scenario(
        bob_xy=[d, 0.0], eve_xy=eve,
        altitude_h=float(rng.uniform(40.0, 150.0)),
        n_slots=n, slot_len=1.0,
        v_max=float(rng.uniform(0.3, 1.2)) * d / n * 3,
        ref_snr=float(10.0 ** rng.uniform(6.5, 8.5)),
        p_bar_s=float(10.0 ** rng.uniform(-3.0, -1.5)),
        p_bar_r=float(10.0 ** rng.uniform(-3.0, -1.5)),
        **kw)


def random_feasible_trajectory(rng: np.random.Generator,
                               scn: Scenario) -> Trajectory:
    """Random walk respecting the mobility constraints."""
    v = scn.slot_travel
    if scn.start_xy is not None:
        p = scn.start_xy + rng.uniform(-v, v, 2) / 2.0
    else:
        p = rng.uniform(0.0, 1.0, 2) * (scn.bob_xy - scn.alice_xy)
    pts = [p]
    for _ in range(scn.n_slots - 1):
        step = rng.uniform(-1.0, 1.0, 2)
        step *= rng.uniform(0.0, 0.95) * v / max(np.linalg.norm(step), 1e-12)
        pts.append(pts[-1] + step)
    return Trajectory(np.array(pts))


def random_power(rng: np.random.Generator, scn: Scenario) -> PowerAllocation:
    n = scn.n_slots
    p_s = rng.uniform(0.0, 2.0 * scn.p_bar_s, n)
    p_r = rng.uniform(0.0, 2.0 * scn.p_bar_r, n)
    p_s[-1] = 0.0
    p_r[0] = 0.0
    return PowerAllocation(p_s=p_s, p_r=p_r)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
