"""Problem instance, channel model, rates and feasibility checks.

All rates are in bits/s/Hz (base-2 logs), all powers in watts, all
distances in meters.  The channel is free-space path loss: the received
SNR on a link of length d with transmit power p is p * ref_snr / d**2,
where ref_snr is the linear SNR at 1 m reference distance with unit
transmit power.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_FEAS_TOL = 1e-6


def _as_xy(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    ``start_xy`` / ``end_xy`` set to None mean the corresponding endpoint
    is free (the relay's sole mission is communication, so its launch
    and/or landing points are optimized away).
    """

    bob_xy: np.ndarray
    eve_xy: np.ndarray
    altitude_h: float
    n_slots: int
    slot_len: float
    v_max: float
    ref_snr: float
    p_bar_s: float
    p_bar_r: float
    alice_xy: np.ndarray = field(default_factory=lambda: np.zeros(2))
    start_xy: Optional[np.ndarray] = None
    end_xy: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "alice_xy", _as_xy(self.alice_xy, "alice_xy"))
        object.__setattr__(self, "bob_xy", _as_xy(self.bob_xy, "bob_xy"))
        object.__setattr__(self, "eve_xy", _as_xy(self.eve_xy, "eve_xy"))
        if self.start_xy is not None:
            object.__setattr__(self, "start_xy", _as_xy(self.start_xy, "start_xy"))
        if self.end_xy is not None:
            object.__setattr__(self, "end_xy", _as_xy(self.end_xy, "end_xy"))
        if int(self.n_slots) != self.n_slots or self.n_slots < 2:
            raise ValueError("n_slots must be an integer >= 2")
        object.__setattr__(self, "n_slots", int(self.n_slots))
        for name in ("slot_len", "altitude_h", "v_max", "ref_snr"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0")
        if self.p_bar_s < 0 or self.p_bar_r < 0:
            raise ValueError("average power limits must be >= 0")
        if np.allclose(self.bob_xy, self.alice_xy):
            raise ValueError("bob_xy must differ from alice_xy")

    @property
    def horizon(self) -> float:
        """Total mission time T = N * slot_len, seconds."""
        return self.n_slots * self.slot_len

    @property
    def slot_travel(self) -> float:
        """Maximum distance coverable within one slot, meters."""
        return self.v_max * self.slot_len


@dataclass(frozen=True)
class Trajectory:
    """Per-slot horizontal UAV coordinates, shape (N, 2)."""

    xy: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.xy, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ValueError(f"xy must have shape (N, 2), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("trajectory coordinates must be finite")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "xy", a)

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.xy[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.xy[:, 1]


@dataclass(frozen=True)
class PowerAllocation:
    """Per-slot source and relay transmit powers, watts.

    Structurally, the source never transmits in the last slot and the
    relay never transmits in the first one (it has nothing to forward).
    """

    p_s: np.ndarray
    p_r: np.ndarray

    def __post_init__(self):
        ps = np.asarray(self.p_s, dtype=float).reshape(-1).copy()
        pr = np.asarray(self.p_r, dtype=float).reshape(-1).copy()
        if ps.shape != pr.shape:
            raise ValueError("p_s and p_r must have equal length")
        if not (np.all(np.isfinite(ps)) and np.all(np.isfinite(pr))):
            raise ValueError("powers must be finite")
        if np.any(ps < 0) or np.any(pr < 0):
            raise ValueError("powers must be nonnegative")
        if ps[-1] != 0.0:
            raise ValueError("source power in the last slot must be 0")
        if pr[0] != 0.0:
            raise ValueError("relay power in the first slot must be 0")
        ps.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "p_s", ps)
        object.__setattr__(self, "p_r", pr)

    def __len__(self) -> int:
        return self.p_s.shape[0]


def equal_power_allocation(scn: Scenario) -> PowerAllocation:
    """Spread the full budgets evenly over the active slots."""
    n = scn.n_slots
    p_s = np.full(n, n * scn.p_bar_s / (n - 1))
    p_s[-1] = 0.0
    p_r = np.full(n, n * scn.p_bar_r / (n - 1))
    p_r[0] = 0.0
    return PowerAllocation(p_s=p_s, p_r=p_r)


def zero_power_allocation(scn: Scenario) -> PowerAllocation:
    return PowerAllocation(p_s=np.zeros(scn.n_slots), p_r=np.zeros(scn.n_slots))


@dataclass(frozen=True)
class ChannelState:
    """Per-slot link distances and linear SNR-per-watt gains."""

    d_ar: np.ndarray
    d_rd: np.ndarray
    d_re: np.ndarray
    gamma_ar: np.ndarray
    gamma_rd: np.ndarray
    gamma_re: np.ndarray


@dataclass(frozen=True)
class RateProfile:
    """Per-slot rates (bits/s/Hz) and the aggregate secrecy rate."""

    r_relay: np.ndarray
    r_bob: np.ndarray
    r_eve: np.ndarray
    secrecy_sum: float
    secrecy_avg: float


@dataclass(frozen=True)
class FeasibilityVerdict:
    """Outcome of one constraint-family check.

    ``slacks`` maps a constraint label to the signed slack array or
    scalar; the sign convention is per check (see the check functions).
    ``worst`` is the most violated quantity (negative slack or positive
    gap), useful for reporting.
    """

    feasible: bool
    slacks: dict
    worst: float


def channel_state(scn: Scenario, traj: Trajectory) -> ChannelState:
    """Link distances and channel gains for every slot."""
    if len(traj) != scn.n_slots:
        raise ValueError(
            f"trajectory has {len(traj)} slots, scenario wants {scn.n_slots}")
    h2 = scn.altitude_h ** 2
    d_ar = np.sqrt(h2 + np.sum((traj.xy - scn.alice_xy) ** 2, axis=1))
    d_rd = np.sqrt(h2 + np.sum((traj.xy - scn.bob_xy) ** 2, axis=1))
    d_re = np.sqrt(h2 + np.sum((traj.xy - scn.eve_xy) ** 2, axis=1))
    return ChannelState(
        d_ar=d_ar, d_rd=d_rd, d_re=d_re,
        gamma_ar=scn.ref_snr / d_ar ** 2,
        gamma_rd=scn.ref_snr / d_rd ** 2,
        gamma_re=scn.ref_snr / d_re ** 2,
    )


def rate_profile(scn: Scenario, traj: Trajectory,
                 pw: PowerAllocation) -> RateProfile:
    """Per-slot reception rates and the achieved secrecy sum."""
    if len(pw) != scn.n_slots:
        raise ValueError(
            f"power allocation has {len(pw)} slots, scenario wants {scn.n_slots}")
    ch = channel_state(scn, traj)
    r_relay = np.log2(1.0 + pw.p_s * ch.gamma_ar)
    r_bob = np.log2(1.0 + pw.p_r * ch.gamma_rd)
    r_eve = np.log2(1.0 + pw.p_r * ch.gamma_re)
    secrecy_sum = float(np.sum(r_bob[1:] - r_eve[1:]))
    return RateProfile(
        r_relay=r_relay, r_bob=r_bob, r_eve=r_eve,
        secrecy_sum=secrecy_sum,
        secrecy_avg=secrecy_sum / scn.n_slots,
    )


def secrecy_sum(scn: Scenario, traj: Trajectory, pw: PowerAllocation) -> float:
    return rate_profile(scn, traj, pw).secrecy_sum


def check_mobility(scn: Scenario, traj: Trajectory,
                   tol: float = DEFAULT_FEAS_TOL) -> FeasibilityVerdict:
    """Endpoint and per-slot travel constraints.

    Slacks are in meters squared: V^2 minus the squared hop length.
    Endpoint slacks are reported as None when the endpoint is free.
    """
    if len(traj) != scn.n_slots:
        raise ValueError("trajectory/scenario slot mismatch")
    v2 = scn.slot_travel ** 2
    steps = np.sum(np.diff(traj.xy, axis=0) ** 2, axis=1)
    step_slack = v2 - steps
    slacks = {"steps": step_slack}
    worst = float(np.min(step_slack)) if step_slack.size else 0.0
    for key, anchor, idx in (("start", scn.start_xy, 0),
                             ("end", scn.end_xy, -1)):
        if anchor is None:
            slacks[key] = None
            continue
        s = v2 - float(np.sum((traj.xy[idx] - anchor) ** 2))
        slacks[key] = s
        worst = min(worst, s)
    return FeasibilityVerdict(feasible=worst >= -tol, slacks=slacks, worst=worst)


def check_causality(scn: Scenario, traj: Trajectory, pw: PowerAllocation,
                    tol: float = DEFAULT_FEAS_TOL) -> FeasibilityVerdict:
    """Information-causality prefix constraints.

    For each prefix n = 2..N the relay may only have forwarded what it
    already received.  Gaps are (forwarded - received); positive gap is
    a violation.
    """
    rp = rate_profile(scn, traj, pw)
    recv = np.cumsum(rp.r_relay)[:-1]          # sum_{i<=n-1} r_relay[i]
    sent_bob = np.cumsum(rp.r_bob[1:])         # sum_{2<=i<=n} r_bob[i]
    sent_eve = np.cumsum(rp.r_eve[1:])
    gap_bob = sent_bob - recv
    gap_eve = sent_eve - recv
    worst = float(max(np.max(gap_bob, initial=0.0),
                      np.max(gap_eve, initial=0.0)))
    return FeasibilityVerdict(
        feasible=worst <= tol,
        slacks={"bob_gaps": gap_bob, "eve_gaps": gap_eve},
        worst=worst,
    )


def check_power_budget(scn: Scenario, pw: PowerAllocation,
                       tol: float = DEFAULT_FEAS_TOL) -> FeasibilityVerdict:
    """Average-power budgets: sum p <= N * p_bar (slack in watts)."""
    if len(pw) != scn.n_slots:
        raise ValueError("power allocation/scenario slot mismatch")
    slack_s = scn.n_slots * scn.p_bar_s - float(np.sum(pw.p_s))
    slack_r = scn.n_slots * scn.p_bar_r - float(np.sum(pw.p_r))
    worst = min(slack_s, slack_r)
    return FeasibilityVerdict(
        feasible=worst >= -tol,
        slacks={"source": slack_s, "relay": slack_r},
        worst=worst,
    )


def check_all(scn: Scenario, traj: Trajectory, pw: PowerAllocation,
              tol: float = DEFAULT_FEAS_TOL) -> dict:
    """All feasibility families at once, keyed by name."""
    return {
        "mobility": check_mobility(scn, traj, tol),
        "causality": check_causality(scn, traj, pw, tol),
        "power_budget": check_power_budget(scn, pw, tol),
    }
