"""Supervisor that arbitrates between the primitive and the servo loop.

The servo controller runs only while every feature-error component sits
inside the active threshold band and the re-entry clock allows it; in all
other cases the primitive drives.  Fast switch bursts are paid for by a
compensation interval: after ``Nbar`` switches the supervisor blocks servo
re-entry long enough that the burst's average dwell time matches the
configured bound, then re-arms with the tight threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def dwell_time(mu: float, beta_lo: float, eps: float) -> float:
    """Average dwell time ln(mu) / (beta_lo - eps) from the decay budget.

    ``mu`` is the worst energy jump factor across a switch, ``beta_lo``
    the common decay rate and ``eps`` the share of it sacrificed to keep a
    net margin.
    """
    if mu <= 1.0:
        raise ValueError("mu must exceed 1")
    if eps < 0.0 or eps >= beta_lo:
        raise ValueError("need 0 <= eps < beta_lo")
    return math.log(mu) / (beta_lo - eps)


@dataclass(frozen=True)
class SwitchConfig:
    """Thresholds and dwell bookkeeping parameters.

    ``iota_lo`` (tight) gates servo entry after a compensation cycle,
    ``iota_hi`` (wide) keeps it active once entered; both are applied per
    component of the feature error.  ``compensate=False`` disables the
    blocking interval (diagnostics only; the dwell check will fail under
    flicker).
    """

    iota_lo: float
    iota_hi: float
    tau_a: float
    n0: int = 1
    nbar: int = 4
    compensate: bool = True

    def __post_init__(self):
        if not 0.0 < self.iota_lo < self.iota_hi:
            raise ValueError("need 0 < iota_lo < iota_hi")
        if self.tau_a <= 0.0:
            raise ValueError("tau_a must be positive")
        if not (isinstance(self.n0, int) and isinstance(self.nbar, int)):
            raise ValueError("n0 and nbar must be integers")
        if self.n0 < 0 or self.nbar <= self.n0:
            raise ValueError("need 0 <= n0 < nbar")


@dataclass
class SwitchState:
    """Mutable supervisor state carried across ticks.

    ``t_v``/``t_d`` are the last instants each controller was active,
    ``t_e`` the elapsed time accumulated inside the current switch cycle,
    ``t_c`` the pending compensation interval and ``n_sigma`` the switch
    count within the cycle.  ``ibvs_seen`` records whether the servo ever
    ran: the initial ``t_v = 0`` is a sentinel, not a real activation, so
    the first primitive-to-servo transition must not book the whole
    startup interval as cycle time.
    """

    iota: float
    active: str = "d"
    t_v: float = 0.0
    t_d: float = 0.0
    t_e: float = 0.0
    t_c: float = 0.0
    n_sigma: int = 0
    ibvs_seen: bool = False


def initial_state(cfg: SwitchConfig) -> SwitchState:
    """Fresh supervisor state; the tight threshold gates the first entry."""
    return SwitchState(iota=cfg.iota_lo)


def decide(state: SwitchState, t: float, visible: bool, e_i, cfg: SwitchConfig,
           usable: bool = True) -> str:
    """Advance the supervisor by one tick; returns the transition event.

    The servo branch is taken iff the features are visible and usable,
    every error component sits inside the active band, and the re-entry
    clock ``t > t_v + t_c`` has run out.  Returns ``"d->v"``, ``"v->d"``
    or ``""``.
    """
    servo_ok = (
        visible
        and usable
        and e_i is not None
        and bool(np.all(np.abs(np.asarray(e_i, dtype=float)) <= state.iota))
        and t > state.t_v + state.t_c
    )
    event = ""
    if servo_ok:
        if state.t_d > state.t_v:
            event = "d->v"
            if state.ibvs_seen:
                state.t_e += state.t_d - state.t_v
            state.n_sigma += 1
            state.t_c = 0.0
            state.iota = cfg.iota_hi
        state.active = "v"
        state.t_v = t
        state.ibvs_seen = True
    else:
        if state.t_v > state.t_d:
            event = "v->d"
            state.n_sigma += 1
            state.t_e += state.t_v - state.t_d
            if state.n_sigma >= cfg.nbar:
                if cfg.compensate:
                    state.t_c = max(0.0, (state.n_sigma - cfg.n0) * cfg.tau_a - state.t_e)
                state.t_e = 0.0
                state.n_sigma = 0
                state.iota = cfg.iota_lo
        state.active = "d"
        state.t_d = t
    return event


@dataclass(frozen=True)
class IntervalCheck:
    """Dwell inequality on one interval: count <= n0 + span / tau_a."""

    t_lo: float
    t_hi: float
    count: int
    margin: float


@dataclass(frozen=True)
class DwellResult:
    """Aggregate dwell verdict; ``margin`` is the worst interval margin."""

    passed: bool
    margin: float
    intervals: list = field(default_factory=list)


def verify_dwell(switch_times, tau_a: float, n0: int, horizon,
                 nbar: int | None = None, time_slack: float = 0.0) -> DwellResult:
    """Check the average dwell inequality over a logged switch sequence.

    Two families of intervals are checked: the full horizon, and (when
    ``nbar`` is given) each compensation cycle, i.e. the span from every
    ``nbar``-th switch to the next cycle's first switch.  The cycle span
    is exactly what the compensation interval stretches, so a compensated
    log passes with near-zero margin there.  ``time_slack`` widens each
    span; pass one control period when both endpoints are tick-quantized.
    An empty log passes with margin at least ``n0``.
    """
    if tau_a <= 0.0:
        raise ValueError("tau_a must be positive")
    t_lo, t_hi = float(horizon[0]), float(horizon[1])
    if t_hi < t_lo:
        raise ValueError("horizon must be ordered")
    times = sorted(float(t) for t in switch_times)
    intervals = []

    def check(a: float, b: float, count: int) -> None:
        margin = n0 + (b - a + time_slack) / tau_a - count
        intervals.append(IntervalCheck(a, b, count, margin))

    check(t_lo, t_hi, len(times))
    if nbar is not None and nbar > 0 and times:
        for start_idx in range(0, len(times), nbar):
            next_idx = start_idx + nbar
            if next_idx < len(times):
                check(times[start_idx], times[next_idx], nbar)
            else:
                check(times[start_idx], t_hi, len(times) - start_idx)
    worst = min(iv.margin for iv in intervals)
    return DwellResult(passed=bool(worst >= -1e-9), margin=float(worst),
                       intervals=intervals)
