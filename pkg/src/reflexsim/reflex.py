"""Budget accounting and the synchronized probing controller for flexible flows.

A flexible flow earns budget while it is served above ``alpha * R_fair``
and spends it while served below. ``B_alpha`` tracks the rate budget and
``B_r`` the payload it is still allowed to discard. The controller cycles
through warmup, measure and exploit phases on a network-wide clock; the fair
share is estimated from the bytes acknowledged during measure intervals and
a flow only drops to low priority for an exploit phase it can pay for.

Budgets are kept in bytes. Rates passed in are bits per second.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .core import FlowSpec, PhaseConfig, Priority, is_inf


class FairShareUnset(RuntimeError):
    pass


class NeverExploits(ValueError):
    pass


class Phase(enum.Enum):
    NONE = "none"
    WARMUP = "warmup"
    MEASURE = "measure"
    EXPLOIT = "exploit"


class Decision(enum.Enum):
    HIGH = "high"
    LOW = "low"
    FINISHED = "finished"

    @property
    def priority(self) -> Priority | None:
        return {Decision.HIGH: Priority.HIGH, Decision.LOW: Priority.LOW}.get(self)


@dataclass(frozen=True)
class BudgetState:
    B_alpha: float = 0.0
    B_r: float = 0.0
    S_sent: float = 0.0
    discarded_total: float = 0.0

    @classmethod
    def initial(cls, flow: FlowSpec) -> BudgetState:
        if flow.r >= 1.0:
            return cls()
        return cls(B_r=(1.0 - flow.r) * flow.size)


@dataclass(frozen=True)
class ControllerState:
    R_fair: float | None = None
    P_prev: Phase = Phase.NONE
    SYNC: bool = False
    D_probe: float = 0.0
    T_probe: float = 0.0
    I_exploit_low: bool = False
    L_potential: float = 0.0


def determine_phase(id_int: int, cfg: PhaseConfig) -> Phase:
    p = id_int % cfg.intervals_per_cycle
    if p < cfg.D_warmup:
        return Phase.WARMUP
    if p < cfg.D_warmup + cfg.D_measure:
        return Phase.MEASURE
    return Phase.EXPLOIT


def adjust_budget(
    state: BudgetState, flow: FlowSpec, R_fair: float | None, ack_bytes: float, t_elapsed: float
) -> BudgetState:
    """One budget update for an elapsed period in which ``ack_bytes`` were
    acknowledged.

    Shortfall below ``alpha * R_fair`` first eats ``B_alpha``, then the
    discard allowance ``B_r``; whatever comes out of ``B_r`` counts as sent
    (those bytes are dropped, not transmitted). ``B_alpha`` keeps any deficit
    ``B_r`` could not cover.
    """
    if R_fair is None:
        raise FairShareUnset(f"flow {flow.flow_id}: no fair-share estimate yet")
    if not t_elapsed > 0:
        raise ValueError("t_elapsed must be positive")
    alpha = flow.budget_alpha
    r_actual = ack_bytes / t_elapsed
    s_sent = state.S_sent + ack_bytes
    b_alpha = state.B_alpha - t_elapsed * (alpha * R_fair / 8.0 - r_actual)
    b_r = state.B_r
    if b_alpha < 0:
        b_r_before = b_r
        b_r = b_r + b_alpha
        if b_r >= 0:
            b_alpha = 0.0
        else:
            b_alpha = b_r
            b_r = 0.0
        s_sent += b_r_before - b_r
    drained = state.B_r - b_r
    return BudgetState(b_alpha, b_r, s_sent, state.discarded_total + drained)


def controller_update(
    ctrl: ControllerState,
    budget: BudgetState,
    flow: FlowSpec,
    id_int: int,
    ack_bytes: float,
    t_elapsed: float,
    cfg: PhaseConfig,
    estimate_scale: float = 1.0,
) -> tuple[Decision, ControllerState, BudgetState]:
    """Per-interval control step, called at the start of interval ``id_int``
    with the bytes acknowledged over the interval that just ended.

    ``estimate_scale`` multiplies a freshly computed fair-share estimate and
    exists only to inject measurement noise.
    """
    if ctrl.R_fair is not None:
        budget = adjust_budget(budget, flow, ctrl.R_fair, ack_bytes, t_elapsed)
    else:
        # Keep S_sent equal to bytes acknowledged plus discarded from the start.
        budget = replace(budget, S_sent=budget.S_sent + ack_bytes)
    if budget.S_sent >= flow.size:
        return Decision.FINISHED, ctrl, budget

    r_fair = ctrl.R_fair
    sync = ctrl.SYNC
    d_probe, t_probe = ctrl.D_probe, ctrl.T_probe
    exploit_low = ctrl.I_exploit_low
    if ctrl.P_prev is Phase.MEASURE and sync:
        d_probe += ack_bytes
        t_probe += t_elapsed
    upcoming = determine_phase(id_int, cfg)
    if ctrl.P_prev is Phase.EXPLOIT and upcoming is Phase.WARMUP:
        sync = True
        exploit_low = False
    boundary = ctrl.P_prev is Phase.MEASURE and upcoming is Phase.EXPLOIT
    if boundary and sync:
        r_fair = 8.0 * d_probe / t_probe * estimate_scale
        d_probe, t_probe = 0.0, 0.0
    l_potential = ctrl.L_potential
    if r_fair is not None:
        l_potential = flow.budget_alpha * r_fair / 8.0 * cfg.D_exploit * cfg.T_int
    if boundary and r_fair is not None:
        exploit_low = budget.B_alpha + budget.B_r > l_potential
    new = ControllerState(r_fair, upcoming, sync, d_probe, t_probe, exploit_low, l_potential)
    return (Decision.LOW if exploit_low else Decision.HIGH), new, budget


def time_to_first_exploit(
    alpha: float,
    cfg: PhaseConfig,
    R_fair: float = 10e9,
    r: float = 1.0,
    size: float | None = None,
    start_interval: int = 0,
) -> float:
    """Clock time of the first boundary at which a flow started at the
    beginning of interval ``start_interval`` goes low priority, assuming it
    receives exactly ``R_fair`` whenever it is at high priority.

    Follows the controller step by step in closed form: the first cycle
    start reached after two updates sets SYNC, the estimate lands at the
    following measure-to-exploit boundary (no budget yet), and from then on
    each full cycle adds ``(1 - alpha) * R_fair * cycle`` to the budget. The
    decision compares the budget after that boundary's accrual against
    ``alpha * R_fair * D_exploit * T_int``.
    """
    if not 0 <= alpha:
        raise ValueError("alpha must be >= 0")
    a = Fraction(alpha)
    c = cfg.intervals_per_cycle
    first_update = start_interval + 1
    sync_at = -(-(first_update + 1) // c) * c
    estimate_at = sync_at + cfg.D_warmup + cfg.D_measure
    # Work in units of R_fair * T_int so the comparison is exact.
    need = a * cfg.D_exploit
    per_cycle = (1 - a) * c
    initial = Fraction(0)
    if r < 1.0:
        if size is None or is_inf(size):
            raise ValueError("r < 1 needs a finite size")
        initial = Fraction((1.0 - r) * size) / Fraction(R_fair / 8.0) / Fraction(cfg.T_int)
    if alpha > 1:
        raise NeverExploits("alpha > 1 drains budget at fair share")
    if initial > need:
        j = 0
    elif per_cycle <= 0:
        raise NeverExploits(f"alpha={alpha} accrues no budget at the fair share")
    else:
        j = math.floor((need - initial) / per_cycle) + 1
    return (estimate_at + j * c) * cfg.T_int


def spend_fraction(
    cfg: PhaseConfig, w_high: float, w_low: float, n_competitors: int, capacity: float = 1.0
) -> float:
    """Largest long-run fraction of its fair share one flexible flow can cede
    to ``n_competitors`` regular flows on a single link."""
    e = cfg.exploit_fraction
    r_fair = capacity / (1 + n_competitors)
    # Without high-priority competition the low class keeps the whole link.
    share_low = capacity * w_low / (w_low + w_high) if n_competitors else capacity
    r_low = min(share_low, r_fair)
    return e * (r_fair - r_low) / r_fair
