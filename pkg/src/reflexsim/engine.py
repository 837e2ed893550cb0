"""Fixed-step fluid simulation of flows sharing a two-class network.

Each tick: activate arrivals, recompute target rates when the active set or
any priority changed, move current rates toward targets (decreases are
immediate, increases follow a first-order lag of time constant
``conv_tau``), deliver ``rate * dt`` bits per flow, and on probing-interval
boundaries run the controller of every flexible flow under the ReFlex
scheme.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .allocator import allocate
from .core import FlowSpec, Priority, Scenario, SchemeKind, is_inf
from .metrics import FlowRecord
from .reflex import BudgetState, ControllerState, Decision, controller_update, determine_phase

logger = logging.getLogger(__name__)

PENDING, ACTIVE, FINISHED = "pending", "active", "finished"


@dataclass
class FlowRuntime:
    spec: FlowSpec
    route: tuple[int, ...]
    priority: Priority
    budget: BudgetState | None = None
    controller: ControllerState | None = None
    delivered: float = 0.0
    discarded: float = 0.0
    current_rate: float = 0.0
    target_rate: float = 0.0
    status: str = PENDING
    activated_at: float = 0.0
    completion_time: float | None = None
    window_bytes: float = 0.0
    window_start: float = 0.0
    priority_switches: int = 0

    @property
    def remaining(self) -> float:
        return self.spec.size - self.delivered - self.discarded


@dataclass(frozen=True)
class IntervalTrace:
    """Controller state after one update of one flexible flow."""

    time: float
    flow_id: int
    id_int: int
    phase: str
    decision: str
    decided: bool  # update fell on a measure->exploit boundary
    R_fair: float | None
    B_alpha: float
    B_r: float
    L_potential: float
    rate: float


@dataclass
class RunResult:
    records: list[FlowRecord]
    series: list[tuple]
    link_series: list[tuple]
    trace: list[IntervalTrace]
    events: list[tuple[float, str, str]]
    end_time: float
    max_discard_excess: float = 0.0
    max_link_excess: float = 0.0

    def record(self, flow_id: int) -> FlowRecord:
        for rec in self.records:
            if rec.flow_id == flow_id:
                return rec
        raise KeyError(flow_id)


class Engine:
    """Owns all mutable simulation state for one scenario run.

    ``series_every`` records the per-flow and per-link time series every that
    many ticks (0 disables). ``check_invariants`` tracks per-tick capacity
    and discard-bound margins on the result.
    """

    def __init__(self, scenario: Scenario, series_every: int = 0, check_invariants: bool = False):
        self.scenario = scenario
        self.topology = scenario.topology
        self.scheme = scenario.scheme
        self.sim = scenario.sim
        self.dt = self.sim.tick_dt
        self.tick = 0
        self.series_every = series_every
        self.check_invariants = check_invariants
        self.rng = np.random.default_rng(self.sim.seed)

        self.reflex = self.scheme.kind is SchemeKind.REFLEX
        self.phases = self.scheme.phases
        self.ticks_per_interval = round(self.phases.T_int / self.dt) if self.reflex else 0

        self.pending = sorted(scenario.flows, key=lambda f: (f.arrival_time, f.flow_id))
        self._next_pending = 0
        self.active: list[FlowRuntime] = []
        self.done: list[FlowRuntime] = []
        self.events: list[tuple[float, str, str]] = []
        self.trace: list[IntervalTrace] = []
        self.series: list[tuple] = []
        self.link_series: list[tuple] = []
        self._dirty = True
        self._lag = 1.0 if self.sim.conv_tau == 0 else -math.expm1(-self.dt / self.sim.conv_tau)
        self._cap = np.array([link.effective_capacity for link in self.topology.links])
        self._incidence = None
        self.max_discard_excess = -math.inf
        self.max_link_excess = -math.inf

    @property
    def clock(self) -> float:
        return self.tick * self.dt

    def _activation_tick(self, flow: FlowSpec) -> int:
        return max(0, math.ceil(flow.arrival_time / self.dt - 1e-9))

    # -- per-tick stages -------------------------------------------------

    def _activate(self) -> None:
        while self._next_pending < len(self.pending):
            flow = self.pending[self._next_pending]
            if self._activation_tick(flow) > self.tick:
                break
            self._next_pending += 1
            rt = FlowRuntime(
                spec=flow,
                route=self.topology.route(flow.src, flow.dst),
                priority=self.scheme.initial_priority(flow),
                status=ACTIVE,
                activated_at=self.clock,
                window_start=self.clock,
            )
            if self.reflex and flow.is_flexible:
                rt.budget = BudgetState.initial(flow)
                rt.controller = ControllerState()
            self.active.append(rt)
            self._dirty = True

    def _reallocate(self) -> None:
        self.active.sort(key=lambda rt: rt.spec.flow_id)
        result = allocate(
            self.topology,
            [(rt.spec.flow_id, rt.route, rt.priority) for rt in self.active],
            self.scheme,
        )
        if not result.converged:
            self.events.append((self.clock, "NonConvergence", f"{result.iterations_used} iterations"))
        for rt in self.active:
            rt.target_rate = result.rates[rt.spec.flow_id]
        index = self.topology.link_index
        inc = np.zeros((len(self._cap), len(self.active)))
        for k, rt in enumerate(self.active):
            for lid in rt.route:
                inc[index[lid], k] = 1.0
        self._incidence = inc
        self._dirty = False

    def _finish(self, rt: FlowRuntime, when: float) -> None:
        rt.status = FINISHED
        rt.completion_time = when
        rt.current_rate = 0.0
        rt.target_rate = 0.0
        self._dirty = True

    def step(self) -> None:
        self._activate()
        if self._dirty:
            self._reallocate()
        t0 = self.clock
        dt = self.dt
        lag = self._lag
        any_finished = False
        for rt in self.active:
            if rt.target_rate <= rt.current_rate:
                rt.current_rate = rt.target_rate
            else:
                rt.current_rate += (rt.target_rate - rt.current_rate) * lag
            sent = rt.current_rate * dt / 8.0
            remaining = rt.remaining
            if sent >= remaining and not is_inf(remaining):
                finish_at = t0 + (remaining * 8.0 / rt.current_rate if rt.current_rate > 0 else 0.0)
                rt.delivered += remaining
                rt.window_bytes += remaining
                self._finish(rt, finish_at)
                any_finished = True
            else:
                rt.delivered += sent
                rt.window_bytes += sent

        if self.check_invariants and self.active:
            rates = np.array([rt.current_rate if rt.status == ACTIVE else 0.0 for rt in self.active])
            if self._incidence is not None and self._incidence.shape[1] == len(rates):
                load = self._incidence @ rates
                self.max_link_excess = max(self.max_link_excess, float(np.max((load - self._cap) / self._cap)))

        self.tick += 1
        if self.reflex and self.tick % self.ticks_per_interval == 0:
            any_finished |= self._boundary(self.tick // self.ticks_per_interval)

        if self.check_invariants:
            for rt in self.active:
                if rt.spec.is_flexible and not is_inf(rt.spec.size):
                    excess = rt.discarded - (1.0 - rt.spec.r) * rt.spec.size
                    self.max_discard_excess = max(self.max_discard_excess, excess)

        if self.series_every and self.tick % self.series_every == 0:
            self._record_series()

        if any_finished:
            keep = []
            for rt in self.active:
                (self.done if rt.status == FINISHED else keep).append(rt)
            self.active = keep

    def _boundary(self, id_int: int) -> bool:
        now = self.clock
        finished = False
        for rt in self.active:
            if rt.controller is None or rt.status != ACTIVE:
                continue
            t_elapsed = now - rt.window_start
            if t_elapsed <= 0:
                continue
            ack = rt.window_bytes
            scale = 1.0
            if self.sim.estimate_noise > 0:
                scale = float(np.exp(self.rng.normal(0.0, self.sim.estimate_noise)))
            was_measure = rt.controller.P_prev.value == "measure"
            decision, rt.controller, budget = controller_update(
                rt.controller, rt.budget, rt.spec, id_int, ack, t_elapsed, self.phases, scale
            )
            drained = budget.discarded_total - rt.budget.discarded_total
            rt.budget = budget
            if drained > 0:
                rt.discarded += min(drained, max(rt.remaining, 0.0))
            rt.window_bytes = 0.0
            rt.window_start = now
            decided = was_measure and rt.controller.P_prev.value == "exploit" \
                and rt.controller.R_fair is not None
            self.trace.append(IntervalTrace(
                now, rt.spec.flow_id, id_int, determine_phase(id_int, self.phases).value,
                decision.value, decided, rt.controller.R_fair, budget.B_alpha, budget.B_r,
                rt.controller.L_potential, ack * 8.0 / t_elapsed,
            ))
            if decision is Decision.FINISHED or rt.remaining <= 0:
                rt.discarded = rt.spec.size - rt.delivered
                self._finish(rt, now)
                finished = True
                continue
            prio = decision.priority
            if prio is not rt.priority:
                rt.priority = prio
                rt.priority_switches += 1
                self._dirty = True
        return finished

    def _record_series(self) -> None:
        now = self.clock
        high = np.zeros(len(self._cap))
        low = np.zeros(len(self._cap))
        index = self.topology.link_index
        for rt in self.active:
            if rt.status != ACTIVE:
                continue
            b = rt.budget
            c = rt.controller
            self.series.append((
                now, rt.spec.flow_id, rt.current_rate, rt.priority.name,
                b.B_alpha if b else None, b.B_r if b else None, c.R_fair if c else None,
            ))
            bucket = high if rt.priority is Priority.HIGH else low
            for lid in rt.route:
                bucket[index[lid]] += rt.current_rate
        for i, link in enumerate(self.topology.links):
            self.link_series.append((now, link.link_id, high[i], low[i]))

    # -- driving -----------------------------------------------------------

    def finished_all(self) -> bool:
        return not self.active and self._next_pending >= len(self.pending)

    def run_until(self, t: float) -> None:
        end_tick = math.ceil(t / self.dt - 1e-9)
        while self.tick < end_tick:
            self.step()

    def run(self) -> RunResult:
        end_tick = math.ceil(self.sim.duration / self.dt - 1e-9)
        while self.tick < end_tick and not self.finished_all():
            self.step()
        return self.result()

    def result(self) -> RunResult:
        end = self.clock
        records = [_record(rt, end) for rt in self.done]
        for rt in self.active:
            self.events.append((end, "UnfinishedFlow", str(rt.spec.flow_id)))
            records.append(_record(rt, end))
        records.sort(key=lambda rec: rec.flow_id)
        return RunResult(
            records, self.series, self.link_series, self.trace, self.events, end,
            self.max_discard_excess, self.max_link_excess,
        )


def _record(rt: FlowRuntime, end: float) -> FlowRecord:
    spec = rt.spec
    finished = rt.status == FINISHED
    stop = rt.completion_time if finished else end
    elapsed = stop - spec.arrival_time
    mean_rate = rt.delivered * 8.0 / elapsed if elapsed > 0 else 0.0
    return FlowRecord(
        flow_id=spec.flow_id,
        kind=spec.kind.value,
        size_F=spec.size,
        arrival_time=spec.arrival_time,
        completion_time=rt.completion_time if finished else None,
        fct=elapsed if finished else None,
        delivered=rt.delivered,
        discarded=rt.discarded,
        mean_rate=mean_rate,
        priority_switch_count=rt.priority_switches,
        finished=finished,
    )


def run(scenario: Scenario, series_every: int = 0, check_invariants: bool = False) -> RunResult:
    return Engine(scenario, series_every, check_invariants).run()
