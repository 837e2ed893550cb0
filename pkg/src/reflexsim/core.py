"""Domain types shared by the simulator: flows, links, routes, probing
configuration, scheme selection and simulation knobs.

Sizes are integer bytes, rates are bits per second, times are seconds.
``INF`` stands in for an unbounded flow size or aggressiveness factor; it is
written out as the string ``"inf"`` whenever a value is serialized.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

INF = math.inf


def is_inf(value: float) -> bool:
    return value == INF


def format_value(value: float | int) -> str:
    """Serialize a number, mapping the unbounded sentinel to ``"inf"``."""
    if is_inf(value):
        return "inf"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def parse_value(text: str | float | int) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity"):
        return INF
    return float(text)


class Priority(enum.IntEnum):
    HIGH = 0
    LOW = 1


class FlowKind(str, enum.Enum):
    REGULAR = "regular"
    FLEXIBLE = "flexible"


@dataclass(frozen=True)
class FlowSpec:
    """Static description of one flow.

    ``kind`` is derived: a flow is regular exactly when it keeps both
    defaults (``alpha`` unbounded, ``r`` = 1).
    """

    flow_id: int
    src: str
    dst: str
    size: float = INF
    alpha: float = INF
    r: float = 1.0
    arrival_time: float = 0.0

    @property
    def kind(self) -> FlowKind:
        if is_inf(self.alpha) and self.r == 1.0:
            return FlowKind.REGULAR
        return FlowKind.FLEXIBLE

    @property
    def is_flexible(self) -> bool:
        return self.kind is FlowKind.FLEXIBLE

    @property
    def budget_alpha(self) -> float:
        # A partial-delivery-only flow competes at its fair share.
        return 1.0 if is_inf(self.alpha) else self.alpha


@dataclass(frozen=True)
class LinkSpec:
    link_id: int
    tail: str
    head: str
    capacity: float
    efficiency: float = 0.96
    weight_high: int = 9
    weight_low: int = 1

    @property
    def effective_capacity(self) -> float:
        return self.capacity * self.efficiency


@dataclass(frozen=True)
class Topology:
    """Directed links plus one static route (list of link ids) per pair."""

    nodes: frozenset[str]
    links: tuple[LinkSpec, ...]
    routes: dict[tuple[str, str], tuple[int, ...]] = field(hash=False)

    @cached_property
    def link_index(self) -> dict[int, int]:
        return {link.link_id: i for i, link in enumerate(self.links)}

    def link(self, link_id: int) -> LinkSpec:
        return self.links[self.link_index[link_id]]

    def route(self, src: str, dst: str) -> tuple[int, ...]:
        return self.routes[(src, dst)]

    @property
    def hosts(self) -> list[str]:
        """Nodes that appear as a route endpoint, sorted."""
        ends = {n for pair in self.routes for n in pair}
        return sorted(ends)

    def with_links(self, **changes) -> Topology:
        links = tuple(replace(link, **changes) for link in self.links)
        return Topology(self.nodes, links, dict(self.routes))

    @classmethod
    def single_link(
        cls,
        capacity: float = 10e9,
        efficiency: float = 0.96,
        weight_high: int = 9,
        weight_low: int = 1,
        src: str = "h0",
        dst: str = "h1",
    ) -> Topology:
        link = LinkSpec(0, src, dst, capacity, efficiency, weight_high, weight_low)
        return cls(frozenset({src, dst}), (link,), {(src, dst): (0,)})

    @classmethod
    def star(
        cls,
        hosts: Sequence[str],
        capacity: float = 10e9,
        efficiency: float = 0.96,
        weight_high: int = 9,
        weight_low: int = 1,
        switch: str = "tor",
    ) -> Topology:
        """Hosts hanging off one switch; every host has an up and a down link.

        Host ``i`` gets uplink id ``2i`` and downlink id ``2i + 1``; the route
        between two hosts is the sender's uplink followed by the receiver's
        downlink.
        """
        links = []
        for i, h in enumerate(hosts):
            links.append(LinkSpec(2 * i, h, switch, capacity, efficiency, weight_high, weight_low))
            links.append(LinkSpec(2 * i + 1, switch, h, capacity, efficiency, weight_high, weight_low))
        routes = {
            (a, b): (2 * i, 2 * j + 1)
            for i, a in enumerate(hosts)
            for j, b in enumerate(hosts)
            if a != b
        }
        return cls(frozenset(hosts) | {switch}, tuple(links), routes)


@dataclass(frozen=True)
class PhaseConfig:
    T_int: float = 0.005
    D_warmup: int = 1
    D_measure: int = 1
    D_exploit: int = 3

    @property
    def intervals_per_cycle(self) -> int:
        return self.D_warmup + self.D_measure + self.D_exploit

    @property
    def cycle_length(self) -> float:
        return self.intervals_per_cycle * self.T_int

    @property
    def exploit_fraction(self) -> float:
        return self.D_exploit / self.intervals_per_cycle


class SchemeKind(str, enum.Enum):
    BASELINE = "baseline"
    ABSOLUTE = "absolute"
    WEIGHTED = "weighted"
    REFLEX = "reflex"


@dataclass(frozen=True)
class Scheme:
    """How flexible flows are mapped onto the two priority classes.

    ``weighted`` carries its own class weights (overriding the links');
    ``reflex`` uses the link weights and a shared probing configuration.
    """

    kind: SchemeKind
    w_high: int | None = None
    w_low: int | None = None
    phases: PhaseConfig | None = None

    @classmethod
    def baseline(cls) -> Scheme:
        return cls(SchemeKind.BASELINE)

    @classmethod
    def absolute(cls) -> Scheme:
        return cls(SchemeKind.ABSOLUTE)

    @classmethod
    def weighted(cls, w_high: int = 9, w_low: int = 1) -> Scheme:
        return cls(SchemeKind.WEIGHTED, w_high, w_low)

    @classmethod
    def reflex(cls, phases: PhaseConfig | None = None) -> Scheme:
        return cls(SchemeKind.REFLEX, phases=phases or PhaseConfig())

    @property
    def label(self) -> str:
        if self.kind is SchemeKind.WEIGHTED:
            return f"weighted-{self.w_high}-{self.w_low}"
        return self.kind.value

    def initial_priority(self, flow: FlowSpec) -> Priority:
        if not flow.is_flexible or self.kind in (SchemeKind.BASELINE, SchemeKind.REFLEX):
            return Priority.HIGH
        return Priority.LOW


@dataclass(frozen=True)
class SimConfig:
    tick_dt: float = 1e-4
    duration: float = 10.0
    warmup_window: float = 0.0
    cooldown_window: float = 0.0
    conv_tau: float = 1e-3
    seed: int = 0
    # Multiplicative log-normal noise on fair-share estimates; 0 disables.
    estimate_noise: float = 0.0


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    flows: tuple[FlowSpec, ...]
    scheme: Scheme
    sim: SimConfig

    def replace(self, **changes) -> Scenario:
        return replace(self, **changes)


class ErrorCode(str, enum.Enum):
    MISSING_ROUTE = "MissingRoute"
    INVALID_RELIABILITY = "InvalidReliability"
    INVALID_AGGRESSIVENESS = "InvalidAggressiveness"
    SIZE_REQUIRED = "SizeRequired"
    INVALID_SIZE = "InvalidSize"
    DUPLICATE_FLOW = "DuplicateFlow"
    INVALID_LINK = "InvalidLink"
    INVALID_ROUTE = "InvalidRoute"
    INVALID_PHASES = "InvalidPhases"
    INVALID_SIM = "InvalidSim"
    TICK_MISALIGNED = "TickMisaligned"


@dataclass(frozen=True, order=True)
class Violation:
    code: ErrorCode
    message: str

    def __str__(self) -> str:
        return f"{self.code.value}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def _is_multiple(value: float, step: float) -> bool:
    q = value / step
    return abs(q - round(q)) < 1e-6 and round(q) >= 1


def check_scenario(
    topology: Topology, flows: Iterable[FlowSpec], scheme: Scheme, sim: SimConfig
) -> list[Violation]:
    """Collect every invariant violation; an empty list means valid."""
    out: list[Violation] = []
    flows = list(flows)

    link_ids = [link.link_id for link in topology.links]
    if len(set(link_ids)) != len(link_ids):
        out.append(Violation(ErrorCode.INVALID_LINK, "duplicate link ids"))
    for link in topology.links:
        if not link.capacity > 0:
            out.append(Violation(ErrorCode.INVALID_LINK, f"link {link.link_id}: capacity must be > 0"))
        if not 0 < link.efficiency <= 1:
            out.append(Violation(ErrorCode.INVALID_LINK, f"link {link.link_id}: efficiency must be in (0, 1]"))
        if link.weight_high < 0 or link.weight_low < 0 or link.weight_high + link.weight_low <= 0:
            out.append(Violation(ErrorCode.INVALID_LINK, f"link {link.link_id}: bad class weights"))
    known = set(link_ids)
    for (src, dst), route in sorted(topology.routes.items()):
        if not route:
            out.append(Violation(ErrorCode.INVALID_ROUTE, f"route {src}->{dst} is empty"))
            continue
        missing = [lid for lid in route if lid not in known]
        if missing:
            out.append(Violation(ErrorCode.INVALID_ROUTE, f"route {src}->{dst} uses unknown links {missing}"))
            continue
        hops = [topology.link(lid) for lid in route]
        visited = [hops[0].tail] + [h.head for h in hops]
        chained = all(a.head == b.tail for a, b in zip(hops, hops[1:]))
        if not chained or hops[0].tail != src or hops[-1].head != dst:
            out.append(Violation(ErrorCode.INVALID_ROUTE, f"route {src}->{dst} is not a path from {src} to {dst}"))
        elif len(set(visited)) != len(visited):
            out.append(Violation(ErrorCode.INVALID_ROUTE, f"route {src}->{dst} has a cycle"))

    seen: set[int] = set()
    for f in sorted(flows, key=lambda f: f.flow_id):
        tag = f"flow {f.flow_id}"
        if f.flow_id in seen:
            out.append(Violation(ErrorCode.DUPLICATE_FLOW, f"{tag}: duplicate flow id"))
        seen.add(f.flow_id)
        if (f.src, f.dst) not in topology.routes:
            out.append(Violation(ErrorCode.MISSING_ROUTE, f"{tag}: no route {f.src}->{f.dst}"))
        if not 0.0 <= f.r <= 1.0:
            out.append(Violation(ErrorCode.INVALID_RELIABILITY, f"{tag}: r={f.r} outside [0, 1]"))
        if not (f.alpha >= 0.0):
            out.append(Violation(ErrorCode.INVALID_AGGRESSIVENESS, f"{tag}: alpha={f.alpha} must be >= 0"))
        if is_inf(f.size):
            if f.r < 1.0:
                out.append(Violation(ErrorCode.SIZE_REQUIRED, f"{tag}: r={f.r} < 1 needs a finite size"))
        elif not (f.size > 0 and float(f.size).is_integer()):
            out.append(Violation(ErrorCode.INVALID_SIZE, f"{tag}: size must be a positive whole number of bytes"))
        if not f.arrival_time >= 0:
            out.append(Violation(ErrorCode.INVALID_SIM, f"{tag}: arrival time must be >= 0"))

    if not sim.tick_dt > 0:
        out.append(Violation(ErrorCode.INVALID_SIM, "tick_dt must be > 0"))
    if not sim.duration > 0:
        out.append(Violation(ErrorCode.INVALID_SIM, "duration must be > 0"))
    if sim.conv_tau < 0:
        out.append(Violation(ErrorCode.INVALID_SIM, "conv_tau must be >= 0"))
    if sim.warmup_window < 0 or sim.cooldown_window < 0:
        out.append(Violation(ErrorCode.INVALID_SIM, "measurement windows must be >= 0"))

    if scheme.kind is SchemeKind.WEIGHTED:
        if scheme.w_high is None or scheme.w_low is None or scheme.w_high < 0 or scheme.w_low < 0 \
                or scheme.w_high + scheme.w_low <= 0:
            out.append(Violation(ErrorCode.INVALID_LINK, "weighted scheme needs non-negative weights"))
    if scheme.kind is SchemeKind.REFLEX:
        ph = scheme.phases
        if ph is None or not ph.T_int > 0 or min(ph.D_warmup, ph.D_measure, ph.D_exploit) < 1:
            out.append(Violation(ErrorCode.INVALID_PHASES, "phase lengths and T_int must be strictly positive"))
        elif sim.tick_dt > 0:
            if sim.tick_dt > ph.T_int / 10 + 1e-15 or not _is_multiple(ph.T_int, sim.tick_dt):
                out.append(Violation(
                    ErrorCode.TICK_MISALIGNED,
                    f"T_int={ph.T_int} must be a multiple of tick_dt={sim.tick_dt} and >= 10 ticks",
                ))
    return out


def validate_scenario(
    topology: Topology, flows: Iterable[FlowSpec], scheme: Scheme, sim: SimConfig
) -> Scenario:
    """Return the canonical scenario (flows ordered by id) or raise
    :class:`ScenarioError` listing every violation found."""
    flows = list(flows)
    violations = check_scenario(topology, flows, scheme, sim)
    if violations:
        raise ScenarioError(violations)
    ordered = tuple(sorted(flows, key=lambda f: f.flow_id))
    return Scenario(topology, ordered, scheme, sim)
