"""YAML scenario files.

Top-level sections: ``topology``, ``workloads``, ``scheme``, ``reflex``,
``sim``, ``outputs``. Any key not listed in ``_ALLOWED`` below is rejected
so a typo never silently falls back to a default.

Example::

    topology:
      single_link: {capacity: 10.0e+9, efficiency: 1.0}
    workloads:
      - arrivals: {times: [0.0]}
        size: 5000000000
        alpha: 0.9
      - arrivals: {times: [2.0]}
        size: 250000000
    scheme: reflex
    reflex: {T_int: 0.005, D_warmup: 1, D_measure: 1, D_exploit: 3}
    sim: {duration: 10.0, conv_tau: 0.0}
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .core import (
    INF,
    LinkSpec,
    PhaseConfig,
    Scenario,
    Scheme,
    SchemeKind,
    SimConfig,
    Topology,
    parse_value,
    validate_scenario,
)
from .workload import (
    AllPairsUniform,
    ArrivalProcess,
    ConstantSize,
    EmpiricalSize,
    FixedEndpoints,
    FixedTimes,
    Poisson,
    SizeCdfTable,
    generate_many,
    target_rate_for_utilization,
)


class ScenarioFileError(ValueError):
    pass


_ALLOWED = {
    "": {"topology", "workloads", "scheme", "reflex", "sim", "outputs", "description"},
    "topology": {"single_link", "star", "nodes", "links", "routes", "efficiency"},
    "topology.single_link": {"capacity", "efficiency", "weight_high", "weight_low", "src", "dst"},
    "topology.star": {"hosts", "capacity", "efficiency", "weight_high", "weight_low", "switch"},
    "topology.links[]": {"id", "tail", "head", "capacity", "efficiency", "weight_high", "weight_low"},
    "topology.routes[]": {"src", "dst", "links"},
    "workloads[]": {"name", "arrivals", "size", "alpha", "r", "endpoints"},
    "workloads[].arrivals": {"poisson", "times", "utilization"},
    "workloads[].size": {"bytes", "cdf"},
    "workloads[].endpoints": {"src", "dst", "hosts"},
    "scheme": {"weighted"},
    "reflex": {"T_int", "D_warmup", "D_measure", "D_exploit", "alpha", "r"},
    "sim": {"tick_dt", "duration", "warmup_window", "cooldown_window", "conv_tau", "seed", "estimate_noise"},
    "outputs": {"series_every", "flows", "timeseries", "links", "summary"},
}


def _check_keys(section: str, data: Any) -> dict:
    if not isinstance(data, dict):
        raise ScenarioFileError(f"{section or 'document'}: expected a mapping")
    unknown = sorted(set(data) - _ALLOWED[section])
    if unknown:
        where = f"in '{section}'" if section else "at top level"
        raise ScenarioFileError(f"unknown key '{unknown[0]}' {where}")
    return data


def _num(value: Any, key: str) -> float:
    try:
        return parse_value(value)
    except (TypeError, ValueError):
        raise ScenarioFileError(f"'{key}' must be a number, got {value!r}") from None


@dataclass
class ScenarioFile:
    topology: Topology
    processes: list[ArrivalProcess]
    scheme: Scheme
    sim: SimConfig
    outputs: dict = field(default_factory=dict)
    description: str = ""

    @property
    def phases(self) -> PhaseConfig:
        return self.scheme.phases or PhaseConfig()

    def build(self, seed: int | None = None) -> Scenario:
        sim = self.sim if seed is None else replace(self.sim, seed=seed)
        flows = generate_many(self.processes, sim.duration, sim.seed, self.topology.hosts)
        return validate_scenario(self.topology, flows, self.scheme, sim)

    def with_scheme(self, scheme: Scheme) -> ScenarioFile:
        if scheme.kind is SchemeKind.REFLEX and scheme.phases is None:
            scheme = replace(scheme, phases=self.phases)
        return replace(self, scheme=scheme)

    def with_flexible(self, **changes) -> ScenarioFile:
        """Apply ``alpha``/``r`` changes to every flexible workload."""
        procs = [replace(p, **changes) if p.flexible else p for p in self.processes]
        return replace(self, processes=procs)

    def with_phases(self, **changes) -> ScenarioFile:
        phases = replace(self.phases, **changes)
        return replace(self, scheme=replace(self.scheme, phases=phases))

    def with_sim(self, **changes) -> ScenarioFile:
        return replace(self, sim=replace(self.sim, **changes))

    def with_efficiency(self, efficiency: float) -> ScenarioFile:
        return replace(self, topology=self.topology.with_links(efficiency=efficiency))


def parse_scheme(spec: Any) -> Scheme:
    """``baseline``, ``absolute``, ``reflex``, ``weighted`` (9:1),
    ``weighted-W1-W2`` or ``{weighted: [W1, W2]}``."""
    if isinstance(spec, dict):
        _check_keys("scheme", spec)
        w = spec["weighted"]
        if not (isinstance(w, list) and len(w) == 2):
            raise ScenarioFileError("'scheme.weighted' must be [w_high, w_low]")
        return Scheme.weighted(int(w[0]), int(w[1]))
    if not isinstance(spec, str):
        raise ScenarioFileError(f"bad scheme {spec!r}")
    name = spec.strip().lower()
    if name == "baseline":
        return Scheme.baseline()
    if name in ("absolute", "absolute-priority"):
        return Scheme.absolute()
    if name == "reflex":
        return Scheme(SchemeKind.REFLEX)
    if name.startswith("weighted"):
        parts = name.replace(":", "-").split("-")[1:]
        if not parts:
            return Scheme.weighted()
        if len(parts) != 2:
            raise ScenarioFileError(f"bad weighted scheme {spec!r}")
        return Scheme.weighted(int(parts[0]), int(parts[1]))
    raise ScenarioFileError(f"unknown scheme '{spec}'")


def _parse_topology(data: Any) -> Topology:
    data = _check_keys("topology", data)
    default_eff = _num(data.get("efficiency", 0.96), "topology.efficiency")
    if "single_link" in data:
        d = _check_keys("topology.single_link", data["single_link"])
        return Topology.single_link(
            capacity=_num(d.get("capacity", 10e9), "capacity"),
            efficiency=_num(d.get("efficiency", default_eff), "efficiency"),
            weight_high=int(d.get("weight_high", 9)),
            weight_low=int(d.get("weight_low", 1)),
            src=str(d.get("src", "h0")),
            dst=str(d.get("dst", "h1")),
        )
    if "star" in data:
        d = _check_keys("topology.star", data["star"])
        hosts = d.get("hosts", 20)
        hosts = [f"s{i}" for i in range(int(hosts))] if isinstance(hosts, int) else [str(h) for h in hosts]
        return Topology.star(
            hosts,
            capacity=_num(d.get("capacity", 10e9), "capacity"),
            efficiency=_num(d.get("efficiency", default_eff), "efficiency"),
            weight_high=int(d.get("weight_high", 9)),
            weight_low=int(d.get("weight_low", 1)),
            switch=str(d.get("switch", "tor")),
        )
    links = []
    for item in data.get("links", []):
        d = _check_keys("topology.links[]", item)
        links.append(LinkSpec(
            int(d["id"]), str(d["tail"]), str(d["head"]), _num(d["capacity"], "capacity"),
            _num(d.get("efficiency", default_eff), "efficiency"),
            int(d.get("weight_high", 9)), int(d.get("weight_low", 1)),
        ))
    routes = {}
    for item in data.get("routes", []):
        d = _check_keys("topology.routes[]", item)
        routes[(str(d["src"]), str(d["dst"]))] = tuple(int(x) for x in d["links"])
    nodes = {str(n) for n in data.get("nodes", [])}
    nodes |= {link.tail for link in links} | {link.head for link in links}
    return Topology(frozenset(nodes), tuple(links), routes)


def _parse_process(data: Any, flex_overrides: dict, topology: Topology, base_dir: Path | None) -> ArrivalProcess:
    d = _check_keys("workloads[]", data)
    arr = _check_keys("workloads[].arrivals", d.get("arrivals", {}))
    if "utilization" in arr:
        arrivals = None
    elif "poisson" in arr:
        arrivals = Poisson(_num(arr["poisson"], "arrivals.poisson"))
    elif "times" in arr:
        arrivals = FixedTimes(tuple(_num(t, "arrivals.times") for t in arr["times"]))
    else:
        raise ScenarioFileError("workload needs 'arrivals' with 'poisson', 'utilization' or 'times'")

    size_spec = d.get("size", "inf")
    if isinstance(size_spec, dict):
        s = _check_keys("workloads[].size", size_spec)
        if "cdf" in s:
            if s["cdf"] == "websearch":
                table = SizeCdfTable.websearch()
            else:
                path = Path(s["cdf"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                table = SizeCdfTable.load(path)
            size = EmpiricalSize(table)
        else:
            size = ConstantSize(_num(s["bytes"], "size.bytes"))
    else:
        size = ConstantSize(_num(size_spec, "size"))

    alpha = _num(d.get("alpha", "inf"), "alpha")
    r = _num(d.get("r", 1.0), "r")
    if not (alpha == INF and r == 1.0):
        alpha = _num(flex_overrides.get("alpha", alpha), "reflex.alpha")
        r = _num(flex_overrides.get("r", r), "reflex.r")

    ep = d.get("endpoints", None if "times" in arr else "all_pairs")
    if ep is None:
        hosts = topology.hosts
        src, dst = sorted(topology.routes)[0] if topology.routes else (hosts[0], hosts[1])
        endpoints = FixedEndpoints(src, dst)
    elif ep == "all_pairs":
        endpoints = AllPairsUniform()
    else:
        e = _check_keys("workloads[].endpoints", ep)
        if "hosts" in e:
            endpoints = AllPairsUniform(tuple(str(h) for h in e["hosts"]))
        else:
            endpoints = FixedEndpoints(str(e["src"]), str(e["dst"]))

    if "utilization" in arr:
        # Offered load as a fraction of the summed host access capacity.
        mean = size.table.mean if isinstance(size, EmpiricalSize) else size.size
        n_hosts = len(topology.hosts)
        capacity = topology.links[0].capacity
        arrivals = Poisson(target_rate_for_utilization(mean, n_hosts, capacity, _num(arr["utilization"], "utilization")))
    return ArrivalProcess(arrivals, size, alpha, r, endpoints)


def parse_scenario(text: str, base_dir: Path | None = None) -> ScenarioFile:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioFileError(f"not valid YAML: {exc}") from None
    data = _check_keys("", data or {})
    topology = _parse_topology(data.get("topology", {"single_link": {}}))

    reflex = _check_keys("reflex", data.get("reflex", {}) or {})
    phases = PhaseConfig(
        T_int=_num(reflex.get("T_int", 0.005), "reflex.T_int"),
        D_warmup=int(reflex.get("D_warmup", 1)),
        D_measure=int(reflex.get("D_measure", 1)),
        D_exploit=int(reflex.get("D_exploit", 3)),
    )
    flex_overrides = {k: reflex[k] for k in ("alpha", "r") if k in reflex}

    scheme = parse_scheme(data.get("scheme", "reflex"))
    scheme = replace(scheme, phases=phases)

    s = _check_keys("sim", data.get("sim", {}) or {})
    defaults = SimConfig()
    sim = SimConfig(
        tick_dt=_num(s.get("tick_dt", defaults.tick_dt), "sim.tick_dt"),
        duration=_num(s.get("duration", defaults.duration), "sim.duration"),
        warmup_window=_num(s.get("warmup_window", 0.0), "sim.warmup_window"),
        cooldown_window=_num(s.get("cooldown_window", 0.0), "sim.cooldown_window"),
        conv_tau=_num(s.get("conv_tau", defaults.conv_tau), "sim.conv_tau"),
        seed=int(s.get("seed", 0)),
        estimate_noise=_num(s.get("estimate_noise", 0.0), "sim.estimate_noise"),
    )
    procs = [_parse_process(w, flex_overrides, topology, base_dir) for w in data.get("workloads", []) or []]
    outputs = _check_keys("outputs", data.get("outputs", {}) or {})
    return ScenarioFile(topology, procs, scheme, sim, dict(outputs), str(data.get("description", "")))


def load_scenario(path: str | Path) -> ScenarioFile:
    path = Path(path)
    if not path.exists():
        bundled = resources.files("reflexsim").joinpath(f"scenarios/{path.name}")
        candidates = [bundled, resources.files("reflexsim").joinpath(f"scenarios/{path.name}.scenario")]
        for cand in candidates:
            if cand.is_file():
                return parse_scenario(cand.read_text())
        raise ScenarioFileError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(), path.parent)


def bundled_scenarios() -> list[str]:
    root = resources.files("reflexsim").joinpath("scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scenario"))
