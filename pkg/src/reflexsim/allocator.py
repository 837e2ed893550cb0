"""Priority-aware max-min rate allocation.

Each link serves two classes through a weighted scheduler (DRR in the
switches being modelled). At flow level this becomes a capacity partition
per link: a class that is backlogged gets at least its weighted share, and
whatever one class leaves unused is lent to the other. Within a class,
flows share their class capacity max-min fairly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import LinkSpec, Priority, Scheme, SchemeKind, Topology

logger = logging.getLogger(__name__)

SPLIT_TOL = 1e-6
MAX_ITERATIONS = 100


class NonConvergence(RuntimeWarning):
    pass


@dataclass
class AllocationResult:
    rates: dict[int, float]
    iterations_used: int
    converged: bool
    # Per-link class capacities (c_high, c_low) at the final iterate, keyed by link id.
    splits: dict[int, tuple[float, float]] | None = None


def _progressive_fill(
    capacity: np.ndarray, routes: Sequence[Sequence[int]], link_flows: Sequence[Sequence[int]]
) -> np.ndarray:
    """Max-min rates for flows given as lists of link indices.

    Repeatedly finds the link with the smallest residual capacity per
    unfrozen flow, freezes every unfrozen flow crossing it at that level and
    charges the other links on their routes. ``argmin`` returns the first
    minimum, so ties resolve to the lowest link index.
    """
    n = len(routes)
    rates = np.zeros(n)
    if n == 0:
        return rates
    residual = capacity.astype(float).copy()
    count = np.zeros(len(capacity), dtype=np.int64)
    for route in routes:
        for li in route:
            count[li] += 1
    frozen = np.zeros(n, dtype=bool)
    remaining = n
    while remaining:
        with np.errstate(divide="ignore", invalid="ignore"):
            level = np.where(count > 0, residual / count, np.inf)
        li = int(np.argmin(level))
        lam = max(float(level[li]), 0.0)
        for f in link_flows[li]:
            if frozen[f]:
                continue
            frozen[f] = True
            remaining -= 1
            rates[f] = lam
            for lj in routes[f]:
                residual[lj] -= lam
                count[lj] -= 1
        residual[li] = 0.0
    return rates


def maxmin_single_class(
    capacities: Mapping[int, float], flows: Sequence[tuple[int, Sequence[int]]]
) -> dict[int, float]:
    """Max-min fair rates of ``(flow_id, route)`` pairs over links with the
    given capacities. Links are visited in ascending id and flows in
    ascending id so equal-level ties resolve reproducibly."""
    link_ids = sorted(capacities)
    index = {lid: i for i, lid in enumerate(link_ids)}
    cap = np.array([capacities[lid] for lid in link_ids], dtype=float)
    ordered = sorted(flows, key=lambda fr: fr[0])
    routes = [[index[lid] for lid in route] for _, route in ordered]
    link_flows: list[list[int]] = [[] for _ in link_ids]
    for f, route in enumerate(routes):
        for li in route:
            link_flows[li].append(f)
    rates = _progressive_fill(cap, routes, link_flows)
    return {fid: float(rate) for (fid, _), rate in zip(ordered, rates)}


def split_link_capacity(
    link: LinkSpec,
    high_backlogged: bool,
    low_backlogged: bool,
    high_takeup: float,
    low_takeup: float,
    weights: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Partition a link's effective capacity between the two classes.

    A backlogged class wants more than it gets; a class that is not
    backlogged only needs its current take-up. Each class is guaranteed its
    weighted share and capacity a class cannot use is lent to the other, so
    the two parts always sum to the effective capacity.
    """
    cap = link.effective_capacity
    w_high, w_low = weights if weights is not None else (link.weight_high, link.weight_low)
    share_high = cap * w_high / (w_high + w_low)
    share_low = cap - share_high
    want_high = np.inf if high_backlogged else high_takeup
    want_low = np.inf if low_backlogged else low_takeup
    if want_high <= share_high:
        return want_high, cap - want_high
    if want_low <= share_low:
        return cap - want_low, want_low
    return share_high, share_low


def _class_weights(scheme: Scheme, topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    if scheme.kind is SchemeKind.ABSOLUTE:
        n = len(topology.links)
        return np.ones(n), np.zeros(n)
    if scheme.kind is SchemeKind.WEIGHTED:
        n = len(topology.links)
        return np.full(n, float(scheme.w_high)), np.full(n, float(scheme.w_low))
    return (
        np.array([link.weight_high for link in topology.links], dtype=float),
        np.array([link.weight_low for link in topology.links], dtype=float),
    )


def allocate(
    topology: Topology,
    active: Sequence[tuple[int, Sequence[int], Priority]],
    scheme: Scheme,
) -> AllocationResult:
    """Rates for the active flows given their current priority classes.

    Baseline puts every flow in one class. Otherwise the two classes are
    coupled through per-link capacities that are iterated to a fixed point:
    a class may use ``max(weighted share, capacity - other class's
    take-up)`` on each link, which is exactly DRR with slack lending once
    take-ups stop moving. Absolute priority is the limit with a zero low
    weight, i.e. the low class only gets what the high class leaves.
    """
    ordered = sorted(active, key=lambda a: a[0])
    index = topology.link_index
    cap = np.array([link.effective_capacity for link in topology.links], dtype=float)
    n_links = len(cap)

    if scheme.kind is SchemeKind.BASELINE:
        classes = [Priority.HIGH] * len(ordered)
    else:
        classes = [prio for _, _, prio in ordered]

    routes: list[list[int]] = [[index[lid] for lid in route] for _, route, _ in ordered]
    members = {Priority.HIGH: [], Priority.LOW: []}
    for f, prio in enumerate(classes):
        members[prio].append(f)

    def class_layout(prio: Priority):
        fl = members[prio]
        rts = [routes[f] for f in fl]
        lf: list[list[int]] = [[] for _ in range(n_links)]
        for k, route in enumerate(rts):
            for li in route:
                lf[li].append(k)
        present = np.zeros(n_links, dtype=bool)
        for route in rts:
            present[route] = True
        return fl, rts, lf, present

    hi_flows, hi_routes, hi_lf, hi_present = class_layout(Priority.HIGH)
    lo_flows, lo_routes, lo_lf, lo_present = class_layout(Priority.LOW)

    rates = np.zeros(len(ordered))
    iterations = 0
    converged = True
    c_high = cap.copy()
    c_low = cap.copy()

    if not lo_flows or not hi_flows:
        fl, rts, lf = (hi_flows, hi_routes, hi_lf) if hi_flows else (lo_flows, lo_routes, lo_lf)
        rates[fl] = _progressive_fill(cap, rts, lf)
        iterations = 1
        if not lo_flows:
            c_low = np.zeros(n_links)
        else:
            c_high = np.zeros(n_links)
    else:
        w_high, w_low = _class_weights(scheme, topology)
        share_high = cap * w_high / (w_high + w_low)
        share_low = cap - share_high
        both = hi_present & lo_present
        c_high = np.where(both, share_high, cap)
        c_low = np.where(both, share_low, cap)
        converged = False
        for iterations in range(1, MAX_ITERATIONS + 1):
            hi_rates = _progressive_fill(c_high, hi_routes, hi_lf)
            lo_rates = _progressive_fill(c_low, lo_routes, lo_lf)
            take_high = np.zeros(n_links)
            take_low = np.zeros(n_links)
            for route, rate in zip(hi_routes, hi_rates):
                take_high[route] += rate
            for route, rate in zip(lo_routes, lo_rates):
                take_low[route] += rate
            new_high = np.where(both, np.maximum(share_high, cap - take_low), cap)
            new_low = np.where(both, np.maximum(share_low, cap - take_high), cap)
            change = max(np.max(np.abs(new_high - c_high)), np.max(np.abs(new_low - c_low)))
            c_high, c_low = new_high, new_low
            if change < SPLIT_TOL * np.max(cap):
                converged = True
                break
        rates[hi_flows] = hi_rates
        rates[lo_flows] = lo_rates
        if not converged:
            logger.warning("allocation did not converge after %d iterations", MAX_ITERATIONS)
        c_high, c_low = _report_splits(topology, both, hi_present, lo_present,
                                       c_high, c_low, take_high, take_low, w_high, w_low)

    splits = {link.link_id: (float(c_high[i]), float(c_low[i])) for i, link in enumerate(topology.links)}
    return AllocationResult(
        {fid: float(rate) for (fid, _, _), rate in zip(ordered, rates)},
        iterations,
        converged,
        splits,
    )


def _report_splits(topology, both, hi_present, lo_present, c_high, c_low,
                   take_high, take_low, w_high, w_low):
    """Express the fixed point as capacity partitions that sum to capacity."""
    out_high = np.empty(len(c_high))
    out_low = np.empty(len(c_low))
    for i, link in enumerate(topology.links):
        cap = link.effective_capacity
        tol = SPLIT_TOL * cap
        if not both[i]:
            out_high[i] = cap if hi_present[i] or not lo_present[i] else 0.0
            out_low[i] = cap - out_high[i]
            continue
        hb = take_high[i] >= c_high[i] - tol
        lb = take_low[i] >= c_low[i] - tol
        out_high[i], out_low[i] = split_link_capacity(
            link, hb, lb, take_high[i], take_low[i], (w_high[i], w_low[i])
        )
    return out_high, out_low
