"""Per-flow records, run summaries and paired-run comparisons."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from .core import format_value

KB = 1000
MB = 1000 * KB

SIZE_CATEGORIES = (
    ("tiny", 0, 10 * KB),
    ("small", 10 * KB, 100 * KB),
    ("medium", 100 * KB, 10 * MB),
    ("large", 10 * MB, math.inf),
)


class EmptyInput(ValueError):
    pass


class IdMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    kind: str
    size_F: float
    arrival_time: float
    completion_time: float | None
    fct: float | None
    delivered: float
    discarded: float
    mean_rate: float
    priority_switch_count: int
    finished: bool = True

    @property
    def fraction_delivered(self) -> float:
        return self.delivered / self.size_F


FLOW_COLUMNS = [f.name for f in fields(FlowRecord)]


def size_category(size: float) -> str:
    """Bucket a size in bytes into (lo, hi] categories."""
    for name, lo, hi in SIZE_CATEGORIES:
        if lo < size <= hi:
            return name
    raise ValueError(f"size {size} outside all categories")


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile."""
    if not values:
        raise EmptyInput("percentile of an empty list")
    if not 0 < p <= 100:
        raise ValueError("p must be in (0, 100]")
    ordered = sorted(values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[max(rank, 1) - 1]


def speedup_join(
    baseline: Iterable[FlowRecord], treated: Iterable[FlowRecord]
) -> tuple[dict[int, float], int]:
    """Per-flow ``fct_baseline / fct_treated``.

    Returns the speed-ups plus the number of flows left out because they did
    not finish in one of the runs.
    """
    base = {rec.flow_id: rec for rec in baseline}
    treat = {rec.flow_id: rec for rec in treated}
    if set(base) != set(treat):
        diff = sorted(set(base) ^ set(treat))
        raise IdMismatch(f"flow ids differ between runs: {diff[:10]}")
    out: dict[int, float] = {}
    excluded = 0
    for fid in sorted(base):
        b, t = base[fid], treat[fid]
        if not (b.finished and t.finished):
            excluded += 1
            continue
        out[fid] = b.fct / t.fct
    return out, excluded


def violation_fraction(speedups: Iterable[float], threshold: float) -> float:
    """Share of flows whose speed-up is strictly below ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    values = list(speedups)
    if not values:
        return 0.0
    return sum(1 for s in values if s < threshold) / len(values)


def in_window(rec: FlowRecord, start: float, end: float) -> bool:
    return start <= rec.arrival_time < end


@dataclass
class FctStats:
    count: int
    unfinished: int
    mean: float | None = None
    median: float | None = None
    p90: float | None = None
    p99: float | None = None

    @classmethod
    def of(cls, recs: Sequence[FlowRecord]) -> FctStats:
        fcts = [r.fct for r in recs if r.finished]
        stats = cls(len(fcts), len(recs) - len(fcts))
        if fcts:
            stats.mean = statistics.fmean(fcts)
            stats.median = percentile(fcts, 50)
            stats.p90 = percentile(fcts, 90)
            stats.p99 = percentile(fcts, 99)
        return stats


@dataclass
class RunSummary:
    groups: dict[str, FctStats]
    fraction_delivered: dict[str, float]
    speedup: dict[str, float] | None = None
    violation: dict[str, float] | None = None

    def to_text(self) -> str:
        lines = []
        for name, st in self.groups.items():
            lines.append(f"[fct.{name}]")
            lines.append(f"count = {st.count}")
            lines.append(f"unfinished = {st.unfinished}")
            for key in ("mean", "median", "p90", "p99"):
                value = getattr(st, key)
                lines.append(f"{key}_s = {'' if value is None else f'{value:.9g}'}")
        if self.fraction_delivered:
            lines.append("[fraction_delivered.flexible]")
            for key, value in self.fraction_delivered.items():
                lines.append(f"{key} = {value:.9g}")
        for title, table in (("speedup", self.speedup), ("violation", self.violation)):
            if table:
                lines.append(f"[{title}]")
                for key, value in table.items():
                    lines.append(f"{key} = {value:.9g}")
        return "\n".join(lines) + "\n"


def summarize(
    records: Sequence[FlowRecord],
    window: tuple[float, float] | None = None,
    baseline: Sequence[FlowRecord] | None = None,
    thresholds: Sequence[float] = (0.8,),
) -> RunSummary:
    """FCT statistics per flow kind and per regular size category.

    Flows arriving outside ``window`` are left out. With ``baseline`` the
    summary also carries mean-FCT speed-ups per kind and violation fractions
    of the flexible flows' per-flow speed-ups.
    """
    recs = [r for r in records if window is None or in_window(r, *window)]
    groups: dict[str, FctStats] = {}
    for kind in ("regular", "flexible"):
        groups[kind] = FctStats.of([r for r in recs if r.kind == kind])
    for name, _, _ in SIZE_CATEGORIES:
        groups[f"regular.{name}"] = FctStats.of(
            [r for r in recs if r.kind == "regular" and size_category(r.size_F) == name]
        )
    flex = [r.fraction_delivered for r in recs if r.kind == "flexible" and r.finished]
    fraction = {}
    if flex:
        fraction = {"mean": statistics.fmean(flex), "min": min(flex),
                    "median": percentile(flex, 50), "max": max(flex)}
    summary = RunSummary(groups, fraction)
    if baseline is not None:
        ids = {r.flow_id for r in recs}
        base = [r for r in baseline if r.flow_id in ids]
        summary.speedup, summary.violation = compare_runs(base, recs, thresholds)
    return summary


def compare_runs(
    baseline: Sequence[FlowRecord], treated: Sequence[FlowRecord], thresholds: Sequence[float] = (0.8,)
) -> tuple[dict[str, float], dict[str, float]]:
    speedups, excluded = speedup_join(baseline, treated)
    kinds = {r.flow_id: r.kind for r in treated}
    speed: dict[str, float] = {"excluded": float(excluded)}
    for kind in ("regular", "flexible"):
        ids = [fid for fid in speedups if kinds[fid] == kind]
        if not ids:
            continue
        base_mean = statistics.fmean(r.fct for r in baseline if r.flow_id in speedups and kinds[r.flow_id] == kind)
        treat_mean = statistics.fmean(r.fct for r in treated if r.flow_id in speedups and kinds[r.flow_id] == kind)
        speed[f"{kind}.mean_fct"] = base_mean / treat_mean
        speed[f"{kind}.per_flow_mean"] = statistics.fmean(speedups[f] for f in ids)
    flex = [speedups[f] for f in speedups if kinds[f] == "flexible"]
    violation = {f"flexible.below_{t:g}": violation_fraction(flex, t) for t in thresholds}
    return speed, violation


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format_value(value)
    return str(value)


def records_to_csv(records: Iterable[FlowRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FLOW_COLUMNS)
    for rec in records:
        writer.writerow([_cell(getattr(rec, name)) for name in FLOW_COLUMNS])
    return buf.getvalue()


def records_from_csv(text: str) -> list[FlowRecord]:
    from .core import parse_value

    out = []
    for row in csv.DictReader(io.StringIO(text)):
        opt = lambda v: None if v == "" else float(v)  # noqa: E731
        out.append(FlowRecord(
            flow_id=int(row["flow_id"]), kind=row["kind"], size_F=parse_value(row["size_F"]),
            arrival_time=float(row["arrival_time"]), completion_time=opt(row["completion_time"]),
            fct=opt(row["fct"]), delivered=float(row["delivered"]), discarded=float(row["discarded"]),
            mean_rate=float(row["mean_rate"]), priority_switch_count=int(row["priority_switch_count"]),
            finished=row["finished"] == "1",
        ))
    return out


SERIES_COLUMNS = ["time_s", "flow_id", "rate_bps", "priority", "B_alpha_bytes", "B_r_bytes", "R_fair_bps"]
LINK_COLUMNS = ["time_s", "link_id", "high_bps", "low_bps"]


def rows_to_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()
