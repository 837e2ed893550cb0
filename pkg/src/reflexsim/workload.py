"""Seeded flow arrival generators."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .core import INF, FlowSpec


class EmptyCdf(ValueError):
    pass


class BadRate(ValueError):
    pass


@dataclass(frozen=True)
class SizeCdfTable:
    """Piecewise-linear flow size CDF.

    A first probability above zero is a point mass on the first size.
    """

    sizes: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.sizes:
            raise EmptyCdf("size CDF has no entries")
        if len(self.sizes) != len(self.probs):
            raise ValueError("sizes and probabilities differ in length")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("CDF sizes must be strictly increasing")
        if any(b <= a for a, b in zip(self.probs, self.probs[1:])):
            raise ValueError("CDF probabilities must be strictly increasing")
        if self.probs[0] < 0 or self.probs[-1] != 1.0:
            raise ValueError("CDF probabilities must start >= 0 and end at 1")
        if self.sizes[0] <= 0:
            raise ValueError("CDF sizes must be positive")

    @classmethod
    def parse(cls, text: str) -> SizeCdfTable:
        sizes, probs = [], []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            size, prob = line.split()
            sizes.append(float(size))
            probs.append(float(prob))
        return cls(tuple(sizes), tuple(probs))

    @classmethod
    def load(cls, path: str | Path) -> SizeCdfTable:
        return cls.parse(Path(path).read_text())

    @classmethod
    def websearch(cls) -> SizeCdfTable:
        text = resources.files("reflexsim").joinpath("data/websearch_cdf.txt").read_text()
        return cls.parse(text)

    @property
    def mean(self) -> float:
        s = np.asarray(self.sizes)
        p = np.asarray(self.probs)
        return float(p[0] * s[0] + np.sum(np.diff(p) * (s[1:] + s[:-1]) / 2.0))

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sizes for uniforms ``u``, rounded up to whole bytes."""
        return np.ceil(np.interp(u, self.probs, self.sizes))


@dataclass(frozen=True)
class Poisson:
    rate: float


@dataclass(frozen=True)
class FixedTimes:
    times: tuple[float, ...]


@dataclass(frozen=True)
class ConstantSize:
    size: float


@dataclass(frozen=True)
class EmpiricalSize:
    table: SizeCdfTable


@dataclass(frozen=True)
class AllPairsUniform:
    hosts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FixedEndpoints:
    src: str
    dst: str


@dataclass(frozen=True)
class ArrivalProcess:
    arrivals: Union[Poisson, FixedTimes]
    size: Union[ConstantSize, EmpiricalSize]
    alpha: float = INF
    r: float = 1.0
    endpoints: Union[AllPairsUniform, FixedEndpoints] = FixedEndpoints("h0", "h1")

    @property
    def flexible(self) -> bool:
        return not (self.alpha == INF and self.r == 1.0)


def _arrival_times(arrivals, duration: float, rng: np.random.Generator) -> np.ndarray:
    if isinstance(arrivals, FixedTimes):
        times = np.array(sorted(arrivals.times), dtype=float)
        return times[times < duration]
    if not arrivals.rate > 0:
        raise BadRate(f"Poisson rate must be > 0, got {arrivals.rate}")
    chunks = []
    t = 0.0
    block = max(16, int(arrivals.rate * duration * 1.1) + 16)
    while t < duration:
        gaps = rng.exponential(1.0 / arrivals.rate, block)
        times = t + np.cumsum(gaps)
        chunks.append(times)
        t = float(times[-1])
    times = np.concatenate(chunks)
    return times[times < duration]


def generate(
    process: ArrivalProcess,
    duration: float,
    seed: int | np.random.SeedSequence,
    hosts: Sequence[str] | None = None,
    first_id: int = 0,
) -> list[FlowSpec]:
    """Flows arriving in ``[0, duration)``. Arrival times, sizes and endpoints
    come from separate child streams of ``seed``."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    t_rng, s_rng, e_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    times = _arrival_times(process.arrivals, duration, t_rng)
    n = len(times)

    if isinstance(process.size, ConstantSize):
        sizes = np.full(n, float(process.size.size))
    else:
        sizes = process.size.table.sample(s_rng.random(n))

    if isinstance(process.endpoints, FixedEndpoints):
        pairs = [(process.endpoints.src, process.endpoints.dst)] * n
    else:
        pool = list(process.endpoints.hosts or hosts or ())
        if len(pool) < 2:
            raise ValueError("all-pairs endpoints need at least two hosts")
        src = e_rng.integers(0, len(pool), n)
        # Second draw over the other hosts keeps the pair uniform with src != dst.
        off = e_rng.integers(1, len(pool), n)
        dst = (src + off) % len(pool)
        pairs = [(pool[a], pool[b]) for a, b in zip(src, dst)]

    flows = []
    for k in range(n):
        size = sizes[k]
        flows.append(FlowSpec(
            flow_id=first_id + k,
            src=pairs[k][0],
            dst=pairs[k][1],
            size=INF if size == INF else int(size),
            alpha=process.alpha,
            r=process.r,
            arrival_time=float(times[k]),
        ))
    return flows


def generate_many(
    processes: Sequence[ArrivalProcess], duration: float, seed: int, hosts: Sequence[str] | None = None
) -> list[FlowSpec]:
    """Merge several processes into one flow list numbered by arrival order."""
    children = np.random.SeedSequence(seed).spawn(len(processes))
    tagged = []
    for i, (proc, child) in enumerate(zip(processes, children)):
        for k, f in enumerate(generate(proc, duration, child, hosts)):
            tagged.append((f.arrival_time, i, k, f))
    tagged.sort(key=lambda x: x[:3])
    out = []
    for new_id, (_, _, _, f) in enumerate(tagged):
        out.append(FlowSpec(new_id, f.src, f.dst, f.size, f.alpha, f.r, f.arrival_time))
    return out


def target_rate_for_utilization(
    mean_size: float, link_count: int, capacity: float, utilization: float
) -> float:
    """Poisson arrival rate (flows/s) giving ``utilization`` of the
    aggregate access capacity ``link_count * capacity`` (bits/s)."""
    if not (mean_size > 0 and link_count > 0 and capacity > 0):
        raise ValueError("mean size, link count and capacity must be positive")
    if not 0 < utilization <= 1:
        raise ValueError("utilization must be in (0, 1]")
    return utilization * link_count * capacity / (8.0 * mean_size)
