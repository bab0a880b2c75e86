"""Application profiles, flow generation/aggregation and Poisson arrivals."""
from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Sequence

import numpy as np

TRAFFIC_CLASSES = ("EF", "AF", "BE")
DEFAULT_CLASS_WEIGHTS = {"EF": 20.0, "AF": 2.0, "BE": 1.0}
APP_NAMES = ("VC", "LS", "VoD", "FT")


def stream_seed(seed: int, *names: Hashable) -> np.random.SeedSequence:
    """Named sub-stream of a global seed, stable across runs and platforms."""
    words = [int(seed) & 0xFFFFFFFF]
    for n in names:
        if isinstance(n, (int, np.integer)):
            words.append(int(n) & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(str(n).encode()))
    return np.random.SeedSequence(words)


def rng_for(seed: int, *names: Hashable) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, *names))


@dataclass(frozen=True)
class AppProfile:
    name: str
    traffic_class: str
    zeta: tuple[float, float, float]  # latency, throughput, drop
    latency_bounds: tuple[float, float]  # seconds (min, max)
    throughput_bounds: tuple[float, float]  # packets/slot (min, max)
    drop_bounds: tuple[float, float]  # fraction (min, max)

    def __post_init__(self):
        if self.traffic_class not in TRAFFIC_CLASSES:
            raise ValueError(f"unknown traffic class {self.traffic_class!r}")
        lo, hi = self.latency_bounds
        if not lo < hi:
            raise ValueError(f"{self.name}: latency min must be below max")
        lo, hi = self.throughput_bounds
        if not (0 <= lo < hi):
            raise ValueError(f"{self.name}: throughput min must be below max")
        lo, hi = self.drop_bounds
        if not (0 <= lo < hi <= 1):
            raise ValueError(f"{self.name}: drop bounds must satisfy 0 <= min < max <= 1")
        if any(z < 0 for z in self.zeta) or not math.isclose(sum(self.zeta), 1.0, abs_tol=1e-9):
            raise ValueError(f"{self.name}: zeta must be nonnegative and sum to 1")


# Representative bounds only; scenarios override them from config.
DEFAULT_PROFILES = {
    "VC": AppProfile("VC", "EF", (0.8, 0.1, 0.1), (0.020, 0.060), (0.05, 0.30), (0.001, 0.02)),
    "LS": AppProfile("LS", "AF", (0.1, 0.45, 0.45), (0.050, 0.200), (0.05, 0.40), (0.005, 0.05)),
    "VoD": AppProfile("VoD", "AF", (0.1, 0.45, 0.45), (0.100, 0.400), (0.05, 0.40), (0.005, 0.05)),
    "FT": AppProfile("FT", "BE", (0.1, 0.8, 0.1), (0.200, 1.000), (0.05, 0.60), (0.01, 0.10)),
}


@dataclass(frozen=True)
class FlowRecord:
    id: int
    source: Hashable
    dest: Hashable
    app: str


@dataclass(frozen=True)
class AggregatedFlow:
    id: int
    source: Hashable
    dest: Hashable
    profile: AppProfile
    weight: float
    beta: int = 1

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError("aggregated flow endpoints must differ")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")

    @property
    def traffic_class(self) -> str:
        return self.profile.traffic_class

    @property
    def zeta(self) -> tuple[float, float, float]:
        return self.profile.zeta

    def with_weight(self, weight: float) -> AggregatedFlow:
        return replace(self, weight=weight)


def class_weight(traffic_class: str, weights: dict[str, float] | None = None) -> float:
    if traffic_class not in TRAFFIC_CLASSES:
        raise ValueError(f"unknown traffic class {traffic_class!r}")
    table = DEFAULT_CLASS_WEIGHTS if weights is None else {**DEFAULT_CLASS_WEIGHTS, **weights}
    return float(table[traffic_class])


def apportion(count: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder rounding of ``count * fractions``."""
    raw = [count * f for f in fractions]
    base = [math.floor(x) for x in raw]
    short = count - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def generate_flows(
    count: int,
    mix: dict[str, float],
    region_set: Sequence[Hashable],
    seed: int,
) -> list[FlowRecord]:
    """Draw ``count`` flows with app types split by ``mix``.

    Endpoints are uniform over ordered pairs of distinct regions.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    regions = list(region_set)
    if len(regions) < 2:
        raise ValueError("need at least two regions to draw distinct endpoints")
    if not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
        raise ValueError("mix fractions must sum to 1")
    if any(f < 0 for f in mix.values()):
        raise ValueError("mix fractions must be nonnegative")

    apps = list(mix)
    counts = apportion(count, [mix[a] for a in apps])
    labels = [a for a, n in zip(apps, counts) for _ in range(n)]
    rng = rng_for(seed, "flows")
    labels = [labels[i] for i in rng.permutation(count)]
    n = len(regions)
    src = rng.integers(0, n, size=count)
    # Second endpoint drawn from the n-1 others keeps pairs uniform.
    dst = (src + rng.integers(1, n, size=count)) % n
    return [
        FlowRecord(i, regions[int(s)], regions[int(d)], app)
        for i, (s, d, app) in enumerate(zip(src, dst, labels))
    ]


def aggregate(
    flows: Iterable[FlowRecord],
    profiles: dict[str, AppProfile] | None = None,
    class_weights: dict[str, float] | None = None,
) -> list[AggregatedFlow]:
    """Group flows sharing (source, destination, app) into aggregates."""
    profiles = profiles or DEFAULT_PROFILES
    groups = Counter((f.source, f.dest, f.app) for f in flows)
    out = []
    for i, (src, dst, app) in enumerate(sorted(groups, key=lambda k: (str(k[0]), str(k[1]), k[2]))):
        profile = profiles[app]
        out.append(
            AggregatedFlow(
                id=i,
                source=src,
                dest=dst,
                profile=profile,
                weight=class_weight(profile.traffic_class, class_weights),
                beta=groups[(src, dst, app)],
            )
        )
    return out


@dataclass
class ArrivalProcess:
    """Poisson packet arrivals for one flow on its own random stream.

    Draws are generated in fixed-size blocks so slot ``k`` always maps to the
    same value for a given ``(seed, stream)``.
    """

    mean_rate: float
    seed: int
    stream: tuple = ()
    block_size: int = 4096
    _buffer: np.ndarray = field(default=None, init=False, repr=False)
    _rng: np.random.Generator = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.mean_rate < 0:
            raise ValueError("mean_rate must be nonnegative")
        self._rng = rng_for(self.seed, "arrivals", *self.stream)
        self._buffer = np.empty(0, dtype=np.int64)

    def _extend_to(self, n: int) -> None:
        while len(self._buffer) < n:
            more = self._rng.poisson(self.mean_rate, size=self.block_size)
            self._buffer = np.concatenate([self._buffer, more])

    def counts(self, n_slots: int, start: int = 0) -> np.ndarray:
        self._extend_to(start + n_slots)
        return self._buffer[start : start + n_slots]


def sample_arrivals(proc: ArrivalProcess, slot_index: int) -> int:
    if slot_index < 0:
        raise ValueError("slot_index must be nonnegative")
    return int(proc.counts(1, slot_index)[0])


def slot_seconds(packet_bytes: float, link_rate_mbps: float) -> float:
    """Slot length: time to serialise one packet at the ISL rate."""
    return packet_bytes * 8 / (link_rate_mbps * 1e6)


def mbps_to_packets_per_slot(mbps: float, link_rate_mbps: float) -> float:
    # Capacity is normalised to 1 packet per slot.
    return mbps / link_rate_mbps


def packets_per_slot_to_mbps(rate: float, link_rate_mbps: float) -> float:
    return rate * link_rate_mbps
