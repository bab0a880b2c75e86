"""Scenario orchestration: snapshots x iterations x policy variants.

Each variant keeps its own :class:`~leoqoe.simulator.Network` for the whole
iteration, so queues and virtual queues migrate across topology handovers.
All variants of an iteration see the same arrival streams.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import allocator
from .allocator import AllocationConfig, Problem, SimSettings, TrainResult
from .config import ScenarioConfig
from .constellation import RegionTopology, region_topology
from .qos import fairness_index, score_flow
from .simulator import Network, run_window, sample_window_arrivals
from .traffic import AggregatedFlow, aggregate, generate_flows, stream_seed

log = logging.getLogger(__name__)

POLICY_SCHEDULERS = {"dsroq": "lyapunov", "dsroq_fifo": "fifo"}


@dataclass(frozen=True)
class Variant:
    label: str
    allocation: str  # "mcts" | "baseline"
    scheduler: str
    ef_weight: float | None = None  # scheduling-time override for EF flows


def compare_variants(cfg: ScenarioConfig, policies: Sequence[str]) -> list[Variant]:
    out = []
    for p in policies:
        if p == "baseline":
            out.append(Variant(p, "baseline", cfg.scheduler.baseline_policy))
        elif p in POLICY_SCHEDULERS:
            out.append(Variant(p, "mcts", POLICY_SCHEDULERS[p]))
        else:
            raise ValueError(f"unknown policy {p!r}")
    return out


def sweep_variants(ef_weights: Sequence[float]) -> list[Variant]:
    if not ef_weights:
        raise ValueError("ef_weights must be nonempty")
    return [Variant("dsroq", "mcts", "lyapunov", float(w)) for w in ef_weights]


@dataclass(frozen=True)
class ScoreRow:
    iteration: int
    snapshot: int
    window: int
    policy: str
    ef_weight: float
    flow_id: int
    app: str
    traffic_class: str
    generated: int
    delivered: int
    dropped: int
    avg_latency: float
    throughput: float
    drop_rate: float
    omega_delta: float
    omega_tau: float
    omega_l: float
    omega_total: float


@dataclass(frozen=True)
class FairnessRow:
    iteration: int
    snapshot: int
    window: int
    policy: str
    ef_weight: float
    fairness_index: float


@dataclass
class ScenarioResult:
    scores: list[ScoreRow] = field(default_factory=list)
    fairness: list[FairnessRow] = field(default_factory=list)
    traces: dict[tuple[int, int], TrainResult] = field(default_factory=dict)
    allocations: dict[tuple[str, int, int], AllocationConfig] = field(default_factory=dict)
    migrations: int = 0


def scenario_flows(cfg: ScenarioConfig, regions, iteration: int) -> list[AggregatedFlow]:
    t = cfg.traffic
    key = iteration if t.resample_flows else 0
    seed = int(stream_seed(cfg.seed, "flows", key).generate_state(1)[0])
    records = generate_flows(t.flow_count, t.mix, regions, seed)
    return aggregate(records, t.app_profiles(), t.class_weights)


def sim_settings(cfg: ScenarioConfig) -> SimSettings:
    return SimSettings(
        slot_s=cfg.traffic.slot_s,
        window_slots=cfg.simulator.window_slots,
        buffer_capacity=cfg.scheduler.buffer_packets,
        score_bounds=cfg.scheduler.score_bounds(),
        policy=cfg.scheduler.policy,
    )


def build_problem(
    cfg: ScenarioConfig, flows, topology: RegionTopology, flow_key: int, snapshot: int
) -> Problem:
    return Problem(
        flows,
        topology,
        sim_settings(cfg),
        k_routes=cfg.allocator.k_routes,
        b_w=cfg.allocator.bandwidth_levels,
        seed=cfg.seed,
        stream=("train", flow_key, snapshot),
    )


def topologies(cfg: ScenarioConfig) -> list[RegionTopology]:
    return [region_topology(s, v) for s, v in cfg.constellation.snapshots()]


def run_scenario(
    cfg: ScenarioConfig,
    variants: Sequence[Variant],
    *,
    iterations: int | None = None,
    episodes: int | None = None,
    audit: bool = False,
    progress=None,
) -> ScenarioResult:
    result = ScenarioResult()
    topos = topologies(cfg)
    params = cfg.allocator.params(episodes)
    n_iter = iterations or cfg.simulator.iterations
    sim = sim_settings(cfg)
    trained: dict[tuple[int, int], TrainResult] = {}

    for it in range(n_iter):
        flows = scenario_flows(cfg, topos[0].regions, it)
        flow_key = it if cfg.traffic.resample_flows else 0
        nets = {
            v: Network(
                flows,
                slot_s=sim.slot_s,
                buffer_capacity=sim.buffer_capacity,
                policy=v.scheduler,
                score_bounds=sim.score_bounds,
                audit=audit,
            )
            for v in variants
        }
        prev_best = None
        for k, topo in enumerate(topos):
            problem = build_problem(cfg, flows, topo, flow_key, k)
            allocs: dict[str, AllocationConfig] = {}
            if any(v.allocation == "mcts" for v in variants):
                tk = (flow_key, k)
                if tk not in trained:
                    warm = prev_best.choices if (cfg.allocator.warm_start and prev_best) else None
                    seed = int(stream_seed(cfg.seed, "mcts", flow_key, k).generate_state(1)[0])
                    log.info("training iteration-key %d snapshot %d (%d flows)", flow_key, k, len(flows))
                    trained[tk] = allocator.train(problem, params, seed, warm_start=warm)
                allocs["mcts"] = trained[tk].best
                prev_best = trained[tk].best
                result.traces[tk] = trained[tk]
            if any(v.allocation == "baseline" for v in variants):
                allocs["baseline"] = allocator.baseline_sequential(problem)

            for v in variants:
                alloc = allocs[v.allocation]
                weights = None
                if v.ef_weight is not None:
                    weights = {f.id: v.ef_weight for f in flows if f.traffic_class == "EF"}
                net = nets[v]
                if k > 0:
                    result.migrations += 1
                net.apply_allocation(topo.delays, alloc.as_map(), capacity=topo.link_capacity, weights=weights)
                result.allocations[(v.label, it, k)] = alloc
                for w in range(cfg.simulator.windows_per_snapshot):
                    arrivals = sample_window_arrivals(
                        alloc.as_map(), sim.window_slots, cfg.seed, ("eval", it, k, w)
                    )
                    metrics = run_window(net, sim.window_slots, arrivals)
                    if audit:
                        net.check_conservation()
                    _record(result, flows, metrics, it, k, w, v, cfg)
            if progress:
                progress(it, k)
    return result


def _record(result, flows, metrics, it, k, w, v: Variant, cfg: ScenarioConfig) -> None:
    bounds = cfg.scheduler.score_bounds()
    ef_w = v.ef_weight if v.ef_weight is not None else cfg.traffic.class_weights.get("EF", 20.0)
    totals = []
    for f in flows:
        m = metrics.flows[f.id]
        s = score_flow(f.profile, m, bounds)
        totals.append(s.omega_total)
        result.scores.append(
            ScoreRow(
                it, k, w, v.label, ef_w, f.id, f.profile.name, f.traffic_class,
                m.generated, m.delivered, m.dropped, m.avg_latency, m.throughput, m.drop_rate,
                s.omega_delta, s.omega_tau, s.omega_l, s.omega_total,
            )
        )
    result.fairness.append(FairnessRow(it, k, w, v.label, ef_w, fairness_index(totals, bounds)))
