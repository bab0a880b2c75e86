"""Joint route and bandwidth allocation.

:func:`train` grows a search tree with one level per aggregated flow; each
edge fixes that flow's (route, bandwidth) pair.  Episodes descend
epsilon-greedily on max-backed-up Q values, the leaf configuration is scored
by simulating a window under the Lyapunov scheduler, and the reward is the
normalised weighted score minus ``lambda`` times the capacity overload.

:func:`baseline_sequential` is the one-flow-at-a-time comparison scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constellation import RegionTopology
from .qos import DEFAULT_BOUNDS, ScoreBounds, objective, score_flow
from .routes import RouteCandidate, enumerate_routes
from .scheduler import CLASS_RANK
from .simulator import simulate_window
from .traffic import AggregatedFlow, rng_for


def bandwidth_grid(flow: AggregatedFlow, b_w: int) -> list[float]:
    """``b_w`` bandwidths evenly spanning the flow's throughput bounds."""
    if b_w < 2:
        raise ValueError("B_w must be >= 2")
    lo, hi = flow.profile.throughput_bounds
    step = (hi - lo) / (b_w - 1)
    return [lo + i * step for i in range(b_w - 1)] + [hi]


@dataclass
class AllocationConfig:
    """One route and one bandwidth per flow."""

    routes: dict[int, RouteCandidate]
    bandwidth: dict[int, float]
    choices: dict[int, tuple[int, int]] = field(default_factory=dict)  # (route idx, bw idx)

    def as_map(self) -> dict[int, tuple[RouteCandidate, float]]:
        return {fid: (self.routes[fid], self.bandwidth[fid]) for fid in sorted(self.routes)}


def capacity_cost(allocation: AllocationConfig, capacity: float = 1.0) -> float:
    """Sum over links of the relative load in excess of capacity."""
    load: dict = {}
    for fid, route in allocation.routes.items():
        bw = allocation.bandwidth[fid]
        for e in route.edges:
            load[e] = load.get(e, 0.0) + bw
    return sum(max(0.0, v - capacity) / capacity for _, v in sorted(load.items()))


@dataclass(frozen=True)
class SimSettings:
    slot_s: float
    window_slots: int = 10_000
    buffer_capacity: int = 1024
    score_bounds: ScoreBounds = DEFAULT_BOUNDS
    policy: str = "lyapunov"


class Problem:
    """Allocation instance for one topology snapshot.

    Reward evaluations reuse a fixed arrival seed, so identical leaf
    configurations are scored once and cached.
    """

    def __init__(
        self,
        flows: Sequence[AggregatedFlow],
        topology: RegionTopology,
        sim: SimSettings,
        *,
        k_routes: int = 4,
        b_w: int = 5,
        seed: int = 0,
        stream: tuple = ("train",),
    ):
        self.flows = list(flows)
        self.by_id = {f.id: f for f in self.flows}
        self.topology = topology
        self.sim = sim
        self.seed = seed
        self.stream = stream
        self.graph = topology.to_digraph()
        self.candidates = {
            f.id: enumerate_routes(f, self.graph, k_routes, slot_s=sim.slot_s) for f in self.flows
        }
        self.grids = {f.id: bandwidth_grid(f, b_w) for f in self.flows}
        self.cache: dict[tuple, Evaluation] = {}
        self.evaluations = 0

    @property
    def capacity(self) -> float:
        return self.topology.link_capacity

    def actions(self, flow_id: int) -> list[tuple[int, int]]:
        return [
            (r, b)
            for r in range(len(self.candidates[flow_id]))
            for b in range(len(self.grids[flow_id]))
        ]

    def leaf_count(self) -> int:
        return math.prod(len(self.actions(f.id)) for f in self.flows)

    def config(self, choices: Mapping[int, tuple[int, int]]) -> AllocationConfig:
        if set(choices) != set(self.by_id):
            raise ValueError("configuration must cover every flow")
        return AllocationConfig(
            routes={fid: self.candidates[fid][r] for fid, (r, _) in choices.items()},
            bandwidth={fid: self.grids[fid][b] for fid, (_, b) in choices.items()},
            choices=dict(choices),
        )


@dataclass(frozen=True)
class Evaluation:
    objective: float
    cost: float
    scores: dict[int, float]


def evaluate(config: AllocationConfig, problem: Problem, policy: str | None = None) -> Evaluation:
    key = (policy or problem.sim.policy, tuple(sorted(config.choices.items())))
    if config.choices and key in problem.cache:
        return problem.cache[key]
    sim = problem.sim
    metrics, _ = simulate_window(
        problem.topology.delays,
        problem.flows,
        config.as_map(),
        policy or sim.policy,
        sim.window_slots,
        problem.seed,
        slot_s=sim.slot_s,
        buffer_capacity=sim.buffer_capacity,
        capacity=problem.capacity,
        score_bounds=sim.score_bounds,
        stream=problem.stream,
    )
    scores = {
        f.id: score_flow(f.profile, metrics.flows[f.id], sim.score_bounds).omega_total
        for f in problem.flows
    }
    obj = objective([f.weight for f in problem.flows], [scores[f.id] for f in problem.flows], sim.score_bounds)
    ev = Evaluation(obj, capacity_cost(config, problem.capacity), scores)
    problem.evaluations += 1
    if config.choices:
        problem.cache[key] = ev
    return ev


def reward_value(obj: float, cost: float, lam: float) -> float:
    return obj - lam * cost


def reward(config: AllocationConfig, problem: Problem, lam: float = 1.0, policy: str | None = None) -> float:
    ev = evaluate(config, problem, policy)
    return reward_value(ev.objective, ev.cost, lam)


@dataclass(frozen=True)
class MctsParams:
    epsilon_0: float = 0.5
    a_0: float = 100.0
    b_0: float = 10.0
    epsilon_min: float = 0.0
    lam: float = 1.0
    episodes: int = 3000
    flow_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0 < self.epsilon_0 <= 1:
            raise ValueError("epsilon_0 must lie in (0, 1]")
        if not 0 <= self.epsilon_min < 1:
            raise ValueError("epsilon_min must lie in [0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


def epsilon_schedule(z: int, params: MctsParams) -> float:
    """Logarithmically decaying exploration rate for episode ``z``."""
    if z < 0:
        raise ValueError("episode index must be nonnegative")
    arg = z / params.a_0 + params.b_0
    if arg <= 0:
        raise ValueError("z / a_0 + b_0 must be positive")
    return max(1.0 - params.epsilon_0 * math.log10(arg), params.epsilon_min)


class MctsNode:
    __slots__ = ("depth", "config", "q_value", "children")

    def __init__(self, depth: int = 0, config: tuple = ()):
        self.depth = depth
        self.config = config  # ((flow_id, (route idx, bw idx)), ...)
        self.q_value = -math.inf
        self.children: dict[tuple[int, int], MctsNode] = {}

    def child(self, flow_id: int, action: tuple[int, int]) -> MctsNode:
        node = self.children.get(action)
        if node is None:
            node = MctsNode(self.depth + 1, self.config + ((flow_id, action),))
            self.children[action] = node
        return node

    def best_child(self) -> tuple[tuple[int, int], MctsNode]:
        # Ties go to the smallest action so replays are deterministic.
        return max(self.children.items(), key=lambda kv: (kv[1].q_value, tuple(-x for x in kv[0])))

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children.values())


def backpropagate(path: Sequence[MctsNode], value: float) -> None:
    for node in path:
        if value > node.q_value:
            node.q_value = value


def default_flow_order(flows: Sequence[AggregatedFlow]) -> tuple[int, ...]:
    return tuple(f.id for f in sorted(flows, key=lambda f: (-f.weight, f.id)))


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    reward: float
    constraint_violation: float
    epsilon: float
    objective: float


def run_episode(
    root: MctsNode,
    params: MctsParams,
    problem: Problem,
    rng: np.random.Generator,
    epsilon: float,
    *,
    order: Sequence[int] | None = None,
    forced: Mapping[int, tuple[int, int]] | None = None,
) -> tuple[AllocationConfig, float, Evaluation]:
    """Descend from the root to a leaf, score it and back the reward up.

    At a node with children the best-Q child is taken with probability
    ``1 - epsilon``; otherwise, and always at childless nodes, an action is
    drawn uniformly.  Every node visited is kept in the tree.
    """
    order = order or params.flow_order or default_flow_order(problem.flows)
    node = root
    path = [root]
    for fid in order:
        if forced is not None:
            action = forced[fid]
        elif node.children and rng.random() >= epsilon:
            action, _ = node.best_child()
        else:
            acts = problem.actions(fid)
            action = acts[int(rng.integers(len(acts)))]
        node = node.child(fid, action)
        path.append(node)
    config = problem.config(dict(node.config))
    ev = evaluate(config, problem)
    value = reward_value(ev.objective, ev.cost, params.lam)
    backpropagate(path, value)
    return config, value, ev


@dataclass
class TrainResult:
    best: AllocationConfig
    best_reward: float
    trace: list[EpisodeRecord]
    root: MctsNode


def train(
    problem: Problem,
    params: MctsParams,
    seed: int = 0,
    *,
    warm_start: Mapping[int, tuple[int, int]] | None = None,
) -> TrainResult:
    """Run ``params.episodes`` episodes and keep the best leaf seen."""
    rng = rng_for(seed, "mcts")
    root = MctsNode()
    order = params.flow_order or default_flow_order(problem.flows)
    best_cfg, best_val = None, -math.inf
    trace = []
    for z in range(params.episodes):
        eps = epsilon_schedule(z, params)
        forced = warm_start if (z == 0 and warm_start) else None
        cfg, value, ev = run_episode(root, params, problem, rng, eps, order=order, forced=forced)
        trace.append(EpisodeRecord(z, value, ev.cost, eps, ev.objective))
        if value > best_val:
            best_cfg, best_val = cfg, value
    return TrainResult(best_cfg, best_val, trace, root)


def baseline_sequential(problem: Problem) -> AllocationConfig:
    """Greedy per-flow routing in class order (EF, AF, BE), then by id.

    Each flow takes the cheapest path under an edge cost that inflates
    latency by the link's committed load, weighted by how much the flow
    cares about throughput and loss relative to latency.  Its bandwidth is
    the largest grid value that fits the residual capacity of that path
    (``tau_min`` when none fits) and is committed before the next flow.
    """
    cap = problem.capacity
    slot_s = problem.sim.slot_s
    load: dict = {}
    routes, bws = {}, {}
    graph = problem.graph.copy()
    for flow in sorted(problem.flows, key=lambda f: (CLASS_RANK[f.traffic_class], f.id)):
        z_delta, z_tau, z_l = flow.zeta
        bias = (z_tau + z_l) / max(z_delta, 1e-6)
        for u, v, data in graph.edges(data=True):
            data["cost"] = (data["delay"] + slot_s) * (1.0 + bias * load.get((u, v), 0.0) / cap)
        route = enumerate_routes(flow, graph, 1, slot_s=slot_s, weight="cost")[0]
        residual = min(cap - load.get(e, 0.0) for e in route.edges)
        grid = problem.grids[flow.id]
        fitting = [b for b in grid if b <= residual + 1e-12]
        bw = fitting[-1] if fitting else grid[0]
        for e in route.edges:
            load[e] = load.get(e, 0.0) + bw
        routes[flow.id] = route
        bws[flow.id] = bw
    return AllocationConfig(routes, bws)
