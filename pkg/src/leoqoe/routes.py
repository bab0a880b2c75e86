"""Candidate routes over the region-level ISL graph."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import islice
from typing import Hashable

import networkx as nx


class NoRouteError(RuntimeError):
    """Source and destination are disconnected in the snapshot."""


Link = tuple[Hashable, Hashable]


@dataclass(frozen=True)
class RouteCandidate:
    flow_id: int
    nodes: tuple  # source ... destination
    prop_delays: tuple[float, ...]  # seconds, one per edge

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a route needs at least one edge")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("route must be a simple path")
        if len(self.prop_delays) != len(self.nodes) - 1:
            raise ValueError("one propagation delay per edge")

    @property
    def edges(self) -> tuple[Link, ...]:
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def hop_count(self) -> int:
        return len(self.nodes) - 1

    @property
    def total_prop_delay(self) -> float:
        return sum(self.prop_delays)

    def fixed_delay(self, slot_s: float) -> float:
        """Propagation plus one transmission slot per hop, in seconds."""
        return self.total_prop_delay + self.hop_count * slot_s


def enumerate_routes(
    flow,
    graph: nx.DiGraph,
    k: int,
    *,
    slot_s: float = 0.0,
    weight: str | None = None,
) -> list[RouteCandidate]:
    """Up to ``k`` loop-free routes, shortest first.

    Path cost is propagation delay plus ``slot_s`` per hop unless a custom
    edge attribute is named in ``weight``.
    """
    if flow.source == flow.dest:
        raise ValueError("flow endpoints must differ")
    if flow.source not in graph or flow.dest not in graph:
        raise NoRouteError(f"flow {flow.id}: endpoint not in snapshot")
    if k < 1:
        raise ValueError("k must be >= 1")

    if weight is None:
        def cost(u, v, data):
            return data["delay"] + slot_s
    else:
        def cost(u, v, data):
            return data[weight]

    try:
        paths = list(islice(nx.shortest_simple_paths(graph, flow.source, flow.dest, weight=cost), k))
    except nx.NetworkXNoPath as exc:
        raise NoRouteError(f"flow {flow.id}: no route {flow.source} -> {flow.dest}") from exc
    return [
        RouteCandidate(
            flow.id,
            tuple(p),
            tuple(graph.edges[u, v]["delay"] for u, v in zip(p[:-1], p[1:])),
        )
        for p in paths
    ]
