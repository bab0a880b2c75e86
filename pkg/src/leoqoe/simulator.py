"""Discrete-time packet engine over the region-level ISL graph.

Order of work inside one slot:

1. Poisson arrivals are enqueued at their source egress link.
2. Packets whose propagation timer expires are delivered or enqueued at
   the next hop.
3. Each backlogged link lets its scheduler start one transmission.
4. Overflowing buffers drop tail packets round-robin across flows.
5. Virtual queues advance (lazily, inside :class:`EgressState`).

A transmission started in slot ``t`` over a link with ``p`` propagation
slots reaches the next node in slot ``t + 1 + p``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .qos import DEFAULT_BOUNDS, FlowMetrics, ScoreBounds
from .routes import Link, RouteCandidate
from .scheduler import (
    EgressState,
    InfeasibleBudget,
    compute_per_hop_bounds,
    drop_overflow,
    link_utilization,
    schedule_slot,
)
from .traffic import ArrivalProcess


class RouteFault(RuntimeError):
    """A packet reached a node with no usable next hop."""


class InvariantViolation(AssertionError):
    pass


class Packet:
    __slots__ = ("flow_id", "generation_slot", "route", "hop", "enqueue_slot", "seq")

    def __init__(self, flow_id: int, generation_slot: int, route: tuple[Link, ...]):
        self.flow_id = flow_id
        self.generation_slot = generation_slot
        self.route = route
        self.hop = 0  # index of the link the packet waits for / travels on
        self.enqueue_slot = generation_slot
        self.seq = 0

    @property
    def hops_remaining(self) -> int:
        return len(self.route) - self.hop

    @property
    def current_node(self):
        return self.route[self.hop][0] if self.hop < len(self.route) else self.route[-1][1]


@dataclass
class FlowCounters:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    latency_slots: int = 0

    def copy(self) -> FlowCounters:
        return FlowCounters(self.generated, self.delivered, self.dropped, self.latency_slots)


@dataclass
class WindowMetrics:
    window_slots: int
    start_slot: int
    flows: dict[int, FlowMetrics]
    transmissions: int = 0


class Network:
    """Mutable simulation state: queues, packets in flight and counters."""

    def __init__(
        self,
        flows,
        *,
        slot_s: float,
        buffer_capacity: int = 1024,
        policy: str = "lyapunov",
        score_bounds: ScoreBounds = DEFAULT_BOUNDS,
        audit: bool = False,
    ):
        self.flows = {f.id: f for f in flows}
        self.slot_s = slot_s
        self.buffer_capacity = buffer_capacity
        self.policy = policy
        self.score_bounds = score_bounds
        self.audit = audit
        self.slot = 0
        self.links: dict[Link, EgressState] = {}
        self.prop_slots: dict[Link, int] = {}
        self.routes: dict[int, tuple[Link, ...]] = {}
        self.bandwidth: dict[int, float] = {}
        self.calendar: dict[int, list[Packet]] = defaultdict(list)
        self.active: dict[Link, None] = {}
        self.totals = {fid: FlowCounters() for fid in self.flows}
        self.in_flight = {fid: 0 for fid in self.flows}
        self._arrivals: dict[int, list[tuple[int, int]]] = {}
        self.transmissions = 0

    # -- configuration -------------------------------------------------
    def apply_allocation(
        self,
        delays: Mapping[Link, float],
        allocation: Mapping[int, tuple[RouteCandidate, float]],
        *,
        capacity: float = 1.0,
        weights: Mapping[int, float] | None = None,
    ) -> None:
        """Install routes, bandwidths and per-hop bounds for the next windows.

        Existing queues and virtual queues stay in place (handover keeps the
        region-level state); links a flow no longer uses stop accruing its
        deficit.
        """
        if set(allocation) != set(self.flows):
            raise ValueError("allocation must cover every flow")
        self.prop_slots = {l: max(int(math.ceil(d / self.slot_s - 1e-9)), 0) for l, d in delays.items()}
        util = link_utilization(allocation, capacity)
        new_links: dict[Link, set[int]] = defaultdict(set)
        for fid, (route, bw) in sorted(allocation.items()):
            flow = self.flows[fid]
            for e in route.edges:
                if e not in self.prop_slots:
                    raise RouteFault(f"flow {fid}: link {e} absent from topology")
            try:
                bounds = compute_per_hop_bounds(flow, route, util, self.slot_s)
            except InfeasibleBudget:
                bounds = None
            w = weights.get(fid, flow.weight) if weights else flow.weight
            for e in route.edges:
                st = self.links.get(e)
                if st is None:
                    st = self.links[e] = EgressState(
                        e, self.buffer_capacity, slot_s=self.slot_s, score_bounds=self.score_bounds
                    )
                st.add_flow(flow, bw, bounds[e] if bounds else None, self.slot, weight=w)
                new_links[e].add(fid)
            self.routes[fid] = route.edges
            self.bandwidth[fid] = bw
        for e, st in self.links.items():
            for fid in st.order:
                if fid not in new_links.get(e, ()) and st.flows[fid].bandwidth:
                    st.retire_flow(fid, self.slot)

    def set_arrivals(self, counts: Mapping[int, np.ndarray]) -> None:
        """Per-flow arrival counts for the slots starting at the current one."""
        events: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for fid in sorted(counts):
            c = np.asarray(counts[fid], dtype=np.int64)
            for k in np.flatnonzero(c).tolist():
                events[self.slot + k].append((fid, int(c[k])))
        self._arrivals = dict(sorted(events.items()))

    # -- slot engine ---------------------------------------------------
    def step(self) -> None:
        t = self.slot
        links = self.links

        # 1. arrivals
        for fid, n in self._arrivals.pop(t, ()):
            route = self.routes[fid]
            st = links[route[0]]
            for _ in range(n):
                st.enqueue(Packet(fid, t, route), t)
            self.totals[fid].generated += n
            self.in_flight[fid] += n
            self.active[route[0]] = None

        # 2. propagation completions
        arriving = self.calendar.pop(t, None)
        if arriving:
            for pkt in arriving:
                if pkt.hop >= len(pkt.route):
                    c = self.totals[pkt.flow_id]
                    c.delivered += 1
                    c.latency_slots += t - pkt.generation_slot
                    self.in_flight[pkt.flow_id] -= 1
                else:
                    e = pkt.route[pkt.hop]
                    st = links.get(e)
                    if st is None or pkt.flow_id not in st.flows:
                        raise RouteFault(f"packet of flow {pkt.flow_id} has no next hop at {e[0]}")
                    st.enqueue(pkt, t)
                    self.active[e] = None

        # 3. scheduling, 4. drops
        idle = []
        sent = 0
        senders = [] if self.audit else None
        for e in self.active:
            st = links[e]
            fid = schedule_slot(st, self.policy, t)
            if fid is not None:
                pkt = st.pop(fid)
                pkt.hop += 1
                self.calendar[t + 1 + self.prop_slots[e]].append(pkt)
                sent += 1
                if senders is not None:
                    senders.append(e)
            if st.occupancy > st.buffer_capacity:
                for pkt in drop_overflow(st):
                    self.totals[pkt.flow_id].dropped += 1
                    self.in_flight[pkt.flow_id] -= 1
            if st.occupancy == 0:
                idle.append(e)
        for e in idle:
            del self.active[e]
        self.transmissions += sent
        if self.audit:
            self._audit(senders)
        self.slot = t + 1

    def run(self, n_slots: int) -> None:
        for _ in range(n_slots):
            self.step()

    # -- bookkeeping ---------------------------------------------------
    def queued_by_flow(self) -> dict[int, int]:
        out = {fid: 0 for fid in self.flows}
        for st in self.links.values():
            for fid, entry in st.flows.items():
                out[fid] += len(entry.queue)
        return out

    def propagating_by_flow(self) -> dict[int, int]:
        out = {fid: 0 for fid in self.flows}
        for pkts in self.calendar.values():
            for p in pkts:
                out[p.flow_id] += 1
        return out

    def check_conservation(self) -> None:
        queued = self.queued_by_flow()
        prop = self.propagating_by_flow()
        for fid, c in self.totals.items():
            held = queued[fid] + prop[fid]
            if c.generated != c.delivered + c.dropped + held or held != self.in_flight[fid]:
                raise InvariantViolation(
                    f"flow {fid}: generated={c.generated} delivered={c.delivered} "
                    f"dropped={c.dropped} in_flight={held}"
                )

    def _audit(self, senders: list[Link]) -> None:
        if len(senders) != len(set(senders)):
            raise InvariantViolation(f"slot {self.slot}: a link started two transmissions")
        self.check_conservation()
        for e, st in self.links.items():
            if st.occupancy != sum(len(x.queue) for x in st.flows.values()):
                raise InvariantViolation(f"link {e}: occupancy out of sync")
            if st.occupancy > st.buffer_capacity:
                raise InvariantViolation(f"link {e}: buffer over capacity after drops")
            if st.occupancy and e not in self.active and self.policy == "lyapunov":
                raise InvariantViolation(f"link {e}: backlog left unscheduled")

    def snapshot_counters(self) -> dict[int, FlowCounters]:
        return {fid: c.copy() for fid, c in self.totals.items()}


def window_metrics(
    before: Mapping[int, FlowCounters],
    after: Mapping[int, FlowCounters],
    window_slots: int,
    slot_s: float,
    start_slot: int = 0,
) -> WindowMetrics:
    flows = {}
    for fid, a in after.items():
        b = before[fid]
        gen = a.generated - b.generated
        dlv = a.delivered - b.delivered
        drp = a.dropped - b.dropped
        lat = a.latency_slots - b.latency_slots
        flows[fid] = FlowMetrics(
            avg_latency=(lat / dlv) * slot_s if dlv else float("nan"),
            throughput=dlv / window_slots,
            drop_rate=drp / gen if gen else 0.0,
            generated=gen,
            delivered=dlv,
            dropped=drp,
        )
    return WindowMetrics(window_slots, start_slot, flows)


def sample_window_arrivals(
    allocation: Mapping[int, tuple[RouteCandidate, float]],
    n_slots: int,
    seed: int,
    stream: tuple = (),
) -> dict[int, np.ndarray]:
    return {
        fid: ArrivalProcess(bw, seed, stream=(*stream, fid)).counts(n_slots)
        for fid, (_, bw) in sorted(allocation.items())
    }


def run_window(
    network: Network,
    window_slots: int,
    arrivals: Mapping[int, np.ndarray],
) -> WindowMetrics:
    """Advance ``network`` by one measurement window of ``window_slots``."""
    if window_slots <= 1:
        raise ValueError("a window needs more than one slot")
    start = network.slot
    before = network.snapshot_counters()
    tx0 = network.transmissions
    network.set_arrivals(arrivals)
    network.run(window_slots)
    m = window_metrics(before, network.totals, window_slots, network.slot_s, start)
    m.transmissions = network.transmissions - tx0
    return m


def simulate_window(
    delays: Mapping[Link, float],
    flows,
    allocation: Mapping[int, tuple[RouteCandidate, float]],
    policy: str,
    window_slots: int,
    seed: int,
    *,
    slot_s: float,
    buffer_capacity: int = 1024,
    capacity: float = 1.0,
    score_bounds: ScoreBounds = DEFAULT_BOUNDS,
    stream: tuple = (),
    weights: Mapping[int, float] | None = None,
    audit: bool = False,
) -> tuple[WindowMetrics, Network]:
    """One window on a fresh (empty) network."""
    net = Network(
        flows,
        slot_s=slot_s,
        buffer_capacity=buffer_capacity,
        policy=policy,
        score_bounds=score_bounds,
        audit=audit,
    )
    net.apply_allocation(delays, allocation, capacity=capacity, weights=weights)
    arrivals = sample_window_arrivals(allocation, window_slots, seed, stream)
    return run_window(net, window_slots, arrivals), net
