"""Per-egress-link packet scheduling.

The ``lyapunov`` policy serves, each slot, the backlogged flow with the
largest drift-plus-penalty marginal gain::

    w_f * (zeta_delta * [Om(d) - Om(d + 1 slot)] + zeta_tau * V_f)

where ``Om`` is the per-hop latency score and ``V_f`` the flow's throughput
deficit on this link.  ``fifo`` and ``strict_priority`` are comparison
policies.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .qos import DEFAULT_BOUNDS, LOWER_IS_BETTER, ScoreBounds, map_score
from .routes import Link, RouteCandidate

POLICIES = ("lyapunov", "fifo", "strict_priority")
CLASS_RANK = {"EF": 0, "AF": 1, "BE": 2}


class InfeasibleBudget(ValueError):
    """End-to-end latency bound does not cover the route's fixed delay."""


@dataclass(frozen=True)
class PerHopBounds:
    flow_id: int
    link: Link
    delta_max_hop: float  # seconds
    delta_min_hop: float


def link_utilization(
    allocation: Mapping[int, tuple[RouteCandidate, float]], capacity: float = 1.0
) -> dict[Link, float]:
    """Allocated load over capacity for every link carrying a flow."""
    load: dict[Link, float] = {}
    for route, bw in allocation.values():
        for e in route.edges:
            load[e] = load.get(e, 0.0) + bw
    return {e: v / capacity for e, v in load.items()}


def compute_per_hop_bounds(
    flow,
    route: RouteCandidate,
    utilization: Mapping[Link, float],
    slot_s: float,
) -> dict[Link, PerHopBounds]:
    """Split the flow's queuing budget over its hops, scaled by congestion.

    Each hop receives ``(bound - fixed) / hops * gamma_link / mean_gamma``;
    the lower bound is floored at zero.
    """
    delta_min, delta_max = flow.profile.latency_bounds
    fixed = route.fixed_delay(slot_s)
    if delta_max <= fixed:
        raise InfeasibleBudget(
            f"flow {flow.id}: latency bound {delta_max:.4g}s <= fixed delay {fixed:.4g}s"
        )
    hops = route.hop_count
    gammas = [utilization.get(e, 0.0) for e in route.edges]
    mean_gamma = sum(gammas) / hops
    out = {}
    for e, g in zip(route.edges, gammas):
        factor = g / mean_gamma if mean_gamma > 0 else 1.0
        hi = (delta_max - fixed) / hops * factor
        lo = max((delta_min - fixed) / hops * factor, 0.0)
        out[e] = PerHopBounds(flow.id, e, hi, lo)
    return out


def update_virtual_queue(v: float, bandwidth: float, s: int) -> float:
    return max(v + bandwidth - s, 0.0)


def hop_delay_score(
    delay_s: float, bounds: PerHopBounds, score_bounds: ScoreBounds = DEFAULT_BOUNDS
) -> float:
    return map_score(delay_s, bounds.delta_min_hop, bounds.delta_max_hop, LOWER_IS_BETTER, score_bounds)


def marginal_gain(
    flow,
    hoq_delay_slots: float,
    v: float,
    bounds: PerHopBounds | None,
    slot_s: float,
    score_bounds: ScoreBounds = DEFAULT_BOUNDS,
    weight: float | None = None,
) -> float:
    """Drift-plus-penalty gain of serving ``flow`` now rather than next slot.

    ``bounds=None`` marks an infeasible latency budget: the latency score is
    pinned at its minimum, so only the throughput-deficit term remains.
    """
    w = flow.weight if weight is None else weight
    z_delta, z_tau, _ = flow.profile.zeta
    delay_term = 0.0
    if bounds is not None and z_delta:
        d = hoq_delay_slots * slot_s
        delay_term = hop_delay_score(d, bounds, score_bounds) - hop_delay_score(
            d + slot_s, bounds, score_bounds
        )
    return w * (z_delta * delay_term + z_tau * v)


@dataclass
class FlowOnLink:
    flow: object
    bandwidth: float
    bounds: PerHopBounds | None
    weight: float
    queue: deque = field(default_factory=deque)
    v: float = 0.0
    v_slot: int = 0  # slot at which ``v`` is exact
    # Gain coefficients, refreshed by ``EgressState.add_flow``.
    w_delta: float = 0.0
    w_tau: float = 0.0
    lo_slots: float = 0.0
    width_slots: float = 0.0

    def refresh(self, slot_s: float, score_bounds: ScoreBounds) -> None:
        z_delta, z_tau, _ = self.flow.profile.zeta
        self.w_tau = self.weight * z_tau
        if self.bounds is None or not z_delta:
            self.w_delta = 0.0
            return
        self.w_delta = self.weight * z_delta * score_bounds.span
        self.lo_slots = self.bounds.delta_min_hop / slot_s
        self.width_slots = (self.bounds.delta_max_hop - self.bounds.delta_min_hop) / slot_s

    def gain(self, hoq_delay_slots: int, v: float) -> float:
        """Same value as :func:`marginal_gain`, from cached coefficients."""
        g = self.w_tau * v
        if self.w_delta:
            a = (hoq_delay_slots - self.lo_slots) / self.width_slots
            b = a + 1.0 / self.width_slots
            if b > 0.0 and a < 1.0:
                a = 0.0 if a < 0.0 else a
                b = 1.0 if b > 1.0 else b
                g += self.w_delta * (b - a)
        return g


class EgressState:
    """Per-flow queues, virtual queues and drop pointer of one outbound ISL.

    Virtual queues are advanced lazily: between two services of a flow its
    deficit only grows by ``bandwidth`` per slot, so the value at any slot is
    recovered exactly from the last stored one.
    """

    def __init__(
        self,
        link: Link,
        buffer_capacity: int = 1024,
        *,
        slot_s: float = 1.0,
        score_bounds: ScoreBounds = DEFAULT_BOUNDS,
    ):
        self.link = link
        self.buffer_capacity = buffer_capacity
        self.slot_s = slot_s
        self.score_bounds = score_bounds
        self.flows: dict[int, FlowOnLink] = {}
        self.order: list[int] = []
        self.occupancy = 0
        self.rr_pointer = 0
        self._seq = 0

    def add_flow(self, flow, bandwidth: float, bounds: PerHopBounds | None, slot: int = 0,
                 weight: float | None = None) -> None:
        w = flow.weight if weight is None else weight
        entry = self.flows.get(flow.id)
        if entry is None:
            entry = self.flows[flow.id] = FlowOnLink(flow, bandwidth, bounds, w, v_slot=slot)
            self.order.append(flow.id)
            self.order.sort()
        else:
            entry.v = self.virtual_queue(flow.id, slot)
            entry.v_slot = slot
            entry.flow, entry.bandwidth, entry.bounds, entry.weight = flow, bandwidth, bounds, w
        entry.refresh(self.slot_s, self.score_bounds)

    def retire_flow(self, flow_id: int, slot: int) -> None:
        """Flow no longer routed here: freeze its deficit, keep queued packets."""
        entry = self.flows[flow_id]
        entry.v = self.virtual_queue(flow_id, slot)
        entry.v_slot = slot
        entry.bandwidth = 0.0

    def virtual_queue(self, flow_id: int, slot: int) -> float:
        e = self.flows[flow_id]
        return e.v + e.bandwidth * (slot - e.v_slot)

    def enqueue(self, packet, slot: int) -> None:
        packet.enqueue_slot = slot
        packet.seq = self._seq
        self._seq += 1
        self.flows[packet.flow_id].queue.append(packet)
        self.occupancy += 1

    def backlogged(self) -> list[int]:
        return [fid for fid in self.order if self.flows[fid].queue]

    def hoq_delay(self, flow_id: int, slot: int) -> int:
        return slot - self.flows[flow_id].queue[0].enqueue_slot

    def pop(self, flow_id: int):
        self.occupancy -= 1
        return self.flows[flow_id].queue.popleft()

    def commit(self, selected: int | None, slot: int) -> None:
        """Virtual-queue update for slot ``slot`` given the realised choice."""
        if selected is None:
            return  # lazy growth already covers s = 0
        e = self.flows[selected]
        e.v = update_virtual_queue(self.virtual_queue(selected, slot), e.bandwidth, 1)
        e.v_slot = slot + 1


def _select_lyapunov(state: EgressState, slot: int) -> int | None:
    best = None
    best_key = None
    flows = state.flows
    for fid in state.order:
        e = flows[fid]
        q = e.queue
        if not q:
            continue
        gain = e.gain(slot - q[0].enqueue_slot, e.v + e.bandwidth * (slot - e.v_slot))
        key = (gain, e.weight, -fid)
        if best_key is None or key > best_key:
            best, best_key = fid, key
    return best


def _select_fifo(state: EgressState) -> int | None:
    best = None
    best_key = None
    for fid in state.order:
        q = state.flows[fid].queue
        if q:
            key = (q[0].enqueue_slot, q[0].seq)
            if best_key is None or key < best_key:
                best, best_key = fid, key
    return best


def _select_strict_priority(state: EgressState) -> int | None:
    best = None
    best_key = None
    for fid in state.order:
        e = state.flows[fid]
        if e.queue:
            head = e.queue[0]
            key = (CLASS_RANK[e.flow.profile.traffic_class], head.enqueue_slot, head.seq)
            if best_key is None or key < best_key:
                best, best_key = fid, key
    return best


def schedule_slot(state: EgressState, policy: str, slot: int) -> int | None:
    """Pick at most one backlogged flow to transmit and update virtual queues.

    Lyapunov ties go to the higher weight, then the lower flow id.
    """
    if policy == "lyapunov":
        chosen = _select_lyapunov(state, slot)
    elif policy == "fifo":
        chosen = _select_fifo(state)
    elif policy == "strict_priority":
        chosen = _select_strict_priority(state)
    else:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    state.commit(chosen, slot)
    return chosen


def drop_overflow(state: EgressState) -> list:
    """Round-robin tail drops until the shared buffer fits."""
    dropped = []
    n = len(state.order)
    while state.occupancy > state.buffer_capacity:
        for _ in range(n):
            fid = state.order[state.rr_pointer % n]
            state.rr_pointer = (state.rr_pointer + 1) % n
            q = state.flows[fid].queue
            if q:
                dropped.append(q.pop())
                state.occupancy -= 1
                break
    return dropped


__all__ = [
    "POLICIES",
    "EgressState",
    "InfeasibleBudget",
    "PerHopBounds",
    "compute_per_hop_bounds",
    "drop_overflow",
    "hop_delay_score",
    "link_utilization",
    "marginal_gain",
    "schedule_slot",
    "update_virtual_queue",
]
