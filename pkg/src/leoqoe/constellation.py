"""Walker-style shell geometry, ISL grid graphs and handover snapshots.

Satellites are indexed by ``(plane, slot)`` and flattened to integer node
ids ``plane * sats_per_plane + slot``.  Orbits are circular with uniform
angular velocity; geometry is used only to derive propagation delays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

SPEED_OF_LIGHT_KM_S = 299_792.458
EARTH_MU_KM3_S2 = 398_600.4418


@dataclass(frozen=True)
class ShellParams:
    plane_count: int = 72
    sats_per_plane: int = 22
    altitude: float = 550.0  # km
    inclination: float = 53.0  # deg
    phasing_offset: int = 1
    earth_radius: float = 6371.0  # km

    def __post_init__(self):
        if self.plane_count < 1:
            raise ValueError("plane_count must be >= 1")
        if self.sats_per_plane < 2:
            raise ValueError("sats_per_plane must be >= 2")
        if not self.altitude > 0:
            raise ValueError("altitude must be positive")
        if not 0 <= self.inclination <= 180:
            raise ValueError("inclination must lie in [0, 180] degrees")

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def period(self) -> float:
        """Circular orbital period in seconds."""
        return 2 * math.pi * math.sqrt(self.orbit_radius**3 / EARTH_MU_KM3_S2)

    @property
    def size(self) -> int:
        return self.plane_count * self.sats_per_plane


def propagate_positions(shell: ShellParams, t: float) -> np.ndarray:
    """Earth-centred positions (km) of every satellite at time ``t``.

    Returns an array of shape ``(plane_count, sats_per_plane, 3)``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not shell.altitude > 0:
        raise ValueError("altitude must be positive")
    P, S = shell.plane_count, shell.sats_per_plane
    r = shell.orbit_radius
    inc = math.radians(shell.inclination)
    mean_motion = 2 * math.pi / shell.period

    planes = np.arange(P)[:, None]
    slots = np.arange(S)[None, :]
    raan = 2 * math.pi * planes / P
    u = (
        2 * math.pi * slots / S
        + 2 * math.pi * shell.phasing_offset * planes / (P * S)
        + mean_motion * t
    )
    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    x = cos_u * cos_o - sin_u * math.cos(inc) * sin_o
    y = cos_u * sin_o + sin_u * math.cos(inc) * cos_o
    z = np.broadcast_to(sin_u * math.sin(inc), x.shape)
    return r * np.stack([x, y, z], axis=-1)


@dataclass(frozen=True)
class GridSpec:
    """Which part of the plane/slot lattice to wire up.

    ``wrap_slots`` closes each in-plane ring.  Cross-plane seam links are
    never modelled.
    """

    planes: tuple[int, int] | None = None  # half-open [start, stop)
    slots: tuple[int, int] | None = None
    wrap_slots: bool = True


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    propagation_delay: float  # seconds


@dataclass
class TopologySnapshot:
    timestamp: float
    node_ids: list[int]
    positions: dict[int, np.ndarray]
    edges: list[Edge]
    link_capacity: float = 1.0
    sats_per_plane: int = 0
    grid: dict[int, tuple[int, int]] = field(default_factory=dict)

    def neighbours(self, node: int) -> list[int]:
        return [e.dst for e in self.edges if e.src == node]

    def delay(self, src: int, dst: int) -> float:
        for e in self.edges:
            if e.src == src and e.dst == dst:
                return e.propagation_delay
        raise KeyError((src, dst))

    def undirected_edge_count(self) -> int:
        return len({frozenset((e.src, e.dst)) for e in self.edges})

    def to_digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        for e in self.edges:
            g.add_edge(e.src, e.dst, delay=e.propagation_delay)
        return g


def _link_delay(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b)) / SPEED_OF_LIGHT_KM_S


def build_isl_graph(
    positions: np.ndarray,
    grid_spec: GridSpec | None = None,
    *,
    timestamp: float = 0.0,
    link_capacity: float = 1.0,
) -> TopologySnapshot:
    """Grid ISLs: two intra-plane and up to two inter-plane neighbours."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 3 or positions.shape[0] * positions.shape[1] == 0:
        raise ValueError("positions must be a nonempty (planes, slots, 3) array")
    P, S = positions.shape[:2]
    spec = grid_spec or GridSpec()
    p0, p1 = spec.planes or (0, P)
    s0, s1 = spec.slots or (0, S)
    full_ring = spec.wrap_slots and (s0, s1) == (0, S)

    def nid(p: int, s: int) -> int:
        return p * S + s

    nodes = [nid(p, s) for p in range(p0, p1) for s in range(s0, s1)]
    pairs: set[tuple[int, int]] = set()
    for p in range(p0, p1):
        for s in range(s0, s1):
            nxt = s + 1
            if nxt >= s1:
                nxt = s0 if full_ring else None
            if nxt is not None and nxt != s:
                pairs.add(tuple(sorted((nid(p, s), nid(p, nxt)))))
            if p + 1 < p1:
                pairs.add((nid(p, s), nid(p + 1, s)))

    edges = []
    for a, b in sorted(pairs):
        pa, sa = divmod(a, S)
        pb, sb = divmod(b, S)
        d = _link_delay(positions[pa, sa], positions[pb, sb])
        edges.append(Edge(a, b, d))
        edges.append(Edge(b, a, d))
    return TopologySnapshot(
        timestamp=timestamp,
        node_ids=nodes,
        positions={nid(p, s): positions[p, s].copy() for p in range(p0, p1) for s in range(s0, s1)},
        edges=edges,
        link_capacity=link_capacity,
        sats_per_plane=S,
        grid={nid(p, s): (p, s) for p in range(p0, p1) for s in range(s0, s1)},
    )


def extract_subgrid(
    snapshot: TopologySnapshot, rows: int, cols: int, anchor: tuple[int, int] = (0, 0)
) -> TopologySnapshot:
    """Induced subgraph on ``rows`` planes by ``cols`` slots from ``anchor``.

    The subgrid never wraps, so the anchor must leave room inside the
    constellation lattice.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if rows * cols > len(snapshot.node_ids):
        raise ValueError("subgrid larger than the constellation")
    planes = {p for p, _ in snapshot.grid.values()}
    slots = {s for _, s in snapshot.grid.values()}
    ap, asl = anchor
    if (
        ap not in planes
        or asl not in slots
        or ap + rows - 1 not in planes
        or asl + cols - 1 not in slots
    ):
        raise ValueError(f"anchor {anchor} puts the subgrid outside the constellation")

    keep = {
        n
        for n, (p, s) in snapshot.grid.items()
        if ap <= p < ap + rows and asl <= s < asl + cols
    }
    # Drop the ring-closing edge when the subgrid spans a whole plane.
    def inside(e: Edge) -> bool:
        if e.src not in keep or e.dst not in keep:
            return False
        (_, sa), (_, sb) = snapshot.grid[e.src], snapshot.grid[e.dst]
        return abs(sa - sb) <= 1 or sa == sb

    return TopologySnapshot(
        timestamp=snapshot.timestamp,
        node_ids=[n for n in snapshot.node_ids if n in keep],
        positions={n: snapshot.positions[n] for n in keep},
        edges=[e for e in snapshot.edges if inside(e)],
        link_capacity=snapshot.link_capacity,
        sats_per_plane=snapshot.sats_per_plane,
        grid={n: snapshot.grid[n] for n in keep},
    )


Region = tuple[int, int]


@dataclass(frozen=True)
class VirtualNodeMap:
    """Which satellite serves each fixed ground region over an interval."""

    start: float
    end: float
    assignment: dict[Region, int]

    def satellite(self, region: Region) -> int:
        return self.assignment[region]

    @property
    def regions(self) -> list[Region]:
        return sorted(self.assignment)


@dataclass
class RegionTopology:
    """Snapshot seen through the virtual-node map: nodes are regions."""

    snapshot: TopologySnapshot
    vmap: VirtualNodeMap
    delays: dict[tuple[Region, Region], float]

    @property
    def regions(self) -> list[Region]:
        return self.vmap.regions

    @property
    def link_capacity(self) -> float:
        return self.snapshot.link_capacity

    @property
    def links(self) -> list[tuple[Region, Region]]:
        return sorted(self.delays)

    def to_digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.regions)
        for (a, b), d in sorted(self.delays.items()):
            g.add_edge(a, b, delay=d)
        return g


def region_topology(snapshot: TopologySnapshot, vmap: VirtualNodeMap) -> RegionTopology:
    sat_to_region = {sat: reg for reg, sat in vmap.assignment.items()}
    delays = {}
    for e in snapshot.edges:
        if e.src in sat_to_region and e.dst in sat_to_region:
            delays[(sat_to_region[e.src], sat_to_region[e.dst])] = e.propagation_delay
    return RegionTopology(snapshot, vmap, delays)


def serving_shift(shell: ShellParams, t: float, handover_phase: float = 0.0) -> int:
    """Slot offset of the satellite serving a region at time ``t``.

    A region sits ``handover_phase`` slot spacings ahead of its initial
    server.  Satellites advance in phase, so the server changes to the
    trailing (incoming) satellite once that one is closer.
    """
    spacing_time = shell.period / shell.sats_per_plane
    return int(math.floor(handover_phase - t / spacing_time + 0.5))


def snapshot_sequence(
    shell: ShellParams,
    duration: float,
    interval: float,
    *,
    rows: int = 4,
    cols: int = 4,
    anchor: tuple[int, int] = (0, 0),
    link_capacity: float = 1.0,
    handover_phase: float = 0.0,
) -> list[tuple[TopologySnapshot, VirtualNodeMap]]:
    """One subgrid snapshot per interval plus its virtual-node map.

    Regions form a fixed ``rows x cols`` grid; region ``(r, c)`` is served
    by the satellite of plane ``anchor[0] + r`` nearest to its reference
    point.  Handovers shift every column by the same number of slots, so
    region-level adjacency never changes while delays follow the geometry.
    """
    if not interval > 0:
        raise ValueError("interval must be positive")
    if duration < interval:
        raise ValueError("duration must be at least one interval")
    ap, asl = anchor
    if not (0 <= ap and ap + rows <= shell.plane_count):
        raise ValueError(f"anchor {anchor} puts the subgrid outside the constellation")
    if cols > shell.sats_per_plane:
        raise ValueError("subgrid wider than a plane")
    S = shell.sats_per_plane
    count = int(math.floor(duration / interval + 1e-9))
    out = []
    for k in range(count):
        t = k * interval
        start_slot = (asl + serving_shift(shell, t, handover_phase)) % S
        pos = propagate_positions(shell, t)
        assignment = {
            (r, c): (ap + r) * S + (start_slot + c) % S for r in range(rows) for c in range(cols)
        }
        sub_edges = []
        for (r, c), sat in assignment.items():
            for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                other = assignment.get((r + dr, c + dc))
                if other is not None:
                    a, b = divmod(sat, S), divmod(other, S)
                    sub_edges.append(Edge(sat, other, _link_delay(pos[a], pos[b])))
        sub_edges.sort(key=lambda e: (e.src, e.dst))
        keep = sorted(assignment.values())
        snap = TopologySnapshot(
            timestamp=t,
            node_ids=keep,
            positions={n: pos[divmod(n, S)].copy() for n in keep},
            edges=sub_edges,
            link_capacity=link_capacity,
            sats_per_plane=S,
            grid={n: divmod(n, S) for n in keep},
        )
        out.append((snap, VirtualNodeMap(t, t + interval, assignment)))
    return out
