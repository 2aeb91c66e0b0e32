"""Co-access heat graph over partitions and its clustering into clumps."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

from .model import NodeId, PartitionId, PlacementMap, TxnMeta

CROSS = "cross"
SAME = "same"


@dataclass
class Clump:
    pids: frozenset[PartitionId]
    weight: float
    dest: NodeId | None = None

    def __post_init__(self):
        self.pids = frozenset(self.pids)
        if not self.pids:
            raise ValueError("empty clump")

    def sorted_pids(self) -> list[PartitionId]:
        return sorted(self.pids)


@dataclass
class HeatGraph:
    """Vertex weight = access count, edge weight = co-access count.

    Edges whose endpoints had their primaries on different nodes when the
    graph was built are weighted ``cross_weight`` per co-access. Forecast
    accesses are kept apart in ``predicted``; a vertex weighs the larger of
    its observed and forecast load so expected traffic is not counted twice.
    """

    primary: dict[PartitionId, NodeId] = field(default_factory=dict)
    cross_weight: float = 10.0
    vertices: dict[PartitionId, float] = field(default_factory=dict)
    edges: dict[tuple[PartitionId, PartitionId], float] = field(default_factory=dict)
    predicted: dict[PartitionId, float] = field(default_factory=dict)

    def edge_kind(self, u: PartitionId, v: PartitionId) -> str:
        pu, pv = self.primary.get(u), self.primary.get(v)
        return SAME if pu is not None and pu == pv else CROSS

    def add_access(self, parts: Iterable[PartitionId], scale: float = 1.0,
                   forecast: bool = False) -> None:
        parts = sorted(set(parts))
        for v in parts:
            if forecast:
                self.predicted[v] = self.predicted.get(v, 0.0) + scale
                self.vertices.setdefault(v, 0.0)
            else:
                self.vertices[v] = self.vertices.get(v, 0.0) + scale
        self._add_edges(parts, scale)

    def _add_edges(self, parts, scale):
        for u, v in combinations(parts, 2):
            inc = scale * (self.cross_weight if self.edge_kind(u, v) == CROSS else 1.0)
            if inc > 0:
                self.edges[(u, v)] = self.edges.get((u, v), 0.0) + inc

    def vertex_weight(self, v: PartitionId) -> float:
        return max(self.vertices.get(v, 0.0), self.predicted.get(v, 0.0))

    def weight(self, u: PartitionId, v: PartitionId) -> float:
        return self.edges.get((u, v) if u < v else (v, u), 0.0)

    def neighbors(self) -> dict[PartitionId, list[tuple[PartitionId, float]]]:
        adj: dict[PartitionId, list[tuple[PartitionId, float]]] = {v: [] for v in self.vertices}
        for (u, v), w in self.edges.items():
            adj[u].append((v, w))
            adj[v].append((u, w))
        for lst in adj.values():
            lst.sort()
        return adj

    @property
    def h_vertices(self) -> list[PartitionId]:
        """Vertices hottest first, ties by ascending id."""
        return sorted(self.vertices, key=lambda v: (-self.vertex_weight(v), v))

    def copy(self) -> "HeatGraph":
        return HeatGraph(dict(self.primary), self.cross_weight,
                         dict(self.vertices), dict(self.edges), dict(self.predicted))

    def dump(self) -> str:
        """Edge list ``u v weight kind``, one line per edge."""
        return "".join(f"{u} {v} {w:g} {self.edge_kind(u, v)}\n"
                       for (u, v), w in sorted(self.edges.items()))

    @classmethod
    def load(cls, text: str, vertex_weights: dict[PartitionId, float] | None = None,
             cross_weight: float = 10.0) -> "HeatGraph":
        """Rebuild from :meth:`dump` output (edge kinds become the snapshot)."""
        g = cls(cross_weight=cross_weight)
        fake_node = 0
        for line in text.splitlines():
            if not line.strip():
                continue
            u, v, w, kind = line.split()
            u, v = int(u), int(v)
            for x in (u, v):
                if x not in g.primary:
                    g.primary[x] = fake_node
                    fake_node += 1
            if kind == SAME:
                g.primary[v] = g.primary[u]
            g.edges[(min(u, v), max(u, v))] = float(w)
            g.vertices.setdefault(u, 0.0)
            g.vertices.setdefault(v, 0.0)
        if vertex_weights:
            g.vertices.update(vertex_weights)
        return g


def build_graph(batch: Iterable[TxnMeta], placement: PlacementMap,
                cross_weight: float = 10.0) -> HeatGraph:
    if cross_weight < 1:
        raise ValueError("cross_weight must be >= 1")
    g = HeatGraph({v: placement.primary_of(v) for v in placement.partitions}, cross_weight)
    for t in batch:
        g.add_access(t.txn_parts)
    return g


def generate_clumps(g: HeatGraph, alpha: float = 5.0) -> list[Clump]:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    adj = g.neighbors()
    visited: set[PartitionId] = set()
    clumps = []
    for seed in g.h_vertices:
        if seed in visited:
            continue
        visited.add(seed)
        members = [seed]
        weight = g.vertex_weight(seed)
        frontier = deque([seed])
        while frontier:
            u = frontier.popleft()
            for v, w in adj[u]:
                if v not in visited and w > alpha:
                    visited.add(v)
                    members.append(v)
                    weight += g.vertex_weight(v)
                    frontier.append(v)
        clumps.append(Clump(frozenset(members), weight))
    return clumps
