"""Shared domain vocabulary: nodes, partitions, replicas, transactions, placements."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

NodeId = int
PartitionId = int


class PlacementError(Exception):
    """Raised on an illegal placement query or mutation."""


class Role(enum.Enum):
    PRIMARY = "Primary"
    SECONDARY = "Secondary"


@dataclass
class ReplicaState:
    partition: PartitionId
    node: NodeId
    role: Role
    applied_epoch: int = 0
    delete_flag: bool = False
    access_freq: float = 0.0
    # decayed access counter feeding access_freq
    heat: float = 0.0
    # accesses since the current sampling interval opened
    hits: int = 0


class ActionKind(enum.Enum):
    ADD_REPLICA = "AddReplica"
    REMASTER = "Remaster"
    MIGRATE = "Migrate"
    REMOVE_REPLICA = "RemoveReplica"


class ReplicaAction(NamedTuple):
    kind: ActionKind
    partition: PartitionId
    node: NodeId

    def __str__(self) -> str:
        return f"ACTION {self.kind.value} {self.partition} {self.node}"


class Op(NamedTuple):
    partition: PartitionId
    key: int
    kind: str  # "R" or "W"
    payload: object = None


@dataclass
class TxnMeta:
    txn_id: int
    ops: tuple[Op, ...]
    arrival_time: float = 0.0
    txn_parts: tuple[PartitionId, ...] = field(init=False)

    def __post_init__(self):
        self.ops = tuple(Op(*o) for o in self.ops)
        for o in self.ops:
            if o.kind not in ("R", "W"):
                raise ValueError(f"bad op kind {o.kind!r}")
        # ordered set: first-appearance order
        self.txn_parts = tuple(dict.fromkeys(o.partition for o in self.ops))

    @property
    def writes(self) -> bool:
        return any(o.kind == "W" for o in self.ops)


class TxnBatch(Sequence):
    """Nonempty, arrival-ordered list of transactions."""

    def __init__(self, txns: Iterable[TxnMeta]):
        self.txns = sorted(txns, key=lambda t: (t.arrival_time, t.txn_id))
        if not self.txns:
            raise ValueError("empty transaction batch")

    def __len__(self):
        return len(self.txns)

    def __getitem__(self, i):
        return self.txns[i]


@dataclass
class LoadVector:
    loads: list[float]
    epsilon: float = 0.1

    @property
    def avg(self) -> float:
        return sum(self.loads) / len(self.loads) if self.loads else 0.0

    @property
    def theta(self) -> float:
        return self.avg * (1.0 + self.epsilon)

    def balanced(self) -> bool:
        return max(self.loads, default=0.0) <= self.theta


class PlacementMap:
    """Primary/secondary layout of every partition plus per-replica access stats.

    Replicas carrying ``delete_flag`` are tombstones: they are invisible to
    every query here and are physically dropped by :meth:`drop_tombstones`.
    """

    def __init__(self, n_nodes: int, n_partitions: int, k: int = 2,
                 replica_max: int = 4, decay: float = 0.5):
        if n_nodes < 1 or n_partitions < 0:
            raise ValueError("need at least one node")
        if not 1 <= k <= replica_max:
            raise ValueError("require 1 <= k <= replica_max")
        self.n_nodes = n_nodes
        self.n_partitions = n_partitions
        self.k = k
        self.replica_max = replica_max
        self.decay = decay
        self._replicas: list[dict[NodeId, ReplicaState]] = [{} for _ in range(n_partitions)]
        self._primary: list[NodeId] = [-1] * n_partitions
        # bumped on every primary change, lets in-flight work detect a move
        self.generation: list[int] = [0] * n_partitions

    @classmethod
    def round_robin(cls, n_nodes: int, n_partitions: int, k: int = 2,
                    replica_max: int = 4, **kw) -> "PlacementMap":
        p = cls(n_nodes, n_partitions, k=k, replica_max=replica_max, **kw)
        copies = min(k, n_nodes)
        for v in range(n_partitions):
            p._put(v, v % n_nodes, Role.PRIMARY)
            for j in range(1, copies):
                p._put(v, (v + j) % n_nodes, Role.SECONDARY)
        return p

    def _put(self, v, n, role):
        self._replicas[v][n] = ReplicaState(v, n, role)
        if role is Role.PRIMARY:
            self._primary[v] = n

    def _check(self, v):
        if not 0 <= v < self.n_partitions or self._primary[v] < 0:
            raise PlacementError(f"unknown partition {v}")

    # -- queries -------------------------------------------------------

    def primary_of(self, v: PartitionId) -> NodeId:
        self._check(v)
        return self._primary[v]

    def secondaries_of(self, v: PartitionId) -> frozenset[NodeId]:
        self._check(v)
        return frozenset(n for n, r in self._replicas[v].items()
                         if r.role is Role.SECONDARY and not r.delete_flag)

    def replica_nodes(self, v: PartitionId) -> frozenset[NodeId]:
        self._check(v)
        return frozenset(n for n, r in self._replicas[v].items() if not r.delete_flag)

    def holds(self, v: PartitionId, n: NodeId) -> bool:
        r = self._replicas[v].get(n)
        return r is not None and not r.delete_flag

    def replica(self, v: PartitionId, n: NodeId) -> ReplicaState:
        self._check(v)
        try:
            return self._replicas[v][n]
        except KeyError:
            raise PlacementError(f"node {n} holds no replica of {v}") from None

    def replicas(self, v: PartitionId, live_only: bool = True) -> list[ReplicaState]:
        self._check(v)
        return [r for r in self._replicas[v].values() if not (live_only and r.delete_flag)]

    def hosted(self, n: NodeId) -> list[ReplicaState]:
        return [reps[n] for reps in self._replicas if n in reps and not reps[n].delete_flag]

    def live_count(self, v: PartitionId) -> int:
        return len(self.replica_nodes(v))

    def freq(self, v: PartitionId, n: NodeId) -> float:
        r = self._replicas[v].get(n)
        return r.access_freq if r is not None and not r.delete_flag else 0.0

    @property
    def partitions(self) -> range:
        return range(self.n_partitions)

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    # -- access statistics ---------------------------------------------

    def record_access(self, v: PartitionId, n: NodeId, count: int = 1) -> "PlacementMap":
        r = self._replicas[v].get(n) if 0 <= v < self.n_partitions else None
        if r is None or r.delete_flag:
            raise PlacementError(f"node {n} hosts no replica of partition {v}")
        r.hits += count
        return self

    def close_interval(self) -> None:
        """Fold this interval's hits into decayed heat and renormalize access_freq."""
        top = 0.0
        for reps in self._replicas:
            for r in reps.values():
                r.heat = r.heat * self.decay + r.hits
                r.hits = 0
                top = max(top, r.heat)
        for reps in self._replicas:
            for r in reps.values():
                r.access_freq = r.heat / top if top > 0 else 0.0

    # -- mutations -----------------------------------------------------

    def add_replica(self, v: PartitionId, n: NodeId) -> ReplicaState:
        self._check(v)
        if not 0 <= n < self.n_nodes:
            raise PlacementError(f"unknown node {n}")
        cur = self._replicas[v].get(n)
        if cur is not None and not cur.delete_flag:
            raise PlacementError(f"node {n} already holds partition {v}")
        if self.live_count(v) >= self.replica_max:
            raise PlacementError(f"partition {v} already has replica_max replicas")
        r = ReplicaState(v, n, Role.SECONDARY)
        self._replicas[v][n] = r
        return r

    def flag_delete(self, v: PartitionId, n: NodeId) -> None:
        r = self.replica(v, n)
        if r.delete_flag:
            raise PlacementError(f"replica ({v},{n}) already flagged")
        if r.role is Role.PRIMARY:
            raise PlacementError("cannot remove the primary replica")
        if self.live_count(v) <= self.k:
            raise PlacementError(f"partition {v} would drop below k={self.k} replicas")
        r.delete_flag = True

    def drop_tombstones(self) -> list[tuple[PartitionId, NodeId]]:
        dropped = []
        for v, reps in enumerate(self._replicas):
            for n in [n for n, r in reps.items() if r.delete_flag]:
                del reps[n]
                dropped.append((v, n))
        return dropped

    def remaster(self, v: PartitionId, target: NodeId) -> None:
        """Atomically swap roles of the current primary and ``target``."""
        self._check(v)
        old = self._primary[v]
        if old == target:
            return
        r = self._replicas[v].get(target)
        if r is None or r.delete_flag:
            raise PlacementError(f"node {target} holds no live replica of {v}")
        self._replicas[v][old].role = Role.SECONDARY
        r.role = Role.PRIMARY
        self._primary[v] = target
        self.generation[v] += 1

    def apply(self, action: ReplicaAction) -> None:
        """Instantaneous application, used for planning replays and tests."""
        v, n = action.partition, action.node
        if action.kind is ActionKind.ADD_REPLICA:
            self.add_replica(v, n)
        elif action.kind is ActionKind.REMASTER:
            self.remaster(v, n)
        elif action.kind is ActionKind.MIGRATE:
            self.add_replica(v, n)
            self.remaster(v, n)
        elif action.kind is ActionKind.REMOVE_REPLICA:
            self.flag_delete(v, n)
            self.drop_tombstones()

    def copy(self) -> "PlacementMap":
        p = PlacementMap(self.n_nodes, self.n_partitions, self.k, self.replica_max, self.decay)
        p._primary = list(self._primary)
        p.generation = list(self.generation)
        p._replicas = [{n: ReplicaState(**vars(r)) for n, r in reps.items()}
                       for reps in self._replicas]
        return p

    def check_invariants(self, bounds: bool = True) -> None:
        for v, reps in enumerate(self._replicas):
            prim = [n for n, r in reps.items() if r.role is Role.PRIMARY]
            if prim != [self._primary[v]]:
                raise AssertionError(f"partition {v}: primaries {prim}")
            if reps[prim[0]].delete_flag:
                raise AssertionError(f"partition {v}: primary flagged for delete")
            live = sum(1 for r in reps.values() if not r.delete_flag)
            if bounds and not min(self.k, self.n_nodes) <= live <= self.replica_max:
                raise AssertionError(f"partition {v}: {live} live replicas")
            for r in reps.values():
                if not 0.0 <= r.access_freq <= 1.0:
                    raise AssertionError(f"freq out of range at ({v},{r.node})")

    # -- text format ---------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# nodes={self.n_nodes} k={self.k} replica_max={self.replica_max}"]
        for v in self.partitions:
            secs = sorted(self.secondaries_of(v))
            lines.append(",".join(str(x) for x in [v, self._primary[v], *secs]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n_nodes: int | None = None, k: int | None = None,
                  replica_max: int | None = None) -> "PlacementMap":
        header = {}
        rows = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, _, val = tok.partition("=")
                        header[key] = int(val)
                continue
            if not line:
                continue
            try:
                fields = [int(x) for x in line.split(",") if x.strip() != ""]
            except ValueError:
                raise PlacementError(f"line {lineno}: non-integer field in {raw!r}") from None
            if len(fields) < 2:
                raise PlacementError(f"line {lineno}: need partition,primary[,secondaries]")
            rows.append((lineno, fields))
        n_parts = max((f[0] for _, f in rows), default=-1) + 1
        n_nodes = n_nodes or header.get("nodes") or max(max(f[1:]) for _, f in rows) + 1
        k = k if k is not None else header.get("k", min(len(f) - 1 for _, f in rows))
        replica_max = replica_max or header.get("replica_max", max(4, max(len(f) - 1 for _, f in rows)))
        p = cls(n_nodes, n_parts, k=k, replica_max=replica_max)
        for lineno, (v, prim, *secs) in rows:
            if p._primary[v] >= 0:
                raise PlacementError(f"line {lineno}: partition {v} listed twice")
            if prim in secs or len(set(secs)) != len(secs):
                raise PlacementError(f"line {lineno}: node listed twice for partition {v}")
            if any(not 0 <= n < n_nodes for n in (prim, *secs)):
                raise PlacementError(f"line {lineno}: node id out of range")
            p._put(v, prim, Role.PRIMARY)
            for n in secs:
                p._put(v, n, Role.SECONDARY)
        missing = [v for v in range(n_parts) if p._primary[v] < 0]
        if missing:
            raise PlacementError(f"partitions without a row: {missing}")
        return p

    def __iter__(self) -> Iterator[PartitionId]:
        return iter(self.partitions)

    def __eq__(self, other):
        if not isinstance(other, PlacementMap):
            return NotImplemented
        return (self.n_nodes == other.n_nodes and self._primary == other._primary
                and all(self.secondaries_of(v) == other.secondaries_of(v) for v in self.partitions))


def primary_of(v: PartitionId, p: PlacementMap) -> NodeId:
    return p.primary_of(v)


def secondaries_of(v: PartitionId, p: PlacementMap) -> frozenset[NodeId]:
    return p.secondaries_of(v)


def record_access(v: PartitionId, n: NodeId, p: PlacementMap) -> PlacementMap:
    return p.record_access(v, n)
