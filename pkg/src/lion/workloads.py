"""Seeded transaction generators: YCSB-like, TPC-C NewOrder-like, dynamic hotspot scenarios."""

from __future__ import annotations

import bisect
import enum
import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .model import Op, PartitionId, TxnMeta

SECOND_US = 1_000_000.0


def initial_node(v: PartitionId, n_nodes: int) -> int:
    """Primary node of ``v`` under the round-robin starting layout."""
    return v % n_nodes


def _make_ops(rng: random.Random, parts, n_ops: int, read_fraction: float, keys: int,
              txn_id: int) -> list[Op]:
    ops = []
    per = [n_ops // len(parts) + (1 if i < n_ops % len(parts) else 0) for i in range(len(parts))]
    for v, k in zip(parts, per):
        for key in rng.sample(range(keys), min(k, keys)):
            kind = "R" if rng.random() < read_fraction else "W"
            ops.append(Op(v, key, kind, (txn_id, v, key) if kind == "W" else None))
    return ops


def cross_node_matching(parts: Sequence[PartitionId], n_nodes: int, rng: random.Random,
                        first: Sequence[PartitionId] = ()) -> list[tuple[PartitionId, PartitionId]]:
    """Pair up ``parts`` so partners start on different nodes.

    Members of ``first`` are matched before the rest so a hot subset gets
    partners from outside it. Partners always come from the fullest other
    node, which leaves nobody stranded unless one node holds more than half
    of what is left.
    """
    first_set = set(first)
    buckets: dict[int, list] = {}
    for v in parts:
        if v not in first_set:
            buckets.setdefault(initial_node(v, n_nodes), []).append(v)
    for n in sorted(buckets):
        rng.shuffle(buckets[n])

    def fullest(exclude):
        cands = [n for n in sorted(buckets) if n != exclude and buckets[n]]
        return max(cands, key=lambda n: len(buckets[n])) if cands else None

    pairs = []
    for v in sorted(first_set):
        n = fullest(initial_node(v, n_nodes))
        if n is not None:
            pairs.append((v, buckets[n].pop()))
    while True:
        a = fullest(None)
        b = fullest(a) if a is not None else None
        if b is None:
            break
        pairs.append((buckets[a].pop(), buckets[b].pop()))
    return [tuple(sorted(pr)) for pr in pairs]


# -- period-level generator ----------------------------------------------------


@dataclass
class Period:
    """One stretch of a stream with a fixed access pattern.

    A transaction picks its first partition (from ``hot`` with probability
    ``skew_factor``, else uniformly from the remaining members, so the hot
    set's share is exactly ``skew_factor``); with probability
    ``cross_ratio`` it adds one partner drawn from the same group.
    """

    duration_us: float
    groups: tuple[tuple[PartitionId, ...], ...]
    hot: frozenset = frozenset()
    skew_factor: float = 0.0
    cross_ratio: float = 1.0
    ops_per_txn: int = 10
    read_fraction: float = 0.9
    keys_per_partition: int = 1000
    label: str = ""
    # share of cross txns whose partner is any member on another node
    partner_noise: float = 0.0
    n_nodes: int = 4

    def __post_init__(self):
        self.groups = tuple(tuple(g) for g in self.groups)
        self.hot = frozenset(self.hot)
        if not self.groups:
            raise ValueError("period needs at least one partition group")
        if not (0 <= self.skew_factor <= 1 and 0 <= self.cross_ratio <= 1):
            raise ValueError("skew_factor and cross_ratio must lie in [0, 1]")
        self.members = tuple(sorted({v for g in self.groups for v in g}))
        self._group_of = {}
        for g in self.groups:
            for v in g:
                self._group_of[v] = g
        self._hot = tuple(sorted(self.hot & set(self.members)))
        self._cold = tuple(v for v in self.members if v not in self.hot) or self.members
        n = self.n_nodes
        self._foreign = {v: tuple(u for u in self.members if u % n != v % n) for v in self.members}

    @property
    def partitions(self) -> frozenset:
        return frozenset(self.members)

    def draw(self, rng: random.Random, txn_id: int, arrival: float = 0.0) -> TxnMeta:
        if not self._hot or self.skew_factor == 0:
            v = rng.choice(self.members)
        elif rng.random() < self.skew_factor:
            v = rng.choice(self._hot)
        else:
            v = rng.choice(self._cold)
        parts = [v]
        g = self._group_of[v]
        if len(g) > 1 and rng.random() < self.cross_ratio:
            if self.partner_noise and rng.random() < self.partner_noise and self._foreign[v]:
                parts.append(rng.choice(self._foreign[v]))
            else:
                parts.append(rng.choice([u for u in g if u != v]))
        ops = _make_ops(rng, parts, self.ops_per_txn, self.read_fraction,
                        self.keys_per_partition, txn_id)
        return TxnMeta(txn_id, tuple(ops), arrival)


class Source:
    """Pull-based stream over a list of periods; ``next(now)`` picks by virtual time."""

    def __init__(self, periods: Sequence[Period], seed: int = 0):
        if not periods:
            raise ValueError("no periods")
        self.periods = list(periods)
        self.rng = random.Random(seed)
        self.next_id = 0
        self.bounds = []
        t = 0.0
        for p in self.periods:
            t += p.duration_us
            self.bounds.append(t)

    def period_at(self, now: float) -> int:
        return min(bisect.bisect_right(self.bounds, now), len(self.periods) - 1)

    def shift_times(self) -> list[float]:
        return self.bounds[:-1]

    def next(self, now: float) -> TxnMeta:
        t = self.periods[self.period_at(now)].draw(self.rng, self.next_id, now)
        self.next_id += 1
        return t


# -- YCSB -----------------------------------------------------------------------


@dataclass
class YcsbConfig:
    n_nodes: int = 4
    partitions_per_node: int = 12
    keys_per_partition: int = 1000
    skew_factor: float = 0.0
    cross_ratio: float = 0.0
    ops_per_txn: int = 10
    read_fraction: float = 0.9
    seed: int = 0
    hot_node: int = 0
    # matched: partners come from a fixed seeded matching; otherwise any other node
    matched: bool = True

    def __post_init__(self):
        if not (0 <= self.skew_factor <= 1 and 0 <= self.cross_ratio <= 1):
            raise ValueError("skew_factor and cross_ratio must lie in [0, 1]")
        if self.n_nodes < 1 or self.partitions_per_node < 1 or self.ops_per_txn < 1:
            raise ValueError("sizes must be positive")

    @property
    def n_partitions(self) -> int:
        return self.n_nodes * self.partitions_per_node

    def hot_partitions(self) -> frozenset:
        return frozenset(v for v in range(self.n_partitions)
                         if initial_node(v, self.n_nodes) == self.hot_node)


def ycsb_period(cfg: YcsbConfig, duration_us: float = float("inf")) -> Period:
    parts = list(range(cfg.n_partitions))
    hot = cfg.hot_partitions() if cfg.skew_factor > 0 else frozenset()
    if cfg.matched:
        rng = random.Random(f"match-{cfg.seed}")
        pairs = cross_node_matching(parts, cfg.n_nodes, rng, first=sorted(hot))
        paired = {v for pr in pairs for v in pr}
        groups = list(pairs) + [(v,) for v in parts if v not in paired]
    else:
        groups = [tuple(parts)]
    p = Period(duration_us, tuple(groups), hot, cfg.skew_factor, cfg.cross_ratio,
               cfg.ops_per_txn, cfg.read_fraction, cfg.keys_per_partition, "ycsb")
    if not cfg.matched:
        # any partner on another node
        n = cfg.n_nodes
        p._group_of = {v: tuple(u for u in parts if u % n != v % n) + (v,) for v in parts}
    return p


def ycsb_stream(cfg: YcsbConfig, interarrival_us: float = 0.0) -> Iterator[TxnMeta]:
    period = ycsb_period(cfg)
    rng = random.Random(cfg.seed)
    i = 0
    while True:
        yield period.draw(rng, i, i * interarrival_us)
        i += 1


# -- TPC-C NewOrder ------------------------------------------------------------------


@dataclass
class TpccConfig:
    n_nodes: int = 4
    warehouses_per_node: int = 24
    districts_per_warehouse: int = 10
    customers_per_district: int = 30
    items: int = 1000
    remote_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.remote_prob <= 1:
            raise ValueError("remote_prob must lie in [0, 1]")

    @property
    def n_partitions(self) -> int:
        return self.n_nodes * self.warehouses_per_node


def tpcc_neworder_stream(cfg: TpccConfig, interarrival_us: float = 0.0) -> Iterator[TxnMeta]:
    """One partition per warehouse; remote supply warehouses live on another node."""
    rng = random.Random(cfg.seed)
    W = cfg.n_partitions
    D = cfg.districts_per_warehouse
    stock_base = D + D * cfg.customers_per_district
    i = 0
    while True:
        home = rng.randrange(W)
        d = rng.randrange(D)
        c = rng.randrange(cfg.customers_per_district)
        ops = [Op(home, d, "R"), Op(home, d, "W", (i, home, d)),
               Op(home, D + d * cfg.customers_per_district + c, "R")]
        remote = None
        if cfg.n_nodes > 1 and rng.random() < cfg.remote_prob:
            while remote is None or initial_node(remote, cfg.n_nodes) == initial_node(home, cfg.n_nodes):
                remote = rng.randrange(W)
        n_items = rng.randint(5, 15)
        items = rng.sample(range(cfg.items), n_items)
        remote_slot = rng.randrange(n_items) if remote is not None else -1
        for j, item in enumerate(items):
            w = remote if j == remote_slot else home
            key = stock_base + item
            ops.append(Op(w, key, "R"))
            ops.append(Op(w, key, "W", (i, w, key)))
        yield TxnMeta(i, tuple(ops), i * interarrival_us)
        i += 1


# -- dynamic scenarios -------------------------------------------------------------------


class ScenarioKind(enum.Enum):
    HOTSPOT_INTERVAL = "HotspotInterval"
    HOTSPOT_POSITION = "HotspotPosition"
    CYCLIC = "Cyclic"
    STATIC = "Static"


@dataclass
class DynamicScenario:
    kind: ScenarioKind
    periods: list[Period]
    n_partitions: int
    n_nodes: int
    seed: int = 0

    def source(self, seed: int | None = None) -> Source:
        return Source(self.periods, self.seed if seed is None else seed)

    def hot_sets(self) -> list[frozenset]:
        return [p.hot if p.hot else p.partitions for p in self.periods]


def _halves(n_partitions: int, n_nodes: int):
    """Two disjoint partition sets, each holding an equal share of every node."""
    h0 = [v for v in range(n_partitions) if (v // n_nodes) % 2 == 0]
    h1 = [v for v in range(n_partitions) if (v // n_nodes) % 2 == 1]
    return h0, h1


def hotspot_interval(n_nodes: int = 4, partitions_per_node: int = 12, n_periods: int = 4,
                     duration_us: float = 60 * SECOND_US, classes: int = 3, interval: int = 4,
                     ops_per_txn: int = 10, read_fraction: float = 0.9,
                     keys_per_partition: int = 1000, seed: int = 0) -> DynamicScenario:
    """Query classes access uniform partitions inside a fixed ID interval.

    Consecutive periods use disjoint halves of the partition space; each time
    a half comes back its intervals are offset by half an interval, so the
    layout it needs differs from the one it left behind.
    """
    P = n_nodes * partitions_per_node
    halves = _halves(P, n_nodes)
    if classes * interval > len(halves[0]):
        raise ValueError("intervals do not fit in half the partitions")
    periods = []
    for k in range(n_periods):
        half = halves[k % 2]
        shift = (interval // 2) * ((k // 2) % 2)
        groups = []
        for c in range(classes):
            start = c * interval + shift
            groups.append(tuple(half[(start + j) % len(half)] for j in range(interval)))
        periods.append(Period(duration_us, tuple(groups), frozenset(), 0.0, 1.0, ops_per_txn,
                              read_fraction, keys_per_partition, f"interval-{k}"))
    return DynamicScenario(ScenarioKind.HOTSPOT_INTERVAL, periods, P, n_nodes, seed)


def hotspot_position(n_nodes: int = 4, partitions_per_node: int = 12,
                     duration_us: float = 60 * SECOND_US, skew_factor: float = 0.8,
                     ops_per_txn: int = 10, read_fraction: float = 0.9,
                     keys_per_partition: int = 1000, seed: int = 0) -> DynamicScenario:
    """Periods A-D: uniform/50% cross, skew/50%, skew/100%, skew/100% with an ID offset."""
    P = n_nodes * partitions_per_node
    rng = random.Random(f"position-{seed}")
    parts = list(range(P))
    specs = [("A", None, 0.0, 0.5), ("B", 0, skew_factor, 0.5),
             ("C", 1 % n_nodes, skew_factor, 1.0), ("D", 2 % n_nodes, skew_factor, 1.0)]
    periods = []
    for label, hot_node, skew, cross in specs:
        hot = frozenset(v for v in parts if hot_node is not None and v % n_nodes == hot_node)
        pairs = cross_node_matching(parts, n_nodes, rng, first=sorted(hot))
        paired = {v for pr in pairs for v in pr}
        groups = tuple(pairs) + tuple((v,) for v in parts if v not in paired)
        periods.append(Period(duration_us, groups, hot, skew, cross, ops_per_txn,
                              read_fraction, keys_per_partition, label))
    return DynamicScenario(ScenarioKind.HOTSPOT_POSITION, periods, P, n_nodes, seed)


def cyclic_pairs(n_nodes: int = 4, partitions_per_node: int = 12, n_periods: int = 8,
                 duration_us: float = SECOND_US, skew_factor: float = 0.8, group_size: int = 2,
                 variants: int = 2, ops_per_txn: int = 10, read_fraction: float = 0.9,
                 keys_per_partition: int = 1000, hot_node: int = 0, seed: int = 0,
                 partner_noise: float = 0.0) -> DynamicScenario:
    """Recurring co-access pattern that alternates between two disjoint halves.

    Each half cycles through ``variants`` different groupings, so a half
    coming back needs a layout other than the one it left, yet the whole
    sequence repeats every ``2 * variants`` periods.
    """
    P = n_nodes * partitions_per_node
    halves = _halves(P, n_nodes)
    table = {}
    for h, half in enumerate(halves):
        hot = [v for v in half if v % n_nodes == hot_node]
        for var in range(variants):
            rng = random.Random(f"cyclic-{seed}-{h}-{var}")
            if group_size == 2:
                groups = cross_node_matching(half, n_nodes, rng, first=hot if skew_factor else ())
            else:
                order = list(half)
                rng.shuffle(order)
                groups = [tuple(sorted(order[i:i + group_size])) for i in range(0, len(order), group_size)]
            table[(h, var)] = (tuple(groups), frozenset(hot) if skew_factor else frozenset())
    periods = []
    for k in range(n_periods):
        h = k % 2
        var = (k // 2) % variants
        groups, hot = table[(h, var)]
        periods.append(Period(duration_us, groups, hot, skew_factor, 1.0, ops_per_txn,
                              read_fraction, keys_per_partition, f"h{h}v{var}",
                              partner_noise, n_nodes))
    return DynamicScenario(ScenarioKind.CYCLIC, periods, P, n_nodes, seed)


def static_scenario(cfg: YcsbConfig, duration_us: float) -> DynamicScenario:
    return DynamicScenario(ScenarioKind.STATIC, [ycsb_period(cfg, duration_us)],
                           cfg.n_partitions, cfg.n_nodes, cfg.seed)


def dynamic_stream(s: DynamicScenario, interarrival_us: float = 100.0) -> Iterator[TxnMeta]:
    """Open-loop rendering: one arrival every ``interarrival_us`` until the last period ends."""
    src = s.source()
    end = src.bounds[-1]
    now = 0.0
    while now < end:
        yield src.next(now)
        now += interarrival_us


# -- text traces ---------------------------------------------------------------------------


def dump_trace(txns: Iterable[TxnMeta]) -> str:
    """Lines ``arrival_us txn_id partition_list op_list``."""
    lines = []
    for t in txns:
        parts = ",".join(str(v) for v in t.txn_parts)
        ops = ",".join(f"{o.kind}:{o.partition}:{o.key}" for o in t.ops)
        lines.append(f"{t.arrival_time:.1f} {t.txn_id} {parts} {ops}")
    return "\n".join(lines) + "\n"


def load_trace(text: str) -> list[TxnMeta]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        fields = raw.split()
        if len(fields) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            arrival, tid = float(fields[0]), int(fields[1])
            ops = []
            for tok in fields[3].split(","):
                kind, v, key = tok.split(":")
                ops.append(Op(int(v), int(key), kind, (tid, int(v), int(key)) if kind == "W" else None))
            t = TxnMeta(tid, tuple(ops), arrival)
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
        declared = tuple(int(x) for x in fields[2].split(","))
        if declared != t.txn_parts:
            raise ValueError(f"line {lineno}: partition list {declared} disagrees with ops")
        out.append(t)
    return out


def stream_hash(txns: Iterable[TxnMeta]) -> str:
    return hashlib.sha256(dump_trace(txns).encode()).hexdigest()
