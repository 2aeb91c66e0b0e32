"""Deterministic discrete-event cluster: virtual clock, replicas, epochs, adaptor."""

from __future__ import annotations

import hashlib
import heapq
import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .model import ActionKind, NodeId, PartitionId, PlacementError, PlacementMap, ReplicaAction, Role

log = logging.getLogger(__name__)

DELIVER = "MessageDeliver"
EPOCH = "EpochTick"
TIMER = "Timer"


class SimError(Exception):
    pass


class Simulator:
    """Min-heap of ``(fire_time, seq)``; every fired event feeds a trace hash."""

    def __init__(self, trace: bool = False):
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.fired = 0
        self.keep_trace = trace
        self.trace: list[str] = []
        self._hash = hashlib.sha256()
        self.after_event: Callable[[], None] | None = None

    def schedule(self, at: float, kind: str, fn: Callable, *args, node: int = -1, detail: str = ""):
        if at < self.now:
            raise SimError(f"cannot schedule at {at} < now {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, kind, node, detail, fn, args))
        return self._seq

    def after(self, delay: float, kind: str, fn: Callable, *args, node: int = -1, detail: str = ""):
        return self.schedule(self.now + delay, kind, fn, *args, node=node, detail=detail)

    def record(self, kind: str, node: int, detail: str) -> None:
        line = f"{self.now:.1f} {kind} {node} {detail}"
        self._hash.update(line.encode())
        if self.keep_trace:
            self.trace.append(line)

    def run_until(self, t: float) -> int:
        """Fire every event with ``fire_time <= t``; returns how many fired."""
        n = 0
        heap = self._heap
        while heap and heap[0][0] <= t:
            at, _seq, kind, node, detail, fn, args = heapq.heappop(heap)
            self.now = at
            if detail:
                self.record(kind, node, detail)
            fn(*args)
            n += 1
            if self.after_event is not None:
                self.after_event()
        self.now = max(self.now, t)
        self.fired += n
        return n

    def run(self) -> int:
        n = 0
        while self._heap:
            n += self.run_until(self._heap[0][0])
        return n

    @property
    def pending(self) -> int:
        return len(self._heap)

    def trace_hash(self) -> str:
        return self._hash.hexdigest()


@dataclass
class LatencyModel:
    rpc_us: float = 500.0  # one-way network delay
    remaster_delay_us: float = 3000.0
    migrate_base_us: float = 10000.0
    migrate_us_per_item: float = 50.0
    op_us: float = 100.0  # local execution cost per operation

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0")


class Latch:
    __slots__ = ("target", "since", "until", "waiters", "owner")

    def __init__(self, target, since, until, owner):
        self.target = target
        self.since = since
        self.until = until
        self.owner = owner
        self.waiters: list[Callable] = []


class Cluster:
    """Replica state machines plus the adaptor's replica-manipulation handlers.

    Storage is modelled per replica as ``key -> (value, epoch)``. Committed
    writes are buffered per epoch and become visible (and ship to secondaries)
    only when the epoch closes.
    """

    def __init__(self, sim: Simulator, placement: PlacementMap, latency: LatencyModel | None = None,
                 keys_per_partition: int = 1000, workers: int = 8,
                 epoch_interval_us: float = 10000.0, epoch_txn_cap: int = 10000,
                 check_invariants: bool = False):
        self.sim = sim
        self.placement = placement
        self.lat = latency or LatencyModel()
        self.keys_per_partition = keys_per_partition
        self.workers = workers
        self.epoch_interval_us = epoch_interval_us
        self.epoch_txn_cap = epoch_txn_cap
        self.stores: dict[tuple[PartitionId, NodeId], dict] = {
            (v, r.node): {} for v in placement.partitions for r in placement.replicas(v)}
        self.versions: list[dict[int, int]] = [{} for _ in placement.partitions]
        self.locks: dict[tuple[PartitionId, int], int] = {}
        self.pending_keys: set[tuple[PartitionId, int]] = set()
        self.epoch = 1  # open epoch
        self.epoch_started = 0.0
        self.epoch_commits = 0
        self.epoch_writes: list[tuple[PartitionId, int, object]] = []
        self.epoch_listeners: list[Callable[[int], None]] = []
        self.latches: dict[PartitionId, Latch] = {}
        self.incoming: dict[PartitionId, set[NodeId]] = {}
        self.free = [workers] * placement.n_nodes
        self.queues = [deque() for _ in placement.nodes]
        self.busy_us = [0.0] * placement.n_nodes
        self.action_log: list[tuple[float, str, ReplicaAction, bool]] = []
        self.bytes_replication = 0
        self.conflicts = 0
        self._epoch_timer_for = 0
        self.check = check_invariants
        if check_invariants:
            sim.after_event = self.assert_invariants
        self._arm_epoch_timer()

    # -- workers ---------------------------------------------------------

    def acquire_worker(self, n: NodeId, fn: Callable, *args) -> None:
        if self.free[n] > 0:
            self.free[n] -= 1
            fn(*args)
        else:
            self.queues[n].append((fn, args))

    def release_worker(self, n: NodeId) -> None:
        if self.queues[n]:
            fn, args = self.queues[n].popleft()
            self.sim.after(0.0, TIMER, fn, *args)
        else:
            self.free[n] += 1

    def queue_len(self, n: NodeId) -> int:
        return len(self.queues[n]) + self.workers - self.free[n]

    # -- epochs ----------------------------------------------------------

    def _arm_epoch_timer(self):
        e = self.epoch
        self.sim.schedule(self.epoch_started + self.epoch_interval_us, EPOCH, self._epoch_timer, e)

    def _epoch_timer(self, e):
        if e == self.epoch:
            self.replicate_epoch()

    def note_commit(self) -> None:
        self.epoch_commits += 1
        if self.epoch_commits >= self.epoch_txn_cap:
            self.replicate_epoch()

    def buffer_write(self, v: PartitionId, key: int, value) -> None:
        self.epoch_writes.append((v, key, value))
        self.pending_keys.add((v, key))

    @property
    def closed_epoch(self) -> int:
        return self.epoch - 1

    def replicate_epoch(self) -> int:
        """Close the open epoch: apply at primaries, ship to live secondaries."""
        e = self.epoch
        p = self.placement
        per_node: dict[NodeId, list] = {}
        for v, key, value in self.epoch_writes:
            prim = p.primary_of(v)
            self.stores[(v, prim)][key] = (value, e)
            for n in p.secondaries_of(v):
                per_node.setdefault(n, []).append((v, key, value))
        for v in {w[0] for w in self.epoch_writes}:
            p.replica(v, p.primary_of(v)).applied_epoch = e
        for n, writes in sorted(per_node.items()):
            self.bytes_replication += 64 + 24 * len(writes)
            self.sim.after(self.lat.rpc_us, DELIVER, self._apply_shipment, n, e, writes,
                           node=n, detail=f"replicate epoch={e} writes={len(writes)}")
        for v in range(p.n_partitions):
            # replicas that received nothing still advance
            for r in p.replicas(v):
                if r.role is Role.SECONDARY and r.node not in per_node and r.applied_epoch == e - 1:
                    r.applied_epoch = e
        dropped = p.drop_tombstones()
        for v, n in dropped:
            self.stores.pop((v, n), None)
        self.epoch_writes = []
        self.pending_keys.clear()
        self.epoch_commits = 0
        self.epoch += 1
        self.epoch_started = self.sim.now
        self.sim.record(EPOCH, -1, f"close epoch={e}")
        self._arm_epoch_timer()
        for fn in list(self.epoch_listeners):
            fn(e)
        return e

    def _apply_shipment(self, n, e, writes):
        p = self.placement
        for v, key, value in writes:
            if not p.holds(v, n):
                continue
            r = p.replica(v, n)
            if r.applied_epoch >= e:
                continue
            self.stores[(v, n)][key] = (value, e)
        for v in {w[0] for w in writes}:
            if p.holds(v, n):
                r = p.replica(v, n)
                r.applied_epoch = max(r.applied_epoch, e)

    def read_replica(self, v: PartitionId, n: NodeId, key: int):
        """Visible value of ``key`` at replica (v, n), or None if never written."""
        if not self.placement.holds(v, n):
            raise PlacementError(f"node {n} holds no live replica of {v}")
        got = self.stores[(v, n)].get(key)
        if got is not None and got[1] > self.closed_epoch:
            raise AssertionError("read observed a write from an unclosed epoch")
        return None if got is None else got[0]

    def read_primary(self, v: PartitionId, key: int):
        return self.read_replica(v, self.placement.primary_of(v), key)

    # -- adaptor handlers ---------------------------------------------------

    def latch_of(self, v: PartitionId) -> Latch | None:
        return self.latches.get(v)

    def wait_latch(self, v: PartitionId, fn: Callable, *args) -> bool:
        """Run ``fn`` once the remaster latch on ``v`` is released; False if none held."""
        latch = self.latches.get(v)
        if latch is None:
            return False
        latch.waiters.append((fn, args))
        return True

    def remaster(self, v: PartitionId, target: NodeId, done: Callable[[bool], None] | None = None,
                 owner=None) -> str:
        """Start a remaster of ``v`` to ``target``.

        Returns ``"noop"``, ``"started"``, ``"rejected"`` or ``"conflict"``;
        ``done(ok)`` fires when a started remaster completes.
        """
        p = self.placement
        if p.primary_of(v) == target:
            if done:
                done(True)
            return "noop"
        if not p.holds(v, target):
            self.sim.record(TIMER, target, f"remaster-reject p={v}")
            return "rejected"
        if v in self.latches:
            self.conflicts += 1
            self.sim.record(TIMER, target, f"remaster-conflict p={v}")
            return "conflict"
        now = self.sim.now
        latch = Latch(target, now, now + self.lat.remaster_delay_us, owner)
        self.latches[v] = latch
        old = p.primary_of(v)
        self.sim.record(TIMER, old, f"remaster-block p={v} to={target}")
        sync_at = now + max(self.lat.remaster_delay_us - self.lat.rpc_us, 0.0)
        self.sim.schedule(sync_at, DELIVER, self._remaster_sync, v, target, node=target,
                          detail=f"remaster-sync p={v}")
        self.sim.schedule(latch.until, DELIVER, self._remaster_flip, v, target, done, node=target,
                          detail=f"remaster-flip p={v} from={old}")
        return "started"

    def _remaster_sync(self, v, target):
        p = self.placement
        if p.holds(v, target):
            self.stores[(v, target)] = dict(self.stores[(v, p.primary_of(v))])
            p.replica(v, target).applied_epoch = self.closed_epoch

    def _remaster_flip(self, v, target, done):
        p = self.placement
        latch = self.latches.pop(v)
        ok = p.holds(v, target)
        if ok:
            # catch up anything closed between sync and flip
            self.stores[(v, target)] = dict(self.stores[(v, p.primary_of(v))])
            p.replica(v, target).applied_epoch = self.closed_epoch
            p.remaster(v, target)
        if done:
            done(ok)
        for fn, args in latch.waiters:
            fn(*args)

    def add_replica(self, v: PartitionId, n: NodeId, done: Callable[[bool], None] | None = None) -> str:
        p = self.placement
        incoming = self.incoming.setdefault(v, set())
        if p.holds(v, n) or n in incoming:
            return "rejected"
        if p.live_count(v) + len(incoming) >= p.replica_max:
            return "rejected"
        incoming.add(n)
        items = len(self.stores[(v, p.primary_of(v))]) or self.keys_per_partition
        cost = self.lat.migrate_base_us + self.lat.migrate_us_per_item * max(items, self.keys_per_partition)
        self.sim.record(TIMER, n, f"add-start p={v}")
        self.sim.after(cost, DELIVER, self._add_done, v, n, done, node=n, detail=f"add-done p={v}")
        return "started"

    def _add_done(self, v, n, done):
        p = self.placement
        self.incoming[v].discard(n)
        ok = True
        try:
            if (v, n) in self.stores and n in {r.node for r in p.replicas(v, live_only=False)}:
                # a tombstone is still parked here; drop it before re-adding
                p.drop_tombstones()
            p.add_replica(v, n)
        except PlacementError:
            ok = False
        if ok:
            self.stores[(v, n)] = dict(self.stores[(v, p.primary_of(v))])
            p.replica(v, n).applied_epoch = self.closed_epoch
        if done:
            done(ok)

    def remove_replica(self, v: PartitionId, n: NodeId, done: Callable[[bool], None] | None = None) -> str:
        try:
            self.placement.flag_delete(v, n)
        except PlacementError:
            return "rejected"
        self.sim.record(TIMER, n, f"remove-flag p={v}")
        if done:
            done(True)
        return "started"

    def migrate(self, v: PartitionId, n: NodeId, done: Callable[[bool], None] | None = None) -> str:
        def added(ok):
            if not ok:
                if done:
                    done(False)
                return
            self._remaster_when_free(v, n, done)
        return self.add_replica(v, n, added)

    def _remaster_when_free(self, v, n, done):
        status = self.remaster(v, n, done, owner="plan")
        if status == "conflict":
            self.wait_latch(v, self._remaster_when_free, v, n, done)
        elif status == "rejected" and done:
            done(False)

    def apply_plan(self, actions: list[ReplicaAction], done: Callable[[], None] | None = None) -> None:
        """Run actions concurrently across partitions, in order within one.

        Copies (removes, adds, migrations) go first; the plan's remasters all
        start together once every copy has landed, so a clump's partitions
        change primary at the same instant instead of one by one.
        """
        copies = [a for a in actions if a.kind is not ActionKind.REMASTER]
        flips = [a for a in actions if a.kind is ActionKind.REMASTER]
        self._run_stage(copies, lambda: self._run_stage(flips, done))

    def _run_stage(self, actions, done):
        chains: dict[PartitionId, deque] = {}
        for a in actions:
            chains.setdefault(a.partition, deque()).append(a)
        remaining = [len(chains)]
        if not chains:
            if done:
                done()
            return

        def finish_chain():
            remaining[0] -= 1
            if remaining[0] == 0 and done:
                done()

        def run_next(chain):
            if not chain:
                finish_chain()
                return
            a = chain.popleft()

            def after(ok, a=a):
                self.action_log.append((self.sim.now, "ok" if ok else "failed", a, ok))
                if not ok:
                    log.debug("plan action failed: %s", a)
                run_next(chain)

            if a.kind is ActionKind.ADD_REPLICA:
                st = self.add_replica(a.partition, a.node, after)
            elif a.kind is ActionKind.REMASTER:
                st = "started"
                self._remaster_when_free(a.partition, a.node, after)
            elif a.kind is ActionKind.REMOVE_REPLICA:
                st = self.remove_replica(a.partition, a.node, after)
            else:
                st = self.migrate(a.partition, a.node, after)
            if st == "rejected":
                after(False)

        for v in sorted(chains):
            run_next(chains[v])

    # -- checks ------------------------------------------------------------

    def assert_invariants(self) -> None:
        self.placement.check_invariants(bounds=False)
        for v, latch in self.latches.items():
            if latch.until < self.sim.now:
                raise AssertionError(f"stale latch on {v}")
