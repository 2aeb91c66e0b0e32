"""Routing and execution: single-node, remaster-then-execute, 2PC fallback, batch mode."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Callable

from .model import NodeId, PartitionId, PlacementMap, TxnBatch, TxnMeta
from .planner import CostParams, placement_cost
from .heatgraph import Clump
from .sim import TIMER, Cluster

MSG_BYTES = 64
OP_BYTES = 24


class Path(enum.Enum):
    SINGLE = "SingleNode"
    REMASTERED = "Remastered"
    DISTRIBUTED = "Distributed2PC"


class Status(enum.Enum):
    COMMITTED = "Committed"
    ABORTED = "Aborted"


@dataclass
class TxnOutcome:
    txn_id: int
    status: Status
    path: Path
    latency_us: float
    exec_us: float = 0.0
    prep_us: float = 0.0
    commit_us: float = 0.0
    remaster_wait_us: float = 0.0
    bytes_on_wire: int = 0
    wire_delays: int = 0
    node: NodeId = -1
    retries: int = 0
    finished_at: float = 0.0
    reads: dict = field(default_factory=dict, repr=False)


CSV_HEADER = ["txn_id", "status", "path", "latency_us", "exec_us", "prep_us",
              "commit_us", "remaster_wait_us", "bytes"]


def outcomes_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for o in outcomes:
        w.writerow([o.txn_id, o.status.value, o.path.value, f"{o.latency_us:.1f}",
                    f"{o.exec_us:.1f}", f"{o.prep_us:.1f}", f"{o.commit_us:.1f}",
                    f"{o.remaster_wait_us:.1f}", o.bytes_on_wire])
    return buf.getvalue()


@dataclass
class OccContext:
    reads: dict = field(default_factory=dict)  # (v, key) -> version seen
    writes: dict = field(default_factory=dict)  # (v, key) -> value
    observed: dict = field(default_factory=dict)  # (v, key) -> value seen
    status: str = "open"

    def validate(self, versions, locks, txn_id) -> bool:
        for (v, key), ver in self.reads.items():
            if versions[v].get(key, 0) != ver:
                return False
            holder = locks.get((v, key))
            if holder is not None and holder != txn_id:
                return False
        for vk in self.writes:
            holder = locks.get(vk)
            if holder is not None and holder != txn_id:
                return False
        return True


def route(t: TxnMeta, p: PlacementMap, params: CostParams = CostParams()) -> NodeId:
    """Node holding the most of ``t``'s partitions, then cheapest to remaster onto."""
    if not t.txn_parts:
        raise ValueError("transaction touches no partition")
    c = Clump(frozenset(t.txn_parts), 0.0)
    best = None
    for n in p.nodes:
        held = sum(1 for v in t.txn_parts if p.holds(v, n))
        key = (-held, placement_cost(n, c, p, params), n)
        if best is None or key < best:
            best = key
    return best[2]


def route_coordinator(t: TxnMeta, p: PlacementMap) -> NodeId:
    """Baseline routing: the node with most primaries, ties to the first partition's primary."""
    counts = {}
    for v in t.txn_parts:
        n = p.primary_of(v)
        counts[n] = counts.get(n, 0) + 1
    first = p.primary_of(t.txn_parts[0])
    return max(counts, key=lambda n: (counts[n], n == first, -n))


class _Run:
    __slots__ = ("t", "done", "submitted", "attempt", "node", "path", "occ", "gens",
                 "remastered", "wait_start", "remaster_wait", "exec_us", "prep_us",
                 "commit_us", "bytes", "delays", "has_worker", "batch", "exec_start",
                 "converted", "redirects")

    def __init__(self, t, done, now):
        self.t = t
        self.done = done
        self.submitted = now
        self.attempt = 0
        self.batch = None
        self.reset()

    def reset(self):
        self.node = -1
        self.path = Path.SINGLE
        self.occ = OccContext()
        self.gens = {}
        self.remastered = False
        self.wait_start = 0.0
        self.remaster_wait = 0.0
        self.exec_us = self.prep_us = self.commit_us = 0.0
        self.bytes = 0
        self.delays = 0
        self.has_worker = False
        self.exec_start = 0.0
        self.converted = False
        self.redirects = 0


class Engine:
    """Transaction executor living inside the simulator's event loop.

    ``remaster`` enables the remaster-then-execute path (off for the 2PC
    baseline); ``batch`` buffers arrivals and remasters a whole batch behind
    one acknowledgment barrier.
    """

    def __init__(self, cluster: Cluster, params: CostParams = CostParams(), remaster: bool = True,
                 batch: bool = False, batch_window_us: float = 10000.0, batch_cap: int = 10000,
                 max_retries: int = 3, on_outcome: Callable[[TxnOutcome], None] | None = None):
        self.cl = cluster
        self.sim = cluster.sim
        self.params = params
        self.remaster_on = remaster
        self.batch_on = batch
        self.batch_window_us = batch_window_us
        self.batch_cap = batch_cap
        self.max_retries = max_retries
        self.on_outcome = on_outcome
        self.outcomes: list[TxnOutcome] = []
        self.keep_outcomes = True
        self._visible_wait: list[tuple[_Run, float]] = []
        self._retry_wait: list[_Run] = []
        self._buf: list[_Run] = []
        self._batch_seq = 0
        self._batch_ids = 0
        self.batch_log: list[tuple[float, str, int]] = []
        # partition -> node it is being moved to by the batch being opened
        self._claims: dict[PartitionId, NodeId] = {}
        self.aborts = 0
        cluster.epoch_listeners.append(self._on_epoch_close)

    @property
    def placement(self) -> PlacementMap:
        return self.cl.placement

    # -- entry points --------------------------------------------------------

    def submit(self, t: TxnMeta, done: Callable[[TxnOutcome], None] | None = None) -> None:
        run = _Run(t, done, self.sim.now)
        self._dispatch(run)

    def _dispatch(self, run: _Run) -> None:
        if self.batch_on:
            self._buf.append(run)
            if len(self._buf) == 1:
                self.sim.after(self.batch_window_us, TIMER, self._close_batch, self._batch_seq)
            if len(self._buf) >= self.batch_cap:
                self._close_batch(self._batch_seq)
        else:
            self.execute(run)

    def route_for(self, t: TxnMeta) -> NodeId:
        if self.remaster_on:
            return route(t, self.placement, self.params)
        return route_coordinator(t, self.placement)

    # -- standard mode ---------------------------------------------------------

    def execute(self, run: _Run) -> None:
        run.reset()
        run.node = self.route_for(run.t)
        self.cl.acquire_worker(run.node, self._begin, run)

    def _begin(self, run: _Run) -> None:
        run.has_worker = True
        if self.remaster_on and run.redirects < 2:
            # the layout may have changed while this txn sat in the queue
            best = self.route_for(run.t)
            if best != run.node:
                run.redirects += 1
                self._release(run)
                run.node = best
                run.bytes += MSG_BYTES
                self.sim.after(self.cl.lat.rpc_us, TIMER, self.cl.acquire_worker, best, self._begin, run)
                return
        self._localize(run, 0)

    def _localize(self, run: _Run, i: int) -> None:
        p = self.placement
        parts = run.t.txn_parts
        node = run.node
        while i < len(parts):
            v = parts[i]
            if p.primary_of(v) == node:
                latch = self.cl.latch_of(v)
                if latch is not None and latch.target != node and self.remaster_on:
                    # new work is blocked at a primary being moved away; re-route after
                    self._release(run)
                    run.wait_start = self.sim.now
                    self.cl.wait_latch(v, self._reroute, run)
                    return
                i += 1
                continue
            if not self.remaster_on:
                self._escalate(run)
                return
            latch = self.cl.latch_of(v)
            if latch is not None:
                if latch.target == node:
                    run.wait_start = self.sim.now
                    self.cl.wait_latch(v, self._latch_released, run, i)
                    return
                self._escalate(run)
                return
            if not p.holds(v, node):
                self._escalate(run)
                return
            run.wait_start = self.sim.now
            status = self.cl.remaster(v, node, lambda ok, run=run, i=i: self._remastered(run, i, ok),
                                      owner=run.t.txn_id)
            if status != "started":
                self._escalate(run)
                return
            run.remastered = True
            run.bytes += 3 * MSG_BYTES
            return
        # every partition was local at some point; make sure none moved meanwhile
        if any(p.primary_of(v) != node for v in parts):
            self._escalate(run)
            return
        self._execute_local(run)

    def _reroute(self, run):
        run.remaster_wait += self.sim.now - run.wait_start
        wait = run.remaster_wait
        self.execute(run)
        run.remaster_wait = wait

    def _latch_released(self, run, i):
        run.remaster_wait += self.sim.now - run.wait_start
        self._localize(run, i)

    def _remastered(self, run, i, ok):
        run.remaster_wait += self.sim.now - run.wait_start
        if ok:
            self._localize(run, i)
        else:
            self._escalate(run)

    def _read_all(self, run: _Run) -> bool:
        """Snapshot reads at current primaries; False means abort now."""
        cl = self.cl
        p = self.placement
        for op in run.t.ops:
            vk = (op.partition, op.key)
            if op.partition not in run.gens:
                run.gens[op.partition] = p.generation[op.partition]
            if op.kind == "W":
                run.occ.writes[vk] = op.payload if op.payload is not None else (run.t.txn_id, op.key)
                continue
            if vk in run.occ.writes or vk in run.occ.reads:
                continue
            if vk in cl.pending_keys:
                return False
            holder = cl.locks.get(vk)
            if holder is not None and holder != run.t.txn_id:
                return False
            run.occ.reads[vk] = cl.versions[op.partition].get(op.key, 0)
            run.occ.observed[vk] = cl.read_primary(op.partition, op.key)
        return True

    def _execute_local(self, run: _Run) -> None:
        run.path = Path.REMASTERED if run.remastered else Path.SINGLE
        run.exec_start = self.sim.now
        if not self._read_all(run):
            self._abort(run)
            return
        run.exec_us = len(run.t.ops) * self.cl.lat.op_us
        self.sim.after(run.exec_us, TIMER, self._commit_local, run)

    def _owned(self, run: _Run, node: NodeId | None) -> bool:
        p = self.placement
        for v, g in run.gens.items():
            # commits racing a remaster are fine until the flip bumps the generation
            if p.generation[v] != g:
                return False
            if node is not None and p.primary_of(v) != node:
                return False
        return True

    def _commit_local(self, run: _Run) -> None:
        cl = self.cl
        if not self._owned(run, run.node) or not run.occ.validate(cl.versions, cl.locks, run.t.txn_id):
            self._abort(run)
            return
        self._install(run)
        self._release(run)
        self._committed(run)

    def _install(self, run: _Run) -> None:
        cl = self.cl
        p = self.placement
        for (v, key), value in run.occ.writes.items():
            cl.versions[v][key] = cl.versions[v].get(key, 0) + 1
            cl.buffer_write(v, key, value)
        for v in run.t.txn_parts:
            p.record_access(v, p.primary_of(v))
        cl.note_commit()
        run.occ.status = "committed"

    # -- distributed path --------------------------------------------------------

    def _escalate(self, run: _Run) -> None:
        run.path = Path.DISTRIBUTED
        self.execute_2pc(run)

    def execute_2pc(self, run: _Run) -> None:
        p = self.placement
        for v in run.t.txn_parts:
            if self.cl.latch_of(v) is not None:
                # blocked at the old primary; resume wherever the primary ends up
                run.wait_start = self.sim.now
                self.cl.wait_latch(v, self._latch_released_2pc, run)
                return
        run.exec_start = self.sim.now
        run.gens = {}
        run.occ = OccContext()
        if not self._read_all(run):
            self._abort(run)
            return
        remote = {p.primary_of(v) for v in run.t.txn_parts} - {run.node}
        rpc = self.cl.lat.rpc_us
        n_ops = len(run.t.ops)
        run.exec_us = n_ops * self.cl.lat.op_us + (2 * rpc if remote else 0.0)
        run.delays = 2 if remote else 0
        run.bytes += (2 * MSG_BYTES + OP_BYTES * n_ops) * max(len(remote), 1 if remote else 0)
        self.sim.after(run.exec_us, TIMER, self._prepare, run, sorted(remote))

    def _latch_released_2pc(self, run):
        run.remaster_wait += self.sim.now - run.wait_start
        self.execute_2pc(run)

    def _prepare(self, run: _Run, remote) -> None:
        cl = self.cl
        tid = run.t.txn_id
        if not self._owned(run, None):
            self._abort(run)
            return
        for vk in run.occ.writes:
            holder = cl.locks.get(vk)
            if holder is not None and holder != tid:
                self._abort(run)
                return
        if not run.occ.validate(cl.versions, cl.locks, tid):
            self._abort(run)
            return
        for vk in run.occ.writes:
            cl.locks[vk] = tid
        rpc = cl.lat.rpc_us
        # vote request/reply plus synchronous prepare-record replication
        run.prep_us = 4 * rpc
        run.delays += 4
        parts = len(remote) + 1
        run.bytes += parts * (4 * MSG_BYTES + OP_BYTES * len(run.occ.writes))
        self.sim.after(run.prep_us, TIMER, self._commit_2pc, run, remote)

    def _commit_2pc(self, run: _Run, remote) -> None:
        rpc = self.cl.lat.rpc_us
        run.commit_us = 4 * rpc
        run.delays += 4
        run.bytes += (len(remote) + 1) * 4 * MSG_BYTES
        self.sim.after(run.commit_us, TIMER, self._finish_2pc, run)

    def _finish_2pc(self, run: _Run) -> None:
        self._install(run)
        self._unlock(run)
        self._release(run)
        self._committed(run)

    # -- completion ------------------------------------------------------------

    def _unlock(self, run: _Run) -> None:
        tid = run.t.txn_id
        locks = self.cl.locks
        for vk in run.occ.writes:
            if locks.get(vk) == tid:
                del locks[vk]

    def _release(self, run: _Run) -> None:
        if run.has_worker:
            run.has_worker = False
            self.cl.release_worker(run.node)

    def _committed(self, run: _Run) -> None:
        self._visible_wait.append((run, self.sim.now))

    def _abort(self, run: _Run) -> None:
        self.aborts += 1
        self._unlock(run)
        self._release(run)
        run.occ.status = "aborted"
        self.sim.record(TIMER, run.node, f"abort txn={run.t.txn_id} attempt={run.attempt}")
        if run.attempt < self.max_retries:
            run.attempt += 1
            self._retry_wait.append(run)
        else:
            self._emit(run, Status.ABORTED, self.sim.now)

    def _on_epoch_close(self, e: int) -> None:
        now = self.sim.now
        waiting, self._visible_wait = self._visible_wait, []
        for run, _ in waiting:
            self._emit(run, Status.COMMITTED, now)
        retry, self._retry_wait = self._retry_wait, []
        for run in retry:
            self._dispatch(run)

    def _emit(self, run: _Run, status: Status, now: float) -> None:
        o = TxnOutcome(run.t.txn_id, status, run.path, now - run.submitted, run.exec_us,
                       run.prep_us, run.commit_us, run.remaster_wait,
                       run.bytes + MSG_BYTES * len(run.t.ops), run.delays, run.node,
                       run.attempt, now, dict(run.occ.observed) if status is Status.COMMITTED else {})
        if self.keep_outcomes:
            self.outcomes.append(o)
        if self.on_outcome is not None:
            self.on_outcome(o)
        if run.done is not None:
            run.done(o)

    # -- batch mode ------------------------------------------------------------

    def _close_batch(self, seq: int) -> None:
        if seq != self._batch_seq or not self._buf:
            return
        self._batch_seq += 1
        runs, self._buf = self._buf, []
        self.execute_batch(runs)

    def execute_batch(self, runs) -> int:
        """Issue every convertible txn's remasters at once, then execute behind a barrier.

        ``runs`` may be :class:`_Run` objects or bare transactions; returns
        the batch id.
        """
        if runs and isinstance(runs[0], TxnMeta) or isinstance(runs, TxnBatch):
            runs = [_Run(t, None, self.sim.now) for t in TxnBatch(runs)]
        bid = self._batch_ids
        self._batch_ids += 1
        self.batch_log.append((self.sim.now, "open", bid))
        p = self.placement
        state = {"outstanding": 0, "issued": False}

        def ack(ok=True):
            state["outstanding"] -= 1
            self.batch_log.append((self.sim.now, "ack", bid))
            if state["outstanding"] == 0 and state["issued"]:
                self.sim.after(self.cl.lat.rpc_us, TIMER, phase3)

        def phase3():
            self.batch_log.append((self.sim.now, "exec", bid))
            self.sim.record(TIMER, -1, f"batch-exec b={bid} n={len(runs)}")
            for run in runs:
                run.remaster_wait = self.sim.now - run.wait_start if run.converted else 0.0
                self.cl.acquire_worker(run.node, self._begin_batched, run)

        for run in runs:
            run.reset()
            run.batch = bid
            run.node = self._batch_route(run.t)
            run.wait_start = self.sim.now
            if not self.remaster_on:
                continue
            node = run.node
            parts = run.t.txn_parts
            if not all(p.holds(v, node) for v in parts):
                continue
            if any(self._claims.get(v, node) != node for v in parts):
                continue
            run.converted = True
            for v in parts:
                if p.primary_of(v) == node:
                    continue
                latch = self.cl.latch_of(v)
                if latch is not None:
                    if latch.target == node:
                        state["outstanding"] += 1
                        run.remastered = True
                        self.cl.wait_latch(v, ack)
                    else:
                        run.converted = False
                    continue
                st = self.cl.remaster(v, node, ack, owner=("batch", bid))
                if st == "started":
                    state["outstanding"] += 1
                    run.remastered = True
                    run.bytes += 3 * MSG_BYTES
                else:
                    run.converted = False
            if run.converted:
                for v in parts:
                    self._claims[v] = node
        self._claims = {}
        state["issued"] = True
        if state["outstanding"] == 0:
            phase3()
        return bid

    def _batch_route(self, t: TxnMeta) -> NodeId:
        """Follow the node this batch is already moving our partitions to."""
        p = self.placement
        for v in t.txn_parts:
            claim = self._claims.get(v)
            if claim is not None and all(p.holds(u, claim) for u in t.txn_parts):
                return claim
        return self.route_for(t)

    def _begin_batched(self, run: _Run) -> None:
        run.has_worker = True
        p = self.placement
        if all(p.primary_of(v) == run.node for v in run.t.txn_parts) and \
                all(self.cl.latch_of(v) is None for v in run.t.txn_parts):
            self._execute_local(run)
        elif self.remaster_on:
            # the layout moved under the batch; fall back to the standard path
            self._begin(run)
        else:
            self._escalate(run)

    # -- introspection -------------------------------------------------------------

    def in_flight(self) -> int:
        return len(self._visible_wait) + len(self._retry_wait) + len(self._buf)
