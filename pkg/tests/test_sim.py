import pytest

from conftest import N, P
from lion.heatgraph import Clump
from lion.model import ActionKind, PlacementMap, ReplicaAction, Role
from lion.planner import CostParams, plan_to_actions, rearrange
from lion.sim import Cluster, LatencyModel, SimError, Simulator

FAR = 10 ** 6


def cluster(p, **kw):
    sim = Simulator(trace=kw.pop("trace", False))
    return sim, Cluster(sim, p, check_invariants=True, **kw)


def test_equal_times_fire_in_issue_order():
    sim = Simulator()
    seen = []
    for i in range(5):
        sim.schedule(10.0, "Timer", seen.append, i)
    sim.schedule(5.0, "Timer", seen.append, "early")
    assert sim.run() == 6
    assert seen == ["early", 0, 1, 2, 3, 4]
    assert sim.run_until(sim.now) == 0


def test_clock_is_monotone_and_past_is_refused():
    sim = Simulator()
    times = []
    sim.schedule(3.0, "Timer", lambda: times.append(sim.now))
    sim.schedule(1.0, "Timer", lambda: times.append(sim.now))
    sim.run_until(2.0)
    assert sim.now == 2.0
    with pytest.raises(SimError):
        sim.schedule(1.5, "Timer", lambda: None)
    sim.run()
    assert times == [1.0, 3.0]


def test_latency_model_rejects_negative():
    with pytest.raises(ValueError):
        LatencyModel(rpc_us=-1)


def scripted(trace=False):
    p = PlacementMap.round_robin(3, 6, k=2, replica_max=3)
    sim, c = cluster(p, trace=trace)
    for i in range(20):
        sim.schedule(i * 700.0, "Timer", c.buffer_write, i % 6, i, f"v{i}")
    sim.schedule(1000.0, "Timer", c.remaster, 0, p.secondaries_of(0).__iter__().__next__())
    sim.schedule(2000.0, "Timer", c.add_replica, 1, 0 if not p.holds(1, 0) else 2)
    sim.run_until(60000)
    return sim


def test_identical_runs_have_identical_traces():
    a, b = scripted(trace=True), scripted(trace=True)
    assert a.trace == b.trace and a.trace_hash() == b.trace_hash()
    assert any("remaster-flip" in line for line in a.trace)


def test_add_replica_lands_as_synced_secondary(three_node_layout):
    p = three_node_layout
    sim, c = cluster(p)
    c.buffer_write(P(3), 7, "x")
    c.replicate_epoch()
    done = []
    assert c.add_replica(P(3), N(3), done.append) == "started"
    assert not p.holds(P(3), N(3))
    sim.run_until(FAR)
    assert done == [True]
    r = p.replica(P(3), N(3))
    assert r.role is Role.SECONDARY and r.applied_epoch >= 1
    assert c.read_replica(P(3), N(3), 7) == "x"


def test_add_replica_on_primary_node_is_rejected(three_node_layout):
    _, c = cluster(three_node_layout)
    assert c.add_replica(P(3), N(2)) == "rejected"
    assert c.add_replica(P(3), N(1)) == "rejected"  # already a secondary


def test_add_at_replica_max_waits_for_a_remove():
    p = PlacementMap.from_text("0,0,1\n", n_nodes=4, k=2, replica_max=3)
    sim, c = cluster(p)
    assert c.add_replica(0, 2) == "started"
    assert c.add_replica(0, 3) == "rejected"  # in-flight add counts against the cap
    sim.run_until(FAR)
    assert p.live_count(0) == 3
    assert c.add_replica(0, 3) == "rejected"
    assert c.remove_replica(0, 1) == "started"
    assert p.live_count(0) == 2
    assert c.add_replica(0, 3) == "started"
    sim.run_until(2 * FAR)
    assert p.replica_nodes(0) == frozenset({0, 2, 3})


def test_remaster_to_current_primary_is_noop(two_node_layout):
    _, c = cluster(two_node_layout)
    done = []
    assert c.remaster(P(1), N(1), done.append) == "noop"
    assert done == [True]


def test_remaster_without_replica_is_rejected(three_node_layout):
    _, c = cluster(three_node_layout)
    assert c.remaster(P(1), N(3)) == "rejected"


def test_example_remaster_flips_after_the_delay(two_node_layout):
    p = two_node_layout
    sim, c = cluster(p, latency=LatencyModel(remaster_delay_us=3000))
    done = []
    assert c.remaster(P(2), N(1), done.append) == "started"
    sim.run_until(2999)
    assert p.primary_of(P(2)) == N(2) and c.latch_of(P(2)) is not None
    sim.run_until(3000)
    assert p.primary_of(P(2)) == N(1) and done == [True]
    assert p.secondaries_of(P(2)) == frozenset({N(2)})
    assert c.latch_of(P(2)) is None


def test_concurrent_remasters_have_one_winner():
    p = PlacementMap.from_text("0,0,1,2\n", n_nodes=3, k=3)
    sim, c = cluster(p)
    results = []
    a = c.remaster(0, 1, lambda ok: results.append(("a", ok)))
    b = c.remaster(0, 2, lambda ok: results.append(("b", ok)))
    assert sorted([a, b]) == ["conflict", "started"]
    sim.run_until(FAR)
    assert results == [("a", True)] and c.conflicts == 1
    assert p.primary_of(0) == 1


def test_blocked_work_resumes_within_one_delay(two_node_layout):
    sim, c = cluster(two_node_layout)
    woke = []
    c.remaster(P(2), N(1))
    sim.run_until(100)
    assert c.wait_latch(P(2), lambda: woke.append(sim.now))
    sim.run_until(FAR)
    assert woke and woke[0] - 100 <= c.lat.remaster_delay_us + c.lat.rpc_us
    assert not c.wait_latch(P(2), lambda: None)


def test_new_primary_state_matches_old_at_block_time(two_node_layout):
    p = two_node_layout
    sim, c = cluster(p)
    for k in range(50):
        c.buffer_write(P(2), k, k * k)
    c.replicate_epoch()
    before = dict(c.stores[(P(2), N(2))])
    c.remaster(P(2), N(1))
    sim.run_until(FAR)
    assert c.stores[(P(2), N(1))] == before
    assert repr(sorted(c.stores[(P(2), N(1))].items())) == repr(sorted(before.items()))


def test_remove_primary_rejected_and_secondary_tombstoned():
    p = PlacementMap.from_text("0,0,1,2\n", n_nodes=3, k=2)
    sim, c = cluster(p)
    assert c.remove_replica(0, 0) == "rejected"
    assert c.remove_replica(0, 1) == "started"
    assert not p.holds(0, 1)  # invisible to routing straight away
    assert (0, 1) in c.stores
    assert c.remove_replica(0, 2) == "rejected"  # would fall below k
    c.replicate_epoch()
    assert (0, 1) not in c.stores and p.replica_nodes(0) == frozenset({0, 2})


def test_migrate_to_empty_node_ends_primary(three_node_layout):
    p = three_node_layout
    sim, c = cluster(p)
    done = []
    assert c.migrate(P(1), N(3), done.append) == "started"
    sim.run_until(FAR)
    assert done == [True] and p.primary_of(P(1)) == N(3)


def test_empty_epoch_still_advances():
    p = PlacementMap.round_robin(2, 2)
    sim, c = cluster(p)
    closed = []
    c.epoch_listeners.append(closed.append)
    sim.run_until(10000)
    assert c.epoch == 2 and closed == [1]
    sim.run_until(35000)
    assert closed == [1, 2, 3]


def test_commit_cap_closes_epoch_early():
    p = PlacementMap.round_robin(2, 2)
    sim, c = cluster(p, epoch_txn_cap=3)
    sim.run_until(100)
    for _ in range(3):
        c.note_commit()
    assert c.epoch == 2 and c.epoch_started == 100
    # the old timer is ignored; the new one fires a full interval later
    sim.run_until(10050)
    assert c.epoch == 2
    sim.run_until(10100)
    assert c.epoch == 3


def test_writes_invisible_until_close_then_reach_secondaries(two_node_layout):
    p = two_node_layout
    sim, c = cluster(p)
    c.buffer_write(P(1), 3, "a")
    assert c.read_primary(P(1), 3) is None
    c.replicate_epoch()
    assert c.read_primary(P(1), 3) == "a"
    assert c.read_replica(P(1), N(2), 3) is None
    sim.run_until(c.lat.rpc_us)
    assert c.read_replica(P(1), N(2), 3) == "a"
    assert p.replica(P(1), N(2)).applied_epoch == 1
    assert c.bytes_replication == 64 + 24


def test_empty_plan_completes_immediately(two_node_layout):
    _, c = cluster(two_node_layout)
    done = []
    c.apply_plan([], lambda: done.append(True))
    assert done == [True]


def test_example_plan_reaches_final_layout(three_node_layout):
    p = three_node_layout
    clumps = [Clump({P(1), P(2)}, 4), Clump({P(3)}, 1), Clump({P(4)}, 2), Clump({P(5)}, 2)]
    actions = plan_to_actions(rearrange(clumps, p, CostParams(w_r=1, w_m=10)), p)
    sim, c = cluster(p)
    done = []
    c.apply_plan(actions, lambda: done.append(sim.now))
    sim.run_until(FAR)
    assert done == [c.lat.remaster_delay_us]
    assert p.primary_of(P(1)) == p.primary_of(P(2)) == N(1)
    assert p.primary_of(P(5)) == N(2)
    assert all(ok for *_, ok in c.action_log)


def test_plan_remasters_wait_for_copies(three_node_layout):
    p = three_node_layout
    sim, c = cluster(p)
    plan = [ReplicaAction(ActionKind.ADD_REPLICA, P(3), N(3)),
            ReplicaAction(ActionKind.REMASTER, P(3), N(3)),
            ReplicaAction(ActionKind.REMASTER, P(2), N(1))]
    c.apply_plan(plan)
    sim.run_until(FAR)
    log = {(a.kind, a.partition): t for t, _, a, _ in c.action_log}
    add_at = log[(ActionKind.ADD_REPLICA, P(3))]
    assert log[(ActionKind.REMASTER, P(2))] == log[(ActionKind.REMASTER, P(3))] == add_at + c.lat.remaster_delay_us
    assert p.primary_of(P(3)) == N(3) and p.primary_of(P(2)) == N(1)


def test_failed_action_does_not_stop_the_plan(three_node_layout):
    p = three_node_layout
    sim, c = cluster(p)
    c.apply_plan([ReplicaAction(ActionKind.REMOVE_REPLICA, P(1), N(1)),
                  ReplicaAction(ActionKind.REMASTER, P(2), N(1))])
    sim.run_until(FAR)
    assert [ok for *_, ok in c.action_log] == [False, True]
    assert p.primary_of(P(2)) == N(1)


def test_workers_queue_fifo():
    p = PlacementMap.round_robin(1, 1, k=1)
    sim, c = cluster(p, workers=2)
    ran = []
    for i in range(4):
        c.acquire_worker(0, ran.append, i)
    assert ran == [0, 1] and c.queue_len(0) == 4
    c.release_worker(0)
    c.release_worker(0)
    sim.run_until(0)
    assert ran == [0, 1, 2, 3]
