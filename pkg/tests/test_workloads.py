import itertools
from collections import Counter

import pytest

from lion.model import PlacementMap
from lion.workloads import (SECOND_US, Period, Source, TpccConfig, YcsbConfig, cross_node_matching,
                            cyclic_pairs, dump_trace, dynamic_stream, hotspot_interval,
                            hotspot_position, initial_node, load_trace, stream_hash,
                            tpcc_neworder_stream, ycsb_stream)

N_TXNS = 100_000


def take(it, n):
    return list(itertools.islice(it, n))


def node_shares(txns, n_nodes):
    c = Counter(initial_node(t.txn_parts[0], n_nodes) for t in txns)
    return [c[n] / len(txns) for n in range(n_nodes)]


def test_uniform_ycsb_spreads_evenly():
    cfg = YcsbConfig(skew_factor=0.0, cross_ratio=0.5, ops_per_txn=2, seed=1)
    shares = node_shares(take(ycsb_stream(cfg), N_TXNS), cfg.n_nodes)
    assert all(abs(s - 0.25) < 0.03 for s in shares), shares


@pytest.mark.parametrize("cross", [0.0, 1.0])
def test_skewed_ycsb_hot_share(cross):
    cfg = YcsbConfig(skew_factor=0.8, cross_ratio=cross, ops_per_txn=2, seed=2)
    shares = node_shares(take(ycsb_stream(cfg), N_TXNS), cfg.n_nodes)
    assert abs(shares[cfg.hot_node] - 0.8) < 0.02, shares


def test_full_cross_ratio_gives_two_nodes():
    cfg = YcsbConfig(skew_factor=0.8, cross_ratio=1.0, seed=3)
    p = PlacementMap.round_robin(cfg.n_nodes, cfg.n_partitions)
    for t in take(ycsb_stream(cfg), 5000):
        assert len(t.txn_parts) == 2
        assert p.primary_of(t.txn_parts[0]) != p.primary_of(t.txn_parts[1])


def test_unmatched_partners_still_cross_nodes():
    cfg = YcsbConfig(cross_ratio=1.0, matched=False, seed=3)
    for t in take(ycsb_stream(cfg), 2000):
        u, v = t.txn_parts
        assert initial_node(u, 4) != initial_node(v, 4)


def test_ycsb_ops_and_config_checks():
    t = next(ycsb_stream(YcsbConfig(ops_per_txn=10, read_fraction=1.0)))
    assert len(t.ops) == 10 and not t.writes
    with pytest.raises(ValueError):
        YcsbConfig(skew_factor=1.5)
    with pytest.raises(ValueError):
        YcsbConfig(partitions_per_node=0)


def test_matching_pairs_distinct_nodes():
    import random
    rng = random.Random(0)
    parts = list(range(48))
    pairs = cross_node_matching(parts, 4, rng, first=[0, 4, 8])
    used = [v for pr in pairs for v in pr]
    assert len(used) == len(set(used))
    assert all(initial_node(a, 4) != initial_node(b, 4) for a, b in pairs)
    assert {0, 4, 8} <= set(used)


@pytest.mark.parametrize("prob,expect", [(0.0, 0.0), (1.0, 1.0)])
def test_tpcc_remote_extremes(prob, expect):
    txns = take(tpcc_neworder_stream(TpccConfig(remote_prob=prob, seed=4)), 2000)
    assert sum(len(t.txn_parts) > 1 for t in txns) / len(txns) == expect


def test_tpcc_remote_fraction_matches_probability():
    cfg = TpccConfig(seed=5)
    txns = take(tpcc_neworder_stream(cfg), N_TXNS)
    frac = sum(len(t.txn_parts) > 1 for t in txns) / len(txns)
    assert abs(frac - cfg.remote_prob) < 0.02
    home = txns[0].ops[0].partition
    assert all(o.partition == home or o.kind in "RW" for o in txns[0].ops)


def test_tpcc_rejects_bad_probability():
    with pytest.raises(ValueError):
        TpccConfig(remote_prob=-0.1)


def test_interval_scenario_switches_to_disjoint_range():
    s = hotspot_interval(duration_us=60 * SECOND_US, n_periods=4)
    sets = [p.partitions for p in s.periods]
    for a, b in zip(sets, sets[1:]):
        assert not a & b
    src = s.source()
    before = {v for _ in range(500) for v in src.next(60 * SECOND_US - 1).txn_parts}
    after = {v for _ in range(500) for v in src.next(60 * SECOND_US).txn_parts}
    assert before <= sets[0] and after <= sets[1]
    # a half coming back needs different groups than it left with
    assert set(s.periods[0].groups) != set(s.periods[2].groups)


def test_interval_groups_are_contiguous_classes():
    s = hotspot_interval()
    for p in s.periods:
        assert len(p.groups) == 3 and all(len(g) == 4 for g in p.groups)
        assert p.skew_factor == 0 and p.cross_ratio == 1


def test_position_period_a_half_cross():
    s = hotspot_position(seed=6)
    a = s.periods[0]
    import random
    rng = random.Random(7)
    txns = [a.draw(rng, i) for i in range(N_TXNS // 5)]
    frac = sum(len(t.txn_parts) == 2 for t in txns) / len(txns)
    assert abs(frac - 0.5) < 0.02


def test_position_hot_sets_do_not_repeat():
    s = hotspot_position()
    assert [p.label for p in s.periods] == ["A", "B", "C", "D"]
    assert s.periods[0].skew_factor == 0
    hot = [p.hot for p in s.periods if p.hot]
    assert len(hot) == 3
    for a, b in itertools.combinations(hot, 2):
        assert not a & b
    assert [p.cross_ratio for p in s.periods] == [0.5, 0.5, 1.0, 1.0]


def test_cyclic_scenario_repeats_every_four_periods():
    s = cyclic_pairs(n_periods=8)
    keys = [(p.groups, p.hot) for p in s.periods]
    assert keys[:4] == keys[4:]
    assert len(set(keys[:4])) == 4
    assert not s.periods[0].partitions & s.periods[1].partitions


def test_period_validation():
    with pytest.raises(ValueError):
        Period(1.0, ())
    with pytest.raises(ValueError):
        Period(1.0, ((0, 1),), cross_ratio=2)
    with pytest.raises(ValueError):
        Source([])


def test_trace_round_trip_and_errors():
    txns = take(ycsb_stream(YcsbConfig(cross_ratio=0.5, seed=8), interarrival_us=10), 200)
    text = dump_trace(txns)
    back = load_trace(text)
    assert dump_trace(back) == text
    assert [t.txn_parts for t in back] == [t.txn_parts for t in txns]
    with pytest.raises(ValueError, match="line 2"):
        load_trace("0.0 1 0 R:0:1\n0.0 2 0\n")
    with pytest.raises(ValueError, match="line 1"):
        load_trace("0.0 1 1 R:0:1\n")
    with pytest.raises(ValueError, match="line 1"):
        load_trace("x 1 0 R:0:1\n")


def test_streams_are_reproducible():
    def h(seed):
        return stream_hash(take(ycsb_stream(YcsbConfig(skew_factor=0.5, cross_ratio=0.5, seed=seed)), 1000))
    assert h(1) == h(1) and h(1) != h(2)
    s = hotspot_interval(duration_us=1000.0, n_periods=2)
    assert stream_hash(dynamic_stream(s, 10)) == stream_hash(dynamic_stream(s, 10))
    assert len(list(dynamic_stream(s, 10))) == 200


def test_pair_scenarios_leave_nobody_unpaired():
    scenarios = [hotspot_position(seed=s) for s in range(5)] + [cyclic_pairs(seed=s) for s in range(5)]
    for s in scenarios:
        for p in s.periods:
            assert all(len(g) == 2 for g in p.groups), p.label
    from lion.workloads import ycsb_period
    for seed in range(5):
        for skew in (0.0, 0.8):
            p = ycsb_period(YcsbConfig(skew_factor=skew, cross_ratio=1.0, seed=seed))
            assert all(len(g) == 2 for g in p.groups)
