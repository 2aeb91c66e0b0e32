import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import P, txn
from lion.heatgraph import HeatGraph, build_graph, generate_clumps
from lion.lstm import LastValueForecaster
from lion.predictor import (TemplateSeries, WeightedReservoir, WorkloadClass, WorkloadPredictor,
                            append_sample, classify, cosine_distance, forecast_class,
                            identify_template, inject, maybe_trigger, predicted_templates,
                            template_label, variation, workload_variation)

# two workload classes that take turns (one-based partition names)
W1 = [(P(1), P(2)), (P(3),), (P(4),), (P(5),)]
W2 = [(P(3), P(4)), (P(5), P(6))]


def switching_run(n=100, half=10, horizon=1, K=10):
    """Alternate W1 and W2 every ``half`` intervals; returns predictor and triggers."""
    pred = WorkloadPredictor(horizon=horizon, seed=0)
    triggers = []
    tid = 0
    for t in range(n):
        phase = (t // half) % 2
        for tpl in (W1 if phase == 0 else W2):
            for _ in range(10 if phase == 0 else 15):
                tid += 1
                pred.observe(txn(tid, *[("W", v, 0) for v in tpl]))
        tr = pred.close_interval(K=K)
        if tr is not None:
            triggers.append(tr)
    return pred, triggers


@pytest.fixture(scope="module")
def switching():
    return switching_run()


def series(tpl, ar, freq=None):
    return TemplateSeries(tpl, list(map(float, ar)), freq=float(sum(ar) if freq is None else freq))


def test_template_identification():
    t = txn(1, ("W", P(4), 1), ("R", P(3), 2), ("W", P(4), 3))
    assert identify_template(t) == (P(3), P(4))
    assert identify_template(txn(2, ("R", P(3), 0), ("W", P(4), 0))) == identify_template(t)
    assert template_label((2, 3)) == "P2P3"
    assert identify_template(txn(3, ("R", P(5), 0))) == (P(5),)
    with pytest.raises(ValueError):
        identify_template(txn(4))


def test_append_sample():
    s = TemplateSeries((1,))
    append_sample(s, 0)
    append_sample(s, 3)
    assert s.ar == [0.0, 3.0] and s.freq == 3
    with pytest.raises(ValueError):
        append_sample(s, -1)


def test_series_shows_switch_level_change(switching):
    pred, _ = switching
    ar = pred.series[(P(3), P(4))].ar
    assert ar[9] == 0 and ar[10] == 15 and ar[19] == 15 and ar[20] == 0


def test_cosine_cases():
    assert cosine_distance([1, 2, 3], [1, 2, 3]) == pytest.approx(0, abs=1e-12)
    assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1, abs=1e-12)
    assert cosine_distance([1, 2, 3], [2, 4, 6]) == pytest.approx(0, abs=1e-12)
    assert cosine_distance([1, 0], [-1, 0]) == pytest.approx(2, abs=1e-12)
    assert cosine_distance([0, 0], [1, 1]) == 1.0
    with pytest.raises(ValueError):
        cosine_distance([1, 2], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=12))
def test_cosine_against_straight_line_formula(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na < 1e-6 or nb < 1e-6:
        return
    expect = 1 - max(-1.0, min(1.0, sum(x * y for x, y in pairs) / (na * nb)))
    got = cosine_distance(a, b)
    assert abs(got - expect) < 1e-9
    assert abs(got - cosine_distance(b, a)) < 1e-12


def test_classify_switching_scenario(switching):
    pred, _ = switching
    got = sorted(sorted(template_label(m) for m in c.members) for c in pred.classes)
    want = sorted(sorted(template_label(m) for m in w) for w in (W1, W2))
    assert got == want
    for c in pred.classes:
        total = sum(np.array(pred.series[m].ar) for m in c.members)
        assert np.array_equal(c.ar, total)


def test_classify_limits():
    a = series((1,), [1, 2, 3])
    b = series((2,), [3, 1, 0])
    c = series((3,), [0, 5, 1])
    assert len(classify([a])) == 1
    same = [series((i,), [4, 1, 7]) for i in range(3)]
    assert len(classify(same, beta=1e-9)) == 1
    assert len(classify([a, b, c], beta=1e-12)) == 3
    assert len(classify([a, b, c], beta=2.0001)) == 1
    with pytest.raises(ValueError):
        classify([a], beta=0)


def test_classify_is_single_linkage_partition():
    rng = np.random.default_rng(5)
    for _ in range(50):
        ts = [series((i,), rng.integers(0, 5, 6)) for i in range(8)]
        beta = float(rng.uniform(0.05, 0.6))
        classes = classify(ts, beta)
        members = sorted(m for c in classes for m in c.members)
        assert members == [(i,) for i in range(8)]
        # independent oracle: transitive closure of the < beta relation
        n = len(ts)
        reach = [[i == j or cosine_distance(ts[i].ar, ts[j].ar) < beta for j in range(n)]
                 for i in range(n)]
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    reach[i][j] = reach[i][j] or (reach[i][k] and reach[k][j])
        of = {m: ci for ci, c in enumerate(classes) for m in c.members}
        for i in range(n):
            for j in range(n):
                assert (of[(i,)] == of[(j,)]) == reach[i][j]


def test_variation_worked_value():
    assert variation([10, 20], [13, 24]) == pytest.approx(math.sqrt(12.5), abs=1e-9)
    assert variation([10, 20], [10, 20]) == 0
    assert variation([], []) == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 1e4)), min_size=1, max_size=20))
def test_variation_against_straight_line_formula(pairs):
    n = len(pairs)
    expect = math.sqrt(sum((f - c) ** 2 for c, f in pairs) / n)
    assert abs(variation([c for c, _ in pairs], [f for _, f in pairs]) - expect) < 1e-9 * max(1, expect)


def test_workload_variation_with_last_value_is_zero():
    c1 = WorkloadClass([(1,)], np.arange(12.0), [1.0])
    c2 = WorkloadClass([(2,)], np.ones(12), [1.0])
    assert workload_variation([c1, c2], LastValueForecaster(), h=5) == 0
    with pytest.raises(ValueError):
        workload_variation([WorkloadClass([(1,)], np.ones(4), [1.0])], LastValueForecaster())


def test_forecast_class_returns_raw_units():
    ar = np.array([5.0] * 5 + [25.0] * 7)
    assert forecast_class(ar, LastValueForecaster(), 3) == 25.0
    assert forecast_class(ar, LastValueForecaster(), 0, t=10) == 25.0
    with pytest.raises(ValueError):
        forecast_class(ar, LastValueForecaster(), 1, t=4)


def test_trigger_threshold():
    assert not maybe_trigger(0.0, 1.0)
    assert not maybe_trigger(2.0, 2.0)
    assert maybe_trigger(2.0 + 1e-9, 2.0)
    with pytest.raises(ValueError):
        maybe_trigger(1.0, 0.0)


def test_wv_peaks_at_switch(switching):
    pred, _ = switching
    wv = np.array(pred.wv_history)
    for switch in (60, 70, 80, 90):
        lo = switch - 5
        peak = lo + int(np.argmax(wv[lo:switch + 5]))
        assert abs(peak - switch) <= 1, (switch, peak)


def test_trigger_fires_once_per_switch_at_half_peak(switching):
    pred, _ = switching
    wv = np.array(pred.wv_history)
    gamma = 0.5 * wv.max()
    late = [t for t in range(40, len(wv)) if maybe_trigger(wv[t], gamma)]
    switches = list(range(50, 101, 10))  # t=99 anticipates the switch at 100
    assert len(late) == len(switches)
    for t, s in zip(late, switches):
        assert abs(t - s) <= 1


def test_switch_trigger_samples_rising_class(switching):
    _, triggers = switching
    # at t=69 W2 is about to take over
    tr = next(t for t in triggers if t.t == 69)
    labels = {template_label(tid) for tid, _ in tr.templates}
    assert template_label((P(3), P(4))) in labels
    assert labels <= {template_label(m) for m in W2}
    assert sum(w for _, w in tr.templates) == 10


def test_reservoir_frequency_ratio():
    rng = np.random.default_rng(11)
    r = WeightedReservoir(["a", "b"], [3, 1])
    draws = [r.draw(rng) for _ in range(1000)]
    ratio = draws.count("a") / draws.count("b")
    assert abs(ratio - 3) / 3 < 0.10


def test_predicted_templates_single_member():
    c = WorkloadClass([(7,)], np.array([1.0, 2.0]), [5.0])
    assert predicted_templates([c], [9.0], 8) == [((7,), 8)]
    assert predicted_templates([c], [9.0], 0) == []


def graph_equal(a: HeatGraph, b: HeatGraph):
    def close(x, y):
        return x.keys() == y.keys() and all(abs(x[k] - y[k]) < 1e-9 for k in x)
    return close(a.vertices, b.vertices) and close(a.edges, b.edges) and close(a.predicted, b.predicted)


def test_inject_zero_is_identity(three_node_layout):
    g = build_graph([], three_node_layout)
    g.add_access([P(1), P(2)])
    out = inject(g, [((P(3), P(4)), 1.0)], w_p=0)
    assert out.dump() == g.dump() and out.predicted == g.predicted
    with pytest.raises(ValueError):
        inject(g, [], w_p=-1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10),
       st.lists(st.tuples(st.sets(st.integers(0, 5), min_size=1, max_size=3), st.integers(1, 4)),
                max_size=5))
def test_inject_linearity(a, b, raw):
    from lion.model import PlacementMap
    pm = PlacementMap.round_robin(3, 6)
    g = build_graph([], pm)
    g.add_access([0, 1])
    preds = [(tuple(sorted(s)), float(w)) for s, w in raw]
    assert graph_equal(inject(inject(g, preds, a), preds, b), inject(g, preds, a + b))


def test_inject_twice_equals_double_weight(three_node_layout):
    g = build_graph([], three_node_layout)
    preds = [((P(3), P(4)), 1.0)]
    assert graph_equal(inject(inject(g, preds, 1), preds, 1), inject(g, preds, 2))


def test_injected_template_merges_clumps(three_node_layout):
    # P3 and P4 each carry one unit of observed heat with no edge between them
    g = build_graph([], three_node_layout)
    g.add_access([P(3)])
    g.add_access([P(4)])
    before = {c.pids for c in generate_clumps(g, alpha=1)}
    assert frozenset({P(3)}) in before and frozenset({P(4)}) in before
    out = inject(g, [((P(3), P(4)), 2.0)], w_p=1)
    assert out.weight(P(3), P(4)) > 0
    clumps = {c.pids: c for c in generate_clumps(out, alpha=1)}
    merged = clumps[frozenset({P(3), P(4)})]
    assert merged.weight == pytest.approx(4.0)


def test_predictor_csv_header(switching):
    pred, _ = switching
    lines = pred.to_csv().splitlines()
    assert lines[0] == "t,class_id,actual,predicted" and len(lines) > 10
