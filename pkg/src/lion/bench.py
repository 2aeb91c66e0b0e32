"""Experiment orchestration: config files, variant table, metrics, reports and the CLI."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .engine import Engine, Path, Status, TxnOutcome
from .heatgraph import build_graph, generate_clumps
from .model import PlacementMap
from .planner import CostParams, plan_to_actions, rearrange
from .predictor import WorkloadPredictor, inject
from .sim import TIMER, Cluster, LatencyModel, Simulator
from .workloads import (SECOND_US, DynamicScenario, ScenarioKind, TpccConfig, YcsbConfig,
                        cyclic_pairs, hotspot_interval, hotspot_position, static_scenario,
                        tpcc_neworder_stream)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantConfig:
    name: str
    partitioning: str  # "Off" or "ReplicaRearrangement"
    prediction: bool
    batch: bool

    @property
    def rearrange(self) -> bool:
        return self.partitioning == "ReplicaRearrangement"


VARIANTS = {v.name: v for v in [
    VariantConfig("2PC", "Off", False, False),
    VariantConfig("Lion(R)", "ReplicaRearrangement", False, False),
    VariantConfig("Lion(RW)", "ReplicaRearrangement", True, False),
    VariantConfig("Lion(RB)", "ReplicaRearrangement", False, True),
    VariantConfig("Lion", "ReplicaRearrangement", True, True),
]}


class ConfigError(ValueError):
    pass


def variant(name: str) -> VariantConfig:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}") from None


# section -> key -> default; the default's type is the key's type
SCHEMA: dict[str, dict[str, object]] = {
    "run": {"variant": "Lion", "duration_s": 300.0, "warmup_s": 30.0, "seed": 0,
            "clients": 256, "timeline_bin_ms": 1000.0, "max_retries": 3},
    "cluster": {"nodes": 4, "k": 2, "replica_max": 4, "workers": 8, "rpc_us": 500.0,
                "remaster_delay_us": 3000.0, "migrate_base_us": 10000.0,
                "migrate_us_per_item": 50.0, "op_us": 100.0, "epoch_interval_us": 10000.0,
                "epoch_txn_cap": 10000},
    "planner": {"planning_interval_s": 10.0, "alpha": 5.0, "cross_weight": 10.0, "w_r": 1.0,
                "w_m": 10.0, "epsilon": 0.1, "step_limit": 5, "batch_window_us": 10000.0,
                "batch_cap": 10000, "decay": 0.5},
    "predictor": {"sample_interval_s": 1.0, "window": 10, "horizon": 10, "beta": 0.15,
                  "gamma_frac": 0.25, "k_frac": 0.1, "w_p": 1.0, "epochs": 200, "lr": 0.01,
                  "retrain_mse": 0.02, "min_retrain_gap": 10, "cooldown_s": 0.0},
    "workload": {"kind": "ycsb", "partitions_per_node": 12, "keys_per_partition": 1000,
                 "skew_factor": 0.0, "cross_ratio": 0.0, "ops_per_txn": 10,
                 "read_fraction": 0.9, "period_s": 60.0, "periods": 0, "variants": 2,
                 "group_size": 2, "partner_noise": 0.0, "classes": 3, "interval": 4, "warehouses_per_node": 24,
                 "remote_prob": 0.1},
}

WORKLOAD_KINDS = ("ycsb", "tpcc", "hotspot_interval", "hotspot_position", "cyclic")


class RunConfig:
    """Parsed experiment file; ``cfg["section"]["key"]`` with defaults filled in."""

    def __init__(self, values: dict[str, dict[str, object]]):
        self.values = values

    def __getitem__(self, section):
        return self.values[section]

    def variant(self) -> VariantConfig:
        return variant(self["run"]["variant"])

    def with_overrides(self, **over) -> "RunConfig":
        vals = {s: dict(d) for s, d in self.values.items()}
        for dotted, v in over.items():
            s, _, k = dotted.partition("__")
            if s not in vals or k not in vals[s]:
                raise ConfigError(f"unknown key {s}.{k}")
            vals[s][k] = v
        return RunConfig(vals)

    def to_text(self) -> str:
        lines = []
        for s, d in self.values.items():
            lines.append(f"[{s}]")
            lines += [f"{k} = {v}" for k, v in d.items()]
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: dict(d) for s, d in SCHEMA.items()})

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as e:
            lineno = getattr(e, "lineno", None)
            if lineno is None and getattr(e, "errors", None):
                lineno = e.errors[0][0]
            where = f"line {lineno}: " if lineno else ""
            raise ConfigError(f"{source}: {where}{e.message.splitlines()[0]}") from None
        lines = _key_lines(text)
        vals = {s: dict(d) for s, d in SCHEMA.items()}
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{source}: line {lines.get((section, None), '?')}: "
                                  f"unknown section [{section}]; valid: {', '.join(SCHEMA)}")
            for key, raw in cp.items(section):
                at = lines.get((section, key), "?")
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{source}: line {at}: unknown key {key!r} in [{section}]")
                default = SCHEMA[section][key]
                try:
                    if isinstance(default, bool):
                        val = raw.lower() in ("1", "true", "yes", "on")
                    elif isinstance(default, int):
                        val = int(raw)
                    elif isinstance(default, float):
                        val = float(raw)
                    else:
                        val = raw.strip()
                except ValueError:
                    raise ConfigError(f"{source}: line {at}: {key} expects "
                                      f"{type(default).__name__}, got {raw!r}") from None
                vals[section][key] = val
        cfg = cls(vals)
        try:
            cfg.variant()
        except ConfigError as e:
            raise ConfigError(f"{source}: line {lines.get(('run', 'variant'), '?')}: {e}") from None
        if cfg["workload"]["kind"] not in WORKLOAD_KINDS:
            raise ConfigError(f"{source}: line {lines.get(('workload', 'kind'), '?')}: "
                              f"unknown workload kind; valid: {', '.join(WORKLOAD_KINDS)}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(FsPath(path).read_text(), str(path))


def _key_lines(text: str) -> dict:
    out = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out[(section, None)] = lineno
        elif section and line and line[0] not in "#;" and ("=" in line or ":" in line):
            key = line.split("=", 1)[0].split(":", 1)[0].strip()
            out[(section, key)] = lineno
    return out


# -- scenario construction ---------------------------------------------------------


def build_scenario(cfg: RunConfig, seed: int) -> DynamicScenario:
    w = cfg["workload"]
    n = cfg["cluster"]["nodes"]
    dur_us = cfg["run"]["duration_s"] * SECOND_US
    period_us = w["period_s"] * SECOND_US
    n_periods = w["periods"] or max(1, math.ceil(dur_us / period_us))
    common = dict(ops_per_txn=w["ops_per_txn"], read_fraction=w["read_fraction"],
                  keys_per_partition=w["keys_per_partition"])
    kind = w["kind"]
    if kind == "ycsb":
        yc = YcsbConfig(n, w["partitions_per_node"], w["keys_per_partition"], w["skew_factor"],
                        w["cross_ratio"], w["ops_per_txn"], w["read_fraction"], seed)
        return static_scenario(yc, dur_us)
    if kind == "hotspot_interval":
        return hotspot_interval(n, w["partitions_per_node"], n_periods, period_us,
                                w["classes"], w["interval"], seed=seed, **common)
    if kind == "hotspot_position":
        return hotspot_position(n, w["partitions_per_node"], period_us, w["skew_factor"] or 0.8,
                                seed=seed, **common)
    if kind == "cyclic":
        return cyclic_pairs(n, w["partitions_per_node"], n_periods, period_us, w["skew_factor"],
                            w["group_size"], w["variants"], seed=seed,
                            partner_noise=w["partner_noise"], **common)
    if kind == "tpcc":
        tc = TpccConfig(n, w["warehouses_per_node"], remote_prob=w["remote_prob"], seed=seed)
        return _TpccScenario(tc, dur_us)
    raise ConfigError(f"unknown workload kind {kind!r}")


class _TpccSource:
    def __init__(self, cfg: TpccConfig):
        self.it = tpcc_neworder_stream(cfg)
        self.bounds = [math.inf]

    def next(self, now):
        t = next(self.it)
        t.arrival_time = now
        return t

    def shift_times(self):
        return []


class _TpccScenario(DynamicScenario):
    def __init__(self, cfg: TpccConfig, dur_us: float):
        self.tc = cfg
        super().__init__(ScenarioKind.STATIC, [], cfg.n_partitions, cfg.n_nodes, cfg.seed)

    def source(self, seed=None):
        return _TpccSource(self.tc)


def n_partitions_of(cfg: RunConfig) -> int:
    w = cfg["workload"]
    per = w["warehouses_per_node"] if w["kind"] == "tpcc" else w["partitions_per_node"]
    return cfg["cluster"]["nodes"] * per


# -- the driver -------------------------------------------------------------------------


class Driver:
    """One seeded run: closed-loop clients feeding the engine, plus planner/predictor timers."""

    def __init__(self, cfg: RunConfig, seed: int | None = None, trace: bool = False,
                 check_invariants: bool = False):
        self.cfg = cfg
        self.seed = cfg["run"]["seed"] if seed is None else seed
        self.var = cfg.variant()
        c, pl, pr, run = cfg["cluster"], cfg["planner"], cfg["predictor"], cfg["run"]
        self.sim = Simulator(trace=trace)
        P = n_partitions_of(cfg)
        self.placement = PlacementMap.round_robin(c["nodes"], P, k=c["k"],
                                                  replica_max=c["replica_max"], decay=pl["decay"])
        lat = LatencyModel(c["rpc_us"], c["remaster_delay_us"], c["migrate_base_us"],
                           c["migrate_us_per_item"], c["op_us"])
        keys = cfg["workload"]["keys_per_partition"]
        self.cluster = Cluster(self.sim, self.placement, lat, keys, c["workers"],
                               c["epoch_interval_us"], c["epoch_txn_cap"], check_invariants)
        self.params = CostParams(pl["w_r"], pl["w_m"])
        self.engine = Engine(self.cluster, self.params, remaster=self.var.rearrange,
                             batch=self.var.batch, batch_window_us=pl["batch_window_us"],
                             batch_cap=pl["batch_cap"], max_retries=run["max_retries"],
                             on_outcome=self._on_outcome)
        self.engine.keep_outcomes = False
        self.scenario = build_scenario(cfg, self.seed)
        self.source = self.scenario.source(self.seed)
        self.end_us = run["duration_s"] * SECOND_US
        self.warmup_us = run["warmup_s"] * SECOND_US
        self.bin_us = run["timeline_bin_ms"] * 1000.0
        self.n_bins = max(1, int(math.ceil(self.end_us / self.bin_us)))
        self.commit_bins = np.zeros(self.n_bins, dtype=np.int64)
        self.generated = 0
        self.outcomes: list[TxnOutcome] = []
        self.round_txns = []
        self.plan_busy = False
        self.rounds = 0
        self.planned_actions = 0
        self.triggers = 0
        self.last_trigger = -math.inf
        self.predictor = None
        if self.var.prediction and self.var.rearrange:
            self.predictor = WorkloadPredictor(
                window=pr["window"], horizon=pr["horizon"], beta=pr["beta"],
                gamma_frac=pr["gamma_frac"], retrain_mse=pr["retrain_mse"],
                min_retrain_gap=pr["min_retrain_gap"], epochs=pr["epochs"], lr=pr["lr"],
                seed=self.seed, interval=pr["sample_interval_s"])

    # clients

    def _issue(self):
        if self.sim.now >= self.end_us:
            return
        t = self.source.next(self.sim.now)
        self.generated += 1
        if self.var.rearrange:
            self.round_txns.append(t)
        if self.predictor is not None:
            self.predictor.observe(t)
        self.engine.submit(t)

    def _on_outcome(self, o: TxnOutcome):
        self.outcomes.append(o)
        if o.status is Status.COMMITTED:
            b = int(o.finished_at // self.bin_us)
            if 0 <= b < self.n_bins:
                self.commit_bins[b] += 1
        self._issue()

    # planner / predictor

    def _plan_tick(self):
        if self.sim.now >= self.end_us:
            return
        self.plan_round()
        self.sim.after(self.cfg["planner"]["planning_interval_s"] * SECOND_US, TIMER, self._plan_tick)

    def plan_round(self, predicted=None) -> bool:
        if self.plan_busy:
            return False
        txns, self.round_txns = self.round_txns, []
        self.placement.close_interval()
        if not txns and not predicted:
            return False
        pl = self.cfg["planner"]
        g = build_graph(txns, self.placement, pl["cross_weight"])
        if predicted:
            g = inject(g, predicted, self.cfg["predictor"]["w_p"])
        clumps = generate_clumps(g, pl["alpha"])
        rp = rearrange(clumps, self.placement, self.params, pl["epsilon"], pl["step_limit"])
        actions = plan_to_actions(rp, self.placement)
        self.rounds += 1
        self.planned_actions += len(actions)
        self.sim.record(TIMER, -1, f"plan round={self.rounds} clumps={len(clumps)} actions={len(actions)}"
                        + (" predicted" if predicted else ""))
        if actions:
            self.plan_busy = True
            self.cluster.apply_plan(actions, self._plan_done)
        return True

    def _plan_done(self):
        self.plan_busy = False

    def _sample_tick(self):
        if self.sim.now >= self.end_us:
            return
        pr = self.cfg["predictor"]
        K = max(1, int(pr["k_frac"] * max(len(self.round_txns), 1)))
        trig = self.predictor.close_interval(K)
        if trig is not None and self.sim.now - self.last_trigger >= pr["cooldown_s"] * SECOND_US:
            # plan against what has arrived so far plus the forecast templates
            keep = list(self.round_txns)
            if self.plan_round(trig.templates):
                self.triggers += 1
                self.last_trigger = self.sim.now
                self.round_txns = keep
        self.sim.after(pr["sample_interval_s"] * SECOND_US, TIMER, self._sample_tick)

    # run

    def run(self) -> "RunReport":
        for _ in range(self.cfg["run"]["clients"]):
            self._issue()
        if self.var.rearrange:
            self.sim.after(self.cfg["planner"]["planning_interval_s"] * SECOND_US, TIMER, self._plan_tick)
        if self.predictor is not None:
            self.sim.after(self.cfg["predictor"]["sample_interval_s"] * SECOND_US, TIMER, self._sample_tick)
        self.sim.run_until(self.end_us)
        # drain: no new arrivals, let everything in flight finish
        guard = 0
        while self._unfinished():
            self.sim.run_until(self.sim.now + 100_000)
            guard += 1
            if guard > 10_000:
                raise RuntimeError("drain did not converge")
        return make_report(self)

    def _unfinished(self) -> bool:
        return len(self.outcomes) < self.generated


# -- metrics ---------------------------------------------------------------------------


def adaptation_times(bins: np.ndarray, bin_us: float, shifts, start_us: float, end_us: float,
                     threshold: float = 0.9, hold: int = 3) -> list[float]:
    """Per shift: time until throughput re-enters ``threshold`` x steady state.

    Steady state is the median of the bins in the second half of the period
    that the shift opens. Re-entry means ``hold`` consecutive bins at or
    above the threshold, so the burst of commits left over from the previous
    period does not count. Shifts before ``start_us`` are skipped.
    """
    out = []
    edges = [s for s in shifts if start_us <= s < end_us] + [end_us]
    for s, nxt in zip(edges, edges[1:]):
        b0 = int(round(s / bin_us))
        b1 = min(int(round(nxt / bin_us)), len(bins))
        if b1 - b0 < 2:
            continue
        seg = bins[b0:b1]
        steady = float(np.median(seg[len(seg) // 2:]))
        ok = seg >= threshold * steady
        h = min(hold, len(seg))
        hit = next((i for i in range(len(seg) - h + 1) if ok[i:i + h].all()), len(seg))
        out.append(hit * bin_us)
    return out


@dataclass
class RunReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    @property
    def throughput(self) -> float:
        return self.data["throughput_tps"]

    @property
    def adaptation(self) -> list[float]:
        return self.data["adaptation_us"]


def _pct(xs, q):
    return float(np.percentile(xs, q)) if len(xs) else 0.0


def make_report(d: Driver) -> RunReport:
    committed = [o for o in d.outcomes if o.status is Status.COMMITTED]
    aborted = [o for o in d.outcomes if o.status is Status.ABORTED]
    measured = [o for o in committed if d.warmup_us <= o.finished_at < d.end_us]
    span_s = max((d.end_us - d.warmup_us) / SECOND_US, 1e-9)
    lat = np.array([o.latency_us for o in measured])
    paths = {p.value: 0 for p in Path}
    for o in measured:
        paths[o.path.value] += 1
    n_meas = max(len(measured), 1)
    bytes_total = sum(o.bytes_on_wire for o in committed) + d.cluster.bytes_replication
    b_per_s = d.bin_us / SECOND_US
    timeline = [round(float(x) / b_per_s, 3) for x in d.commit_bins]
    shifts = d.source.shift_times()
    data = {
        "variant": d.var.name,
        "seed": d.seed,
        "workload": d.cfg["workload"]["kind"],
        "config": {s: dict(v) for s, v in d.cfg.values.items()},
        "generated": d.generated,
        "committed": len(committed),
        "aborted_final": len(aborted),
        "aborts_total": d.engine.aborts,
        "reconciled": len(committed) + len(aborted) == d.generated,
        "throughput_tps": round(len(measured) / span_s, 3),
        "timeline_tps": timeline,
        "timeline_bin_us": d.bin_us,
        "latency_us": {"p50": round(_pct(lat, 50), 1), "p95": round(_pct(lat, 95), 1),
                       "p99": round(_pct(lat, 99), 1)},
        "phase_avg_us": {k: round(sum(getattr(o, k) for o in measured) / n_meas, 2)
                         for k in ("exec_us", "prep_us", "commit_us", "remaster_wait_us")},
        "bytes_per_committed": round(bytes_total / max(len(committed), 1), 2),
        "path_mix": {k: round(v / n_meas, 4) for k, v in paths.items()},
        "shifts_us": shifts,
        "adaptation_us": adaptation_times(d.commit_bins, d.bin_us, shifts, d.warmup_us, d.end_us),
        "planner_rounds": d.rounds,
        "planned_actions": d.planned_actions,
        "failed_actions": sum(1 for e in d.cluster.action_log if not e[3]),
        "remaster_conflicts": d.cluster.conflicts,
        "predictor_triggers": d.triggers,
        "predictor_trainings": d.predictor.train_count if d.predictor else 0,
        "events": d.sim.fired,
        "trace_hash": d.sim.trace_hash(),
    }
    return RunReport(data)


def run(cfg: RunConfig, seed: int | None = None, trace: bool = False) -> tuple[RunReport, Driver]:
    d = Driver(cfg, seed, trace=trace)
    return d.run(), d


def timeline_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s", "tps"])
    step = report.data["timeline_bin_us"] / SECOND_US
    for i, x in enumerate(report.data["timeline_tps"]):
        w.writerow([f"{i * step:.3f}", x])
    return buf.getvalue()


def latency_csv(d: Driver) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["txn_id", "status", "path", "latency_us", "exec_us", "prep_us", "commit_us",
                "remaster_wait_us", "bytes"])
    for o in sorted(d.outcomes, key=lambda o: o.txn_id):
        w.writerow([o.txn_id, o.status.value, o.path.value, f"{o.latency_us:.1f}", f"{o.exec_us:.1f}",
                    f"{o.prep_us:.1f}", f"{o.commit_us:.1f}", f"{o.remaster_wait_us:.1f}",
                    o.bytes_on_wire])
    return buf.getvalue()


# -- compare ---------------------------------------------------------------------------------


def _workload_key(r: dict) -> tuple:
    c = r.get("config", {})
    return (r.get("workload"), json.dumps(c.get("workload", {}), sort_keys=True),
            c.get("cluster", {}).get("nodes"), c.get("run", {}).get("duration_s"))


def compare(reports: list[dict]) -> dict:
    """Side-by-side table with ratios against the first report."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    base = reports[0]
    ref_key = _workload_key(base)
    rows = []
    for r in reports:
        def ratio(a, b):
            return round(a / b, 4) if b else (1.0 if a == b else math.inf)
        rows.append({
            "variant": r["variant"],
            "seed": r["seed"],
            "throughput_tps": r["throughput_tps"],
            "throughput_ratio": ratio(r["throughput_tps"], base["throughput_tps"]),
            "p50_us": r["latency_us"]["p50"],
            "p50_ratio": ratio(r["latency_us"]["p50"], base["latency_us"]["p50"]),
            "p99_us": r["latency_us"]["p99"],
            "single": r["path_mix"]["SingleNode"],
            "remastered": r["path_mix"]["Remastered"],
            "distributed": r["path_mix"]["Distributed2PC"],
            "workload_mismatch": _workload_key(r) != ref_key,
        })
    return {"rows": rows, "mismatched": any(x["workload_mismatch"] for x in rows)}


def compare_csv(table: dict) -> str:
    buf = io.StringIO()
    rows = table["rows"]
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# -- CLI -----------------------------------------------------------------------------------------


def _cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    report, d = run(cfg, args.seed, trace=args.trace)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "timeline.csv").write_text(timeline_csv(report))
    (out / "latency.csv").write_text(latency_csv(d))
    if args.trace:
        (out / "trace.log").write_text("\n".join(d.sim.trace) + "\n")
    r = report.data
    print(f"{r['variant']}: {r['throughput_tps']:.1f} txn/s, p50 {r['latency_us']['p50']:.0f} us, "
          f"mix {r['path_mix']}")
    return 0


def _cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        p = FsPath(p)
        if p.is_dir():
            p = p / "report.json"
        reports.append(json.loads(p.read_text()))
    try:
        table = compare(reports)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps(table, indent=2) + "\n")
    (out / "compare.csv").write_text(compare_csv(table))
    sys.stdout.write(compare_csv(table))
    if table["mismatched"]:
        print("warning: reports come from different workloads", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lion-bench", description="Run simulated replica-provision experiments.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one config and write report.json, timeline.csv, latency.csv")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--trace", action="store_true", help="also write trace.log")
    r.set_defaults(fn=_cmd_run)
    c = sub.add_parser("compare", help="tabulate reports against the first one")
    c.add_argument("--out", required=True)
    c.add_argument("reports", nargs="+")
    c.set_defaults(fn=_cmd_compare)
    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
