"""Template arrival-rate tracking, workload classes, forecasting and pre-replication hints."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .heatgraph import HeatGraph
from .lstm import LastValueForecaster, LSTMForecaster
from .model import TxnMeta

TemplateId = tuple  # sorted, deduplicated partition ids


def identify_template(t: TxnMeta) -> TemplateId:
    if not t.txn_parts:
        raise ValueError(f"transaction {t.txn_id} touches no partition")
    return tuple(sorted(set(t.txn_parts)))


def template_label(tid: TemplateId) -> str:
    return "".join(f"P{v}" for v in tid)


@dataclass
class TemplateSeries:
    template: TemplateId
    ar: list[float] = field(default_factory=list)
    interval: float = 1.0
    # cumulative arrivals; weights the template inside its class sampler
    freq: float = 0.0


def append_sample(s: TemplateSeries, count: float) -> TemplateSeries:
    if count < 0:
        raise ValueError("arrival count must be non-negative")
    s.ar.append(float(count))
    s.freq += count
    return s


def cosine_distance(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise ValueError("series must be 1-d with equal nonzero length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    sim = float(np.dot(a, b) / (na * nb))
    return 1.0 - min(1.0, max(-1.0, sim))


class WeightedReservoir:
    """Single-pass weighted reservoir (exponential keys), size 1 per draw."""

    def __init__(self, items: Sequence, weights: Sequence[float]):
        if len(items) != len(weights):
            raise ValueError("items/weights length mismatch")
        self.items = list(items)
        self.weights = [float(w) for w in weights]

    def draw(self, rng: np.random.Generator):
        best, best_key = None, -math.inf
        total = sum(self.weights)
        for item, w in zip(self.items, self.weights):
            if total <= 0:
                w = 1.0
            if w <= 0:
                continue
            key = math.log(rng.random() or 1e-300) / w
            if key > best_key:
                best, best_key = item, key
        return best


@dataclass
class WorkloadClass:
    members: list[TemplateId]
    ar: np.ndarray
    freqs: list[float]

    @property
    def sampler(self) -> WeightedReservoir:
        return WeightedReservoir(self.members, self.freqs)

    @property
    def key(self) -> frozenset:
        return frozenset(self.members)


def classify(templates: Sequence[TemplateSeries], beta: float = 0.15) -> list[WorkloadClass]:
    """Single-linkage grouping: chains of pairwise distance < beta merge."""
    if not 0 < beta:
        raise ValueError("beta must be positive")
    n = len(templates)
    if n == 0:
        return []
    length = max(len(s.ar) for s in templates)
    M = np.zeros((n, length))
    for i, s in enumerate(templates):
        M[i, length - len(s.ar):] = s.ar
    norms = np.linalg.norm(M, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = M / safe[:, None]
    sim = np.clip(U @ U.T, -1.0, 1.0)
    dist = 1.0 - sim
    zero = norms == 0
    dist[zero, :] = 1.0
    dist[:, zero] = 1.0
    np.fill_diagonal(dist, 0.0)

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    ii, jj = np.nonzero(np.triu(dist < beta, 1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    classes = []
    for idx in groups.values():
        idx.sort(key=lambda i: templates[i].template)
        classes.append(WorkloadClass([templates[i].template for i in idx],
                                     M[idx].sum(axis=0),
                                     [templates[i].freq for i in idx]))
    classes.sort(key=lambda c: c.members[0])
    return classes


def minmax(series):
    s = np.asarray(series, dtype=np.float64)
    lo, hi = float(s.min()), float(s.max())
    span = hi - lo if hi > lo else 1.0
    return (s - lo) / span, lo, span


def variation(current: Sequence[float], future: Sequence[float]) -> float:
    """Root-mean-square gap between current and forecast arrival rates."""
    cur = np.asarray(current, dtype=np.float64)
    fut = np.asarray(future, dtype=np.float64)
    if cur.shape != fut.shape:
        raise ValueError("shape mismatch")
    if cur.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((fut - cur) ** 2)))


def forecast_class(ar, f, h: int, t: int | None = None) -> float:
    """Forecast of ``ar`` at ``t + h`` in raw units, using samples up to ``t``."""
    ar = np.asarray(ar, dtype=np.float64)
    t = len(ar) - 1 if t is None else t
    window = f.window
    if t + 1 < window:
        raise ValueError(f"need at least {window} samples of history")
    if h == 0:
        return float(ar[t])
    hist = ar[:t + 1]
    norm, lo, span = minmax(hist)
    pred = f.forecast(norm[-window:], h)
    return float(lo + pred[-1] * span)


def workload_variation(classes: Sequence[WorkloadClass], f, h: int = 10,
                       t: int | None = None) -> float:
    current, future = [], []
    for c in classes:
        tt = len(c.ar) - 1 if t is None else t
        current.append(float(c.ar[tt]))
        future.append(forecast_class(c.ar, f, h, tt))
    return variation(current, future)


def maybe_trigger(wv: float, gamma: float) -> bool:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return wv > gamma


def predicted_templates(classes: Sequence[WorkloadClass], forecasts: Sequence[float], K: int,
                        rng: np.random.Generator | None = None) -> list[tuple[TemplateId, float]]:
    """Draw ``K`` templates from the class whose forecast rises most.

    Returned weights are draw counts, hence proportional to member frequency.
    """
    if not classes or K <= 0:
        return []
    rng = rng if rng is not None else np.random.default_rng(0)
    rises = [fc - float(c.ar[-1]) for c, fc in zip(classes, forecasts)]
    best = max(range(len(classes)), key=lambda i: (rises[i], -i))
    sampler = classes[best].sampler
    counts: dict[TemplateId, int] = {}
    for _ in range(K):
        tid = sampler.draw(rng)
        counts[tid] = counts.get(tid, 0) + 1
    return sorted(counts.items())


def inject(g: HeatGraph, preds: Sequence[tuple[TemplateId, float]], w_p: float = 1.0) -> HeatGraph:
    if w_p < 0:
        raise ValueError("w_p must be >= 0")
    out = g.copy()
    if w_p == 0:
        return out
    for tid, weight in preds:
        out.add_access(tid, scale=weight * w_p, forecast=True)
    return out


@dataclass
class Trigger:
    t: int
    wv: float
    gamma: float
    templates: list[tuple[TemplateId, float]]


class WorkloadPredictor:
    """Per-interval driver: series upkeep, (re)training, variation trigger.

    The forecaster is shared by all classes; each class series is min-max
    scaled on its own history before windows are fed to it.
    """

    def __init__(self, window: int = 10, horizon: int = 10, beta: float = 0.15,
                 gamma: float | None = None, gamma_frac: float = 0.25,
                 retrain_mse: float = 0.02, min_retrain_gap: int = 10,
                 epochs: int = 200, lr: float = 0.01, optimizer: str = "adam",
                 max_history: int = 120, seed: int = 0, use_lstm: bool = True,
                 interval: float = 1.0):
        self.window = window
        self.horizon = horizon
        self.beta = beta
        self.gamma = gamma
        self.gamma_frac = gamma_frac
        self.retrain_mse = retrain_mse
        self.min_retrain_gap = min_retrain_gap
        self.epochs = epochs
        self.lr = lr
        self.optimizer = optimizer
        self.max_history = max_history
        self.interval = interval
        self.rng = np.random.default_rng(seed)
        self.model = LSTMForecaster(window=window, seed=seed) if use_lstm else LastValueForecaster()
        self.fallback = LastValueForecaster()
        self.series: dict[TemplateId, TemplateSeries] = {}
        self._counts: dict[TemplateId, int] = {}
        self.t = -1
        self.last_train = None
        self.train_count = 0
        self._pending: dict[frozenset, float] = {}
        self._errors: list[float] = []
        self.peak = 0.0
        self.wv_history: list[float] = []
        self.rows: list[tuple[int, int, float, float]] = []
        self.classes: list[WorkloadClass] = []

    def observe(self, t: TxnMeta) -> None:
        tid = identify_template(t)
        self._counts[tid] = self._counts.get(tid, 0) + 1

    @property
    def forecaster(self):
        return self.model if self.model.trained else self.fallback

    def close_interval(self, K: int = 0) -> Trigger | None:
        self.t += 1
        for tid in self._counts:
            if tid not in self.series:
                self.series[tid] = TemplateSeries(tid, [0.0] * self.t, self.interval)
        for tid, s in self.series.items():
            append_sample(s, self._counts.get(tid, 0))
        self._counts = {}
        if not self.series:
            self.wv_history.append(0.0)
            return None
        classes = classify(list(self.series.values()), self.beta)
        self.classes = classes
        for c in classes:
            self.peak = max(self.peak, float(c.ar.max()))

        self._score_and_maybe_retrain(classes)

        if self.t + 1 < self.window:
            self.wv_history.append(0.0)
            return None
        f = self.forecaster
        fc = [forecast_class(c.ar, f, self.horizon) for c in classes]
        one_step = [forecast_class(c.ar, f, 1) for c in classes]
        for i, c in enumerate(classes):
            self._pending[c.key] = one_step[i]
            self.rows.append((self.t, i, float(c.ar[-1]), one_step[i]))
        wv = variation([c.ar[-1] for c in classes], fc)
        self.wv_history.append(wv)
        gamma = self.gamma if self.gamma is not None else self.gamma_frac * self.peak
        if gamma <= 0 or not maybe_trigger(wv, gamma):
            return None
        return Trigger(self.t, wv, gamma, predicted_templates(classes, fc, K, self.rng))

    def _score_and_maybe_retrain(self, classes):
        for c in classes:
            pred = self._pending.get(c.key)
            if pred is not None:
                span = max(float(c.ar.max() - c.ar.min()), 1e-9)
                self._errors.append(((pred - float(c.ar[-1])) / span) ** 2)
        self._pending = {}
        self._errors = self._errors[-4 * self.window:]
        if not isinstance(self.model, LSTMForecaster):
            return
        if self.t + 1 < self.window + 2:
            return
        rolling = float(np.mean(self._errors)) if self._errors else math.inf
        gap_ok = self.last_train is None or self.t - self.last_train >= self.min_retrain_gap
        if (not self.model.trained or rolling > self.retrain_mse) and gap_ok:
            hist = [minmax(c.ar[-self.max_history:])[0] for c in classes if c.ar.max() > 0]
            if hist:
                self.model.train(hist, epochs=self.epochs, lr=self.lr, optimizer=self.optimizer)
                self.last_train = self.t
                self.train_count += 1
                self._errors = []

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "class_id", "actual", "predicted"])
        for t, cid, actual, pred in self.rows:
            w.writerow([t, cid, f"{actual:.6g}", f"{pred:.6g}"])
        return buf.getvalue()

