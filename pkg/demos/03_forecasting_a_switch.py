"""
Seeing a workload switch coming
================================

Two groups of transaction templates take turns every ten sampling
intervals. The predictor groups templates whose arrival curves move
together, learns the rhythm, and raises its variation signal one sample
before each switch. When it fires, it hands back templates from the class
about to take over.
"""

import numpy as np

from lion.model import TxnMeta
from lion.predictor import WorkloadPredictor, template_label

FIRST = [(0, 1), (2,), (3,), (4,)]
SECOND = [(2, 3), (4, 5)]

pred = WorkloadPredictor(horizon=1, seed=0)
tid = 0
for t in range(80):
    active = FIRST if (t // 10) % 2 == 0 else SECOND
    for tpl in active:
        for _ in range(10):
            tid += 1
            pred.observe(TxnMeta(tid, tuple((v, 0, "W") for v in tpl)))
    trig = pred.close_interval(K=10)
    if trig is not None and t >= 40:
        names = ", ".join(f"{template_label(x)} x{w}" for x, w in trig.templates)
        print(f"t={t}: variation {trig.wv:.1f} > {trig.gamma:.1f}; expect {names}")

print("\nclasses:", [[template_label(m) for m in c.members] for c in pred.classes])
print("trainings:", pred.train_count)
wv = np.array(pred.wv_history)
print("variation, last 20 samples:", np.round(wv[-20:], 1))
