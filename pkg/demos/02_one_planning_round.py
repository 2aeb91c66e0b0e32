"""
One planning round, step by step
================================

Co-access heat becomes a graph, the graph becomes clumps, clumps get a
home node, and the plan turns into replica actions the cluster carries out.
"""

from lion.heatgraph import build_graph, generate_clumps
from lion.model import PlacementMap, TxnMeta
from lion.planner import CostParams, plan_to_actions, rearrange
from lion.sim import Cluster, Simulator

p = PlacementMap.from_text("0,0,1\n1,2,0\n2,1,0\n3,2,0\n4,0,1\n", n_nodes=3)


def pair(i, u, v):
    return TxnMeta(i, ((u, 0, "R"), (v, 0, "W")))


batch = [pair(1, 0, 1), pair(2, 0, 1), TxnMeta(3, ((2, 0, "R"),)),
         TxnMeta(4, ((3, 1, "W"),)), TxnMeta(5, ((3, 2, "W"),)),
         TxnMeta(6, ((4, 0, "R"),)), TxnMeta(7, ((4, 3, "R"),))]

g = build_graph(batch, p)
print("heat graph edges (u v weight kind):")
print(g.dump(), end="")

clumps = generate_clumps(g, alpha=5)
for c in clumps:
    print("clump", c.sorted_pids(), "weight", c.weight)

plan = rearrange(clumps, p, CostParams(w_r=1, w_m=10))
print("\n" + plan.to_text(), end="")

actions = plan_to_actions(plan, p)
print("\nactions:")
for a in actions:
    print(" ", a)

# Hand the actions to the simulated cluster and let the remasters finish.
sim = Simulator()
cluster = Cluster(sim, p)
cluster.apply_plan(actions, lambda: print(f"\nplan applied at t={sim.now:.0f} us"))
sim.run_until(100_000)
print("primaries now:", {v: p.primary_of(v) for v in p.partitions})
