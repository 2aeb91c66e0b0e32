"""
Turning a distributed transaction into a local one
===================================================

Two nodes, three partitions. The transaction writes P0 (primary on node 0)
and reads P1, whose primary sits on node 1 but which also has a secondary
copy on node 0. Promoting that copy is cheaper than running two-phase commit.
"""

from lion.engine import Engine
from lion.model import PlacementMap, TxnMeta
from lion.sim import Cluster, Simulator

# one line per partition: id, primary node, secondary nodes
LAYOUT = "0,0,1\n1,1,0\n2,1,0\n"


def run_once(remaster):
    sim = Simulator()
    cluster = Cluster(sim, PlacementMap.from_text(LAYOUT, n_nodes=2))
    engine = Engine(cluster, remaster=remaster)
    engine.submit(TxnMeta(1, ((0, 7, "W"), (1, 3, "R"))))
    engine.submit(TxnMeta(2, ((2, 5, "W"),)))
    sim.run_until(50_000)
    return cluster, engine.outcomes


for remaster in (False, True):
    cluster, outcomes = run_once(remaster)
    print("remastering", "on" if remaster else "off")
    for o in outcomes:
        print(f"  txn {o.txn_id}: {o.path.value:15s} node {o.node}  "
              f"wire delays {o.wire_delays:2d}  prepare {o.prep_us:5.0f} us  "
              f"remaster wait {o.remaster_wait_us:5.0f} us")
    print("  primary of P1 afterwards: node", cluster.placement.primary_of(1))

# With remastering the first transaction waits one remaster delay and then
# commits without a prepare phase; the second never leaves node 1.
