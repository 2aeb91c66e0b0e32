"""Clump-to-node assignment: cost model, dispatching and load fine-tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .heatgraph import Clump
from .model import ActionKind, NodeId, PlacementMap, ReplicaAction


@dataclass(frozen=True)
class CostParams:
    w_r: float = 1.0
    w_m: float = 10.0

    def __post_init__(self):
        if not 0 < self.w_r < self.w_m:
            raise ValueError("need 0 < w_r < w_m")


@dataclass
class ReconfigurationPlan:
    entries: list[tuple[Clump, NodeId]]
    costs: list[float]
    balanced: bool = True
    loads: list[float] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return sum(self.costs)

    def to_text(self, actions: list[ReplicaAction] | None = None) -> str:
        lines = [f"{i},{n},{c:g}" for i, ((_, n), c) in enumerate(zip(self.entries, self.costs))]
        lines += [str(a) for a in actions or ()]
        return "\n".join(lines) + "\n"


CostMatrix = dict  # id(clump) -> list of per-node costs


def remaster_units(v, p: PlacementMap) -> float:
    return 1.0 + math.log2(p.freq(v, p.primary_of(v)) + 1.0)


def placement_cost(n: NodeId, c: Clump, p: PlacementMap, params: CostParams) -> float:
    cnt_r = 0.0
    cnt_m = 0
    for v in c.pids:
        prim = p.primary_of(v)
        if prim == n:
            continue
        if n in p.secondaries_of(v):
            cnt_r += remaster_units(v, p)
        else:
            cnt_m += 1
    return params.w_r * cnt_r + params.w_m * cnt_m


def find_dst_node(c: Clump, p: PlacementMap, m_c: CostMatrix, params: CostParams) -> NodeId:
    row = [placement_cost(n, c, p, params) for n in p.nodes]
    m_c[id(c)] = row
    return min(p.nodes, key=lambda n: (row[n], n))


def _oi_nodes(b, avg, theta):
    over = sorted((i for i, x in enumerate(b) if x > theta), key=lambda i: (-b[i], i))
    idle = [i for i, x in enumerate(b) if x < avg]
    return over, idle


def rearrange(clumps: list[Clump], p: PlacementMap, params: CostParams = CostParams(),
              epsilon: float = 0.1, step_limit: int = 5) -> ReconfigurationPlan:
    if epsilon < 0 or step_limit < 1:
        raise ValueError("bad epsilon/step_limit")
    n_nodes = p.n_nodes
    m_c: CostMatrix = {}
    dest: list[NodeId] = []
    b = [0.0] * n_nodes
    queues: list[list[int]] = [[] for _ in range(n_nodes)]

    # phase 1: dispatch every clump to its cheapest node
    for i, c in enumerate(clumps):
        n = find_dst_node(c, p, m_c, params)
        dest.append(n)
        queues[n].append(i)
        b[n] += c.weight
    for q in queues:
        q.sort(key=lambda i: (clumps[i].weight, i))

    avg = sum(c.weight for c in clumps) / n_nodes
    theta = avg * (1.0 + epsilon)

    def check_balance():
        return max(b) <= theta

    def pick_clump(over, idle):
        for o in over:
            gap = b[o] - theta
            for i in queues[o]:
                if clumps[i].weight <= gap:
                    row = m_c[id(clumps[i])]
                    target = min(idle, key=lambda n: (row[n], n))
                    return i, o, target
        return None

    # phase 2: move clumps off overloaded nodes
    done = False
    budget = 4 * n_nodes * max(len(clumps), 1)  # guards against ping-ponging a clump
    while not check_balance() and not done and budget > 0:
        step = step_limit
        over, idle = _oi_nodes(b, avg, theta)
        if not over or not idle:
            break
        while not check_balance() and step > 0:
            found = pick_clump(over, idle)
            if found is None:
                break
            i, o, target = found
            queues[o].remove(i)
            queues[target].append(i)
            queues[target].sort(key=lambda j: (clumps[j].weight, j))
            b[o] -= clumps[i].weight
            b[target] += clumps[i].weight
            dest[i] = target
            budget -= 1
            over, idle = _oi_nodes(b, avg, theta)
            step = 0 if not over or not idle else step - 1
        if step == step_limit:
            done = True

    entries = []
    costs = []
    for i, c in enumerate(clumps):
        c.dest = dest[i]
        entries.append((c, dest[i]))
        costs.append(m_c[id(c)][dest[i]])
    return ReconfigurationPlan(entries, costs, balanced=check_balance(), loads=b)


def plan_to_actions(rp: ReconfigurationPlan, p: PlacementMap) -> list[ReplicaAction]:
    """Expand a plan into replica actions against placement ``p``.

    When an added replica would exceed ``replica_max``, the coldest secondary
    (lowest access frequency, then lowest node id) is removed first so the
    add never has to wait for the cap.
    """
    actions = []
    for c, n in rp.entries:
        for v in c.sorted_pids():
            if p.primary_of(v) == n:
                continue
            if n in p.secondaries_of(v):
                actions.append(ReplicaAction(ActionKind.REMASTER, v, n))
                continue
            if p.live_count(v) + 1 > p.replica_max:
                secs = p.secondaries_of(v)
                if secs:
                    cold = min(secs, key=lambda x: (p.freq(v, x), x))
                    actions.append(ReplicaAction(ActionKind.REMOVE_REPLICA, v, cold))
            actions.append(ReplicaAction(ActionKind.ADD_REPLICA, v, n))
            actions.append(ReplicaAction(ActionKind.REMASTER, v, n))
    return actions
