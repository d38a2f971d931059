"""Flow solvers for the worker-to-requester assignment family.

Two representations are provided:

* :class:`FlowNetwork` is the explicit four-layer network
  ``source -> worker -> slot(group, requester) -> requester -> sink``.
  It is solved with index-ordered Ford-Fulkerson (max cardinality) and with
  successive shortest paths over exact integer costs (weighted objectives).
* :class:`GroupNetwork` collapses the worker layer. Workers of one group are
  interchangeable in every constraint, so the feasible worker sets form a
  matroid whose rank depends only on per-group counts. Greedy selection over
  this network gives the same optimal sets and is what the mechanisms call.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .model import Assignment, Worker


class InfeasibleCardinality(ValueError):
    pass


@dataclass
class FlowResult:
    flow_value: int
    assignment: Assignment
    objective: object = 0


class FlowNetwork:
    """Residual graph with paired arcs (arc ``e`` and its reverse ``e ^ 1``)."""

    def __init__(self, n_nodes: int, source: int, sink: int, labels: Optional[List[str]] = None):
        self.n_nodes = n_nodes
        self.source = source
        self.sink = sink
        self.labels = labels or [str(v) for v in range(n_nodes)]
        self.adj: List[List[int]] = [[] for _ in range(n_nodes)]
        self.head: List[int] = []
        self.cap: List[int] = []
        self.orig: List[int] = []
        self.cost: List[object] = []
        self.tag: List[Optional[int]] = []
        self.worker_node: Dict[int, int] = {}
        self.slot_node: Dict[Tuple[int, int], int] = {}
        self.requester_node: Dict[int, int] = {}

    def add_arc(self, u: int, v: int, cap: int, cost=0, tag: Optional[int] = None) -> int:
        if cap < 0:
            raise ValueError("capacity must be non-negative")
        e = len(self.head)
        for a, b, c, k in ((u, v, cap, cost), (v, u, 0, -cost)):
            self.adj[a].append(len(self.head))
            self.head.append(b)
            self.cap.append(c)
            self.orig.append(c)
            self.cost.append(k)
            self.tag.append(tag)
        return e

    def set_cost(self, e: int, cost) -> None:
        self.cost[e] = cost
        self.cost[e ^ 1] = -cost

    def flow_on(self, e: int) -> int:
        return self.orig[e] - self.cap[e]

    def arcs(self):
        for e in range(0, len(self.head), 2):
            yield self.head[e ^ 1], self.head[e], self.orig[e], self.cost[e], self.tag[e]

    def sorted_adjacency(self) -> List[List[int]]:
        return [sorted(a, key=lambda e: (self.head[e], e)) for a in self.adj]

    def decode_assignment(self) -> Assignment:
        """Read x_ij off saturated worker -> slot arcs."""
        slot_req = {node: j for (_, j), node in self.slot_node.items()}
        pairs = []
        for wid, node in self.worker_node.items():
            for e in self.adj[node]:
                if e % 2 == 0 and self.head[e] in slot_req and self.flow_on(e) > 0:
                    pairs.append((wid, slot_req[self.head[e]]))
        return Assignment.from_pairs(pairs)

    def to_dot(self) -> str:
        lines = ["digraph assignment {", "  rankdir=LR;"]
        for v in range(self.n_nodes):
            lines.append(f'  n{v} [label="{self.labels[v]}"];')
        for u, v, cap, cost, tag in self.arcs():
            extra = f" cost={cost}" if cost else ""
            lines.append(f'  n{u} -> n{v} [label="cap={cap}{extra}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_assignment_network(
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    requester_caps: Mapping[int, int],
    worker_costs: Optional[Sequence[object]] = None,
) -> FlowNetwork:
    """Four-layer network whose max flow is the unweighted assignment optimum.

    Worker nodes are numbered in the order given, so callers control the
    index order used by the augmenting-path search.
    """
    n, m, n_groups = len(workers), len(requester_ids), len(tau)
    source = 0
    first_slot = 1 + n
    first_req = first_slot + n_groups * m
    sink = first_req + m
    labels = ["source"] + [f"s{w.id}" for w in workers]
    labels += [f"G{l + 1}/a{requester_ids[j]}" for l in range(n_groups) for j in range(m)]
    labels += [f"a{j}" for j in requester_ids] + ["sink"]
    net = FlowNetwork(sink + 1, source, sink, labels)

    for k, w in enumerate(workers):
        node = 1 + k
        net.worker_node[w.id] = node
        net.add_arc(source, node, 1, 0 if worker_costs is None else worker_costs[k], tag=w.id)
    for l in range(n_groups):
        for j in range(m):
            net.slot_node[(l + 1, requester_ids[j])] = first_slot + l * m + j
    for k, w in enumerate(workers):
        for j in range(m):
            net.add_arc(1 + k, net.slot_node[(w.group, requester_ids[j])], 1)
    for l in range(n_groups):
        for j in range(m):
            net.add_arc(net.slot_node[(l + 1, requester_ids[j])], first_req + j, int(tau[l][j]))
    for j, rid in enumerate(requester_ids):
        net.requester_node[rid] = first_req + j
        net.add_arc(first_req + j, sink, int(requester_caps.get(rid, 0)))
    return net


def max_cardinality(net: FlowNetwork) -> FlowResult:
    """Ford-Fulkerson where the DFS always expands the lowest-index node first."""
    adj = net.sorted_adjacency()
    value = 0
    while True:
        path = _dfs_path(net, adj)
        if path is None:
            break
        push = min(net.cap[e] for e in path)
        for e in path:
            net.cap[e] -= push
            net.cap[e ^ 1] += push
        value += push
    return FlowResult(value, net.decode_assignment(), value)


def _dfs_path(net: FlowNetwork, adj: List[List[int]]) -> Optional[List[int]]:
    visited = [False] * net.n_nodes
    visited[net.source] = True
    stack = [(net.source, iter(adj[net.source]))]
    path: List[int] = []
    while stack:
        node, it = stack[-1]
        advanced = False
        for e in it:
            v = net.head[e]
            if net.cap[e] > 0 and not visited[v]:
                visited[v] = True
                path.append(e)
                if v == net.sink:
                    return path
                stack.append((v, iter(adj[v])))
                advanced = True
                break
        if not advanced:
            stack.pop()
            if path:
                path.pop()
    return None


def min_cost_flow(net: FlowNetwork, limit: Optional[int] = None, stop_at_nonnegative: bool = False):
    """Successive shortest paths with Bellman-Ford (queue based) over exact costs.

    Returns ``(flow_value, total_cost)``. With ``stop_at_nonnegative`` the
    search halts once the cheapest augmentation no longer lowers the cost,
    which is the max-gain augmentation rule for weighted matching.
    """
    value, total = 0, 0
    n = net.n_nodes
    while limit is None or value < limit:
        dist: List[object] = [None] * n
        prev = [-1] * n
        in_queue = [False] * n
        dist[net.source] = 0
        queue = deque([net.source])
        while queue:
            u = queue.popleft()
            in_queue[u] = False
            du = dist[u]
            for e in net.adj[u]:
                if net.cap[e] <= 0:
                    continue
                v = net.head[e]
                nd = du + net.cost[e]
                if dist[v] is None or nd < dist[v]:
                    dist[v] = nd
                    prev[v] = e
                    if not in_queue[v]:
                        in_queue[v] = True
                        queue.append(v)
        if dist[net.sink] is None:
            break
        if stop_at_nonnegative and dist[net.sink] >= 0:
            break
        path = []
        v = net.sink
        while v != net.source:
            e = prev[v]
            path.append(e)
            v = net.head[e ^ 1]
        push = min(net.cap[e] for e in path)
        if limit is not None:
            push = min(push, limit - value)
        for e in path:
            net.cap[e] -= push
            net.cap[e ^ 1] += push
        value += push
        total += push * dist[net.sink]
    return value, total


class GroupNetwork:
    """``source -> group -> requester -> sink`` with incremental unit augmentation.

    Group indices are 1-based, requester positions 0-based.
    """

    def __init__(self, tau: Sequence[Sequence[int]], caps: Sequence[int]):
        self.n_groups = len(tau)
        self.m = len(caps)
        self.tau = [list(map(int, row)) for row in tau]
        self.caps = [int(c) for c in caps]
        self.flow = [[0] * self.m for _ in range(self.n_groups)]
        self.load = [0] * self.m
        self.value = 0

    def _path(self, group: int) -> Optional[List[Tuple[int, int, int]]]:
        # BFS over groups and requesters; arcs recorded as (l, j, +1 forward / -1 backward).
        start = group - 1
        seen_g = [False] * self.n_groups
        seen_r = [False] * self.m
        parent_r: List[Optional[Tuple[int, int]]] = [None] * self.m
        parent_g: List[Optional[int]] = [None] * self.n_groups
        seen_g[start] = True
        queue = deque([start])
        tau, flow, load, caps = self.tau, self.flow, self.load, self.caps
        while queue:
            l = queue.popleft()
            row_t, row_f = tau[l], flow[l]
            for j in range(self.m):
                if seen_r[j] or row_f[j] >= row_t[j]:
                    continue
                seen_r[j] = True
                parent_r[j] = (l,)
                if load[j] < caps[j]:
                    return self._trace(j, parent_r, parent_g, start)
                for l2 in range(self.n_groups):
                    if not seen_g[l2] and flow[l2][j] > 0:
                        seen_g[l2] = True
                        parent_g[l2] = j
                        queue.append(l2)
        return None

    @staticmethod
    def _trace(j, parent_r, parent_g, start):
        steps = []
        while True:
            (l,) = parent_r[j]
            steps.append((l, j, 1))
            if l == start:
                break
            j_prev = parent_g[l]
            steps.append((l, j_prev, -1))
            j = j_prev
        steps.reverse()
        return steps

    def can_add(self, group: int) -> bool:
        return self._path(group) is not None

    def add(self, group: int) -> bool:
        """Route one more unit from ``group``; returns False (and changes nothing) if blocked."""
        path = self._path(group)
        if path is None:
            return False
        last_j = None
        for l, j, sign in path:
            self.flow[l][j] += sign
            last_j = j
        self.load[last_j] += 1
        self.value += 1
        return True

    def copy(self) -> "GroupNetwork":
        other = GroupNetwork.__new__(GroupNetwork)
        other.n_groups, other.m = self.n_groups, self.m
        other.tau, other.caps = self.tau, self.caps
        other.flow = [row[:] for row in self.flow]
        other.load = self.load[:]
        other.value = self.value
        return other

    def assignment(self, selected: Sequence[Worker], requester_ids: Sequence[int]) -> Assignment:
        """Spread the selected workers of each group over requesters per the group flows.

        Workers are taken in the given order and requesters in ascending position.
        """
        remaining = [row[:] for row in self.flow]
        pairs = []
        for w in selected:
            row = remaining[w.group - 1]
            for j in range(self.m):
                if row[j] > 0:
                    row[j] -= 1
                    pairs.append((w.id, requester_ids[j]))
                    break
            else:
                raise AssertionError(f"no flow left for worker {w.id}")
        return Assignment.from_pairs(pairs)


def group_max_flow(counts: Mapping[int, int], tau: Sequence[Sequence[int]], caps: Sequence[int]) -> int:
    """Max flow when ``counts[g]`` workers of group ``g`` are available."""
    net = GroupNetwork(tau, caps)
    for g in sorted(counts):
        for _ in range(counts[g]):
            if not net.add(g):
                break
    return net.value


def greedy_select(
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    caps: Sequence[int],
    limit: Optional[int] = None,
) -> Tuple[List[Worker], GroupNetwork]:
    """Matroid greedy: keep each worker, in the given order, if it stays feasible."""
    net = GroupNetwork(tau, caps)
    chosen: List[Worker] = []
    for w in workers:
        if limit is not None and len(chosen) >= limit:
            break
        if net.add(w.group):
            chosen.append(w)
    return chosen, net


def _unbounded_caps(n_workers: int, m: int) -> List[int]:
    return [n_workers] * m


def max_reputation(
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    method: str = "greedy",
) -> FlowResult:
    """Maximum total reputation over feasible assignments (no per-requester cap).

    Ties resolve towards the lowest worker ids. ``method`` selects the route:
    ``greedy`` (matroid greedy on the group network), ``augment`` (max-gain
    augmentation, stops at the first non-improving path) or ``mcmf``
    (min-cost max-flow with cost -v). All three return the same worker set.
    """
    m = len(requester_ids)
    caps = _unbounded_caps(len(workers), m)
    if method == "greedy":
        order = sorted(workers, key=lambda w: (-w.reputation, w.id))
        chosen, net = greedy_select(order, requester_ids, tau, caps)
        chosen.sort(key=lambda w: w.id)
        assignment = net.assignment(chosen, requester_ids)
    elif method in ("augment", "mcmf"):
        by_id = sorted(workers, key=lambda w: w.id)
        n = len(by_id)
        scale = lcm(*(w.reputation.denominator for w in by_id)) if by_id else 1
        # reputation dominates; 2^rank breaks ties towards low ids and makes the optimum unique
        costs = [-(int(w.reputation * scale) << (n + 1)) + (1 << rank) for rank, w in enumerate(by_id)]
        net = build_assignment_network(by_id, requester_ids, tau, dict(zip(requester_ids, caps)), costs)
        min_cost_flow(net, stop_at_nonnegative=(method == "augment"))
        assignment = net.decode_assignment()
    else:
        raise ValueError(f"unknown method {method!r}")
    rep = {w.id: w.reputation for w in workers}
    objective = sum((rep[i] for i in assignment.workers), Fraction(0))
    return FlowResult(len(assignment), assignment, objective)


def max_cardinality_of(
    workers: Sequence[Worker],
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    caps: Sequence[int],
    method: str = "group",
) -> FlowResult:
    """Convenience wrapper: max cardinality via the explicit (``mfai``) or group network."""
    if method == "mfai":
        by_id = sorted(workers, key=lambda w: w.id)
        net = build_assignment_network(by_id, requester_ids, tau, dict(zip(requester_ids, caps)))
        return max_cardinality(net)
    if method != "group":
        raise ValueError(f"unknown method {method!r}")
    chosen, net = greedy_select(sorted(workers, key=lambda w: w.id), requester_ids, tau, caps)
    return FlowResult(net.value, net.assignment(chosen, requester_ids), net.value)


def min_weight_at_cardinality(
    workers: Sequence[Worker],
    k: int,
    requester_ids: Sequence[int],
    tau: Sequence[Sequence[int]],
    caps: Sequence[int],
    method: str = "greedy",
) -> FlowResult:
    """Exactly ``k`` workers minimising sum 2^position (positions 1-based, in the given order).

    Weights are exact integers, so the optimum is unique. ``greedy`` scans
    positions upward keeping every worker that stays feasible; ``ssp`` runs
    successive shortest paths with the 2^i costs on the explicit network.
    """
    if k < 0:
        raise InfeasibleCardinality("cardinality must be non-negative")
    if method == "greedy":
        chosen, net = greedy_select(workers, requester_ids, tau, caps, limit=k)
        if len(chosen) < k:
            raise InfeasibleCardinality(f"only {len(chosen)} workers can be assigned, asked for {k}")
        assignment = net.assignment(chosen, requester_ids)
    elif method == "ssp":
        costs = [1 << (pos + 1) for pos in range(len(workers))]
        net = build_assignment_network(workers, requester_ids, tau, dict(zip(requester_ids, caps)), costs)
        value, _ = min_cost_flow(net, limit=k)
        if value < k:
            raise InfeasibleCardinality(f"only {value} workers can be assigned, asked for {k}")
        assignment = net.decode_assignment()
    else:
        raise ValueError(f"unknown method {method!r}")
    position = {w.id: p for p, w in enumerate(workers, start=1)}
    weight = sum(1 << position[i] for i in assignment.workers)
    return FlowResult(len(assignment), assignment, weight)
