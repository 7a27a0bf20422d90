"""Partitioning node sets and restructuring graphs along a partition.

The built-in heuristic partitions a hypergraph projection directly.  Two
starts are tried: a peripheral breadth-first order chopped into quota-sized
chunks, and multi-source BFS growth from farthest-point-spread seeds.  Each
is refined at the boundaries by single-vertex moves and pairwise exchanges
until the cut weight is locally minimal, and the better final cut wins.
Labels produced by an external tool can be used instead; both routes meet
in :func:`make_partition`.

Quality follows the usual hypergraph objectives: ``edge_cut`` sums the
weights of hyperedges spanning more than one part, ``connectivity`` counts
each cut hyperedge once per extra part it touches.  The balance bound is
relative: every part's weight must stay within ``(1 + eps_max)`` times the
average part weight, rounded up.  The rounding matters: integer loads
summing to W cannot all sit below W/k unless k divides W.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import BalanceError, PartitionError, StalePartitionError
from .model import Graph, Node
from .topology import Hypergraph, RefMap


@dataclass
class Partition:
    """Assignment of every recursive node of a graph to a part."""

    graph: Graph
    labels: list[int]
    num_parts: int
    node_order: list[Node]
    revision: int

    def parts(self) -> list[list[Node]]:
        out: list[list[Node]] = [[] for _ in range(self.num_parts)]
        for node, label in zip(self.node_order, self.labels):
            out[label].append(node)
        return out

    def label_of(self, node: Node) -> int:
        try:
            return self.labels[self.node_order.index(node)]
        except ValueError:
            raise PartitionError(f"node {node.name!r} is not covered by this partition")


@dataclass
class PartitionMetrics:
    num_parts: int
    edge_cut: int
    connectivity: int
    part_sizes: list[int]
    imbalance: float


def metrics(hypergraph: Hypergraph, labels, num_parts: int | None = None) -> PartitionMetrics:
    """Cut, connectivity and balance statistics of a labeling."""
    labels = list(labels)
    if len(labels) != hypergraph.num_vertices:
        raise PartitionError(
            f"expected {hypergraph.num_vertices} labels, got {len(labels)}")
    k = num_parts if num_parts is not None else (max(labels) + 1 if labels else 0)
    for i, lab in enumerate(labels):
        if not 0 <= lab < k:
            raise PartitionError(f"label {lab} of vertex {i} outside [0, {k})")
    sizes = [0] * k
    for v, lab in enumerate(labels):
        sizes[lab] += hypergraph.vertex_weights[v]
    edge_cut = 0
    connectivity = 0
    for members, w in zip(hypergraph.hyperedges, hypergraph.edge_weights):
        touched = len({labels[v] for v in members})
        if touched > 1:
            edge_cut += w
            connectivity += w * (touched - 1)
    total = sum(hypergraph.vertex_weights)
    if k > 0 and total > 0:
        imbalance = max(sizes) / (total / k) - 1.0
    else:
        imbalance = 0.0
    return PartitionMetrics(num_parts=k, edge_cut=edge_cut, connectivity=connectivity,
                            part_sizes=sizes, imbalance=imbalance)


def _bfs_distances(adj: list[list[int]], sources: list[int], n: int) -> list[float]:
    dist = [float("inf")] * n
    frontier = []
    for s in sources:
        dist[s] = 0.0
        frontier.append(s)
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if dist[v] == float("inf"):
                    dist[v] = d
                    nxt.append(v)
        frontier = nxt
    return dist


def partition_heuristic(hypergraph: Hypergraph, num_parts: int, eps_max: float,
                        seed: int = 0) -> list[int]:
    """Balanced k-way labels minimizing the weighted edge cut.

    Deterministic for a given seed.  Raises a balance error when no labeling
    can satisfy the bound.
    """
    n = hypergraph.num_vertices
    k = int(num_parts)
    if k < 1:
        raise PartitionError(f"number of parts must be at least 1, got {num_parts}")
    if k > n:
        raise PartitionError(f"cannot split {n} vertices into {k} parts")
    if eps_max < 0:
        raise PartitionError(f"imbalance tolerance must be nonnegative, got {eps_max}")
    weights = hypergraph.vertex_weights
    total = sum(weights)
    cap = (1.0 + eps_max) * math.ceil(total / k)
    for v, w in enumerate(weights):
        if w > cap:
            raise BalanceError(
                f"vertex {v} with weight {w} exceeds the part capacity {cap:.6g}")
    if k == 1:
        return [0] * n

    adj: list[list[int]] = [[] for _ in range(n)]
    pair_seen: set[tuple[int, int]] = set()
    for members in hypergraph.hyperedges:
        ms = sorted(set(members))
        for a in range(len(ms)):
            for b in range(a + 1, len(ms)):
                key = (ms[a], ms[b])
                if key not in pair_seen:
                    pair_seen.add(key)
                    adj[ms[a]].append(ms[b])
                    adj[ms[b]].append(ms[a])

    # two independent starts, both refined, best final cut wins: the
    # breadth-first chunking keeps banded structures contiguous while
    # seeded growth suits meshes, and neither dominates the other
    best_labels = None
    best_cut = None
    for labels, loads in (_chunk_init(adj, weights, total, k),
                          _growth_init(adj, weights, total, k, cap, seed)):
        _rebalance(weights, labels, loads, cap, k)
        _refine(hypergraph, labels, loads, cap)
        cut = sum(w for members, w in zip(hypergraph.hyperedges, hypergraph.edge_weights)
                  if len({labels[v] for v in members}) > 1)
        if best_cut is None or cut < best_cut:
            best_labels, best_cut = labels, cut
    return best_labels


def _chunk_init(adj: list[list[int]], weights, total, k: int):
    """Chop a peripheral breadth-first order into k quota-sized chunks."""
    n = len(adj)
    order = _bfs_order(adj, _peripheral_vertex(adj, n), n)
    labels = [-1] * n
    loads = [0] * k
    part = 0
    remaining_w = total
    remaining_parts = k
    quota = math.ceil(remaining_w / remaining_parts)
    for v in order:
        if part < k - 1 and loads[part] > 0 and loads[part] + weights[v] > quota:
            remaining_w -= loads[part]
            remaining_parts -= 1
            quota = math.ceil(remaining_w / remaining_parts)
            part += 1
        labels[v] = part
        loads[part] += weights[v]
    return labels, loads


def _growth_init(adj: list[list[int]], weights, total, k: int, cap: float, seed: int):
    """Multi-source BFS growth from k farthest-point-spread seeds."""
    n = len(adj)
    rng = random.Random(seed)
    seeds = [rng.randrange(n)]
    while len(seeds) < k:
        dist = _bfs_distances(adj, seeds, n)
        best, best_d = -1, -1.0
        for v in range(n):
            if v in seeds:
                continue
            d = dist[v] if dist[v] != float("inf") else float(n + 1)
            if d > best_d:
                best, best_d = v, d
        seeds.append(best)

    labels = [-1] * n
    loads = [0] * k
    for part, s in enumerate(seeds):
        labels[s] = part
        loads[part] = weights[s]
    frontiers: list[list[int]] = [[s] for s in seeds]
    active = True
    while active:
        active = False
        for part in range(k):
            nxt = []
            for u in frontiers[part]:
                for v in adj[u]:
                    if labels[v] == -1 and loads[part] + weights[v] <= cap:
                        labels[v] = part
                        loads[part] += weights[v]
                        nxt.append(v)
            if nxt:
                active = True
            frontiers[part] = nxt
    for v in range(n):
        if labels[v] >= 0:
            continue
        # capacity-blocked or disconnected vertex: prefer a neighboring
        # part with room, then any part with room
        adjacent = sorted({labels[u] for u in adj[v] if labels[u] >= 0},
                          key=lambda p: (loads[p], p))
        rest = sorted((p for p in range(k) if p not in adjacent),
                      key=lambda p: (loads[p], p))
        for part in adjacent + rest:
            if loads[part] + weights[v] <= cap:
                labels[v] = part
                loads[part] += weights[v]
                break
        else:
            # every part is tight; overfill the lightest and repair later
            lightest = min(range(k), key=lambda p: (loads[p], p))
            labels[v] = lightest
            loads[lightest] += weights[v]
    return labels, loads


def _peripheral_vertex(adj: list[list[int]], n: int) -> int:
    dist = _bfs_distances(adj, [0], n)
    best, best_d = 0, 0.0
    for v in range(n):
        d = dist[v]
        if d != float("inf") and d > best_d:
            best, best_d = v, d
    return best


def _bfs_order(adj: list[list[int]], root: int, n: int) -> list[int]:
    """Breadth-first visit order from root, restarting at the smallest
    unvisited vertex for each further component."""
    seen = [False] * n
    out: list[int] = []
    pending = 0
    while len(out) < n:
        while pending < n and seen[pending]:
            pending += 1
        start = root if not out and not seen[root] else pending
        queue = [start]
        seen[start] = True
        while queue:
            nxt: list[int] = []
            for u in queue:
                out.append(u)
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(v)
            queue = nxt
    return out


def _rebalance(weights, labels: list[int], loads: list[int], cap: float, k: int) -> None:
    """Move the lightest vertices out of overfull parts until every load
    fits under the capacity.  Deterministic; raises when stuck."""
    while True:
        over = max(range(k), key=lambda p: (loads[p], -p))
        if loads[over] <= cap:
            return
        cand = sorted((v for v in range(len(labels))
                       if labels[v] == over and weights[v] > 0),
                      key=lambda v: (weights[v], v))
        moved = False
        for v in cand:
            for q in sorted(range(k), key=lambda p: (loads[p], p)):
                if q != over and loads[q] + weights[v] <= cap:
                    labels[v] = q
                    loads[over] -= weights[v]
                    loads[q] += weights[v]
                    moved = True
                    break
            if moved:
                break
        if not moved:
            raise BalanceError(
                f"no balanced assignment within capacity {cap:.6g}")


def _refine(hg: Hypergraph, labels: list[int], loads: list[int], cap: float) -> None:
    """Greedy boundary refinement: apply the best strictly-improving
    single-vertex move, then the best strictly-improving pairwise exchange
    once moves dry up, until the edge cut is locally minimal under both.

    Exchanges matter when every part sits at capacity: single moves are all
    blocked by the balance bound, yet a stranded vertex can still trade
    places with a boundary vertex of the part it belongs in.
    """
    n = hg.num_vertices
    vertex_edges: list[list[int]] = [[] for _ in range(n)]
    edge_counts: list[dict[int, int]] = []
    for j, members in enumerate(hg.hyperedges):
        counts: dict[int, int] = {}
        for v in members:
            vertex_edges[v].append(j)
            counts[labels[v]] = counts.get(labels[v], 0) + 1
        edge_counts.append(counts)

    def gain(v: int, target: int) -> int:
        g = 0
        source = labels[v]
        for j in vertex_edges[v]:
            counts = edge_counts[j]
            w = hg.edge_weights[j]
            cut_before = len(counts) > 1
            parts_after = len(counts) - (counts[source] == 1) + (target not in counts)
            g += w * (int(cut_before) - int(parts_after > 1))
        return g

    def apply_move(v: int, target: int) -> None:
        source = labels[v]
        for j in vertex_edges[v]:
            counts = edge_counts[j]
            counts[source] -= 1
            if counts[source] == 0:
                del counts[source]
            counts[target] = counts.get(target, 0) + 1
        loads[source] -= hg.vertex_weights[v]
        loads[target] += hg.vertex_weights[v]
        labels[v] = target

    def best_single():
        best = None  # (gain, vertex, target)
        for v in range(n):
            source = labels[v]
            targets: set[int] = set()
            for j in vertex_edges[v]:
                targets.update(edge_counts[j])
            targets.discard(source)
            for target in sorted(targets):
                if loads[target] + hg.vertex_weights[v] > cap:
                    continue
                g = gain(v, target)
                if g > 0 and (best is None or g > best[0]):
                    best = (g, v, target)
        return best

    def best_swap():
        best = None  # (gain, u, v, part_u, part_v)
        boundary = [v for v in range(n)
                    if any(len(edge_counts[j]) > 1 for j in vertex_edges[v])]
        for i, u in enumerate(boundary):
            pu, wu = labels[u], hg.vertex_weights[u]
            for v in boundary[i + 1:]:
                pv, wv = labels[v], hg.vertex_weights[v]
                if pv == pu:
                    continue
                if loads[pu] - wu + wv > cap or loads[pv] - wv + wu > cap:
                    continue
                g1 = gain(u, pv)
                apply_move(u, pv)
                g2 = gain(v, pu)
                apply_move(u, pu)
                if g1 + g2 > 0 and (best is None or g1 + g2 > best[0]):
                    best = (g1 + g2, u, v, pu, pv)
        return best

    while True:
        move = best_single()
        if move is not None:
            apply_move(move[1], move[2])
            continue
        swap = best_swap()
        if swap is None:
            return
        _, u, v, pu, pv = swap
        apply_move(u, pv)
        apply_move(v, pu)


def make_partition(graph: Graph, labels, ref_map: RefMap,
                   num_parts: int | None = None) -> Partition:
    """Transport projection labels onto the graph's nodes.

    For bipartite projections the labels of edge vertices are ignored; every
    recursive node must receive exactly one label.
    """
    labels = [int(x) for x in labels]
    if len(labels) != len(ref_map.vertex_elements):
        raise PartitionError(
            f"expected {len(ref_map.vertex_elements)} labels for this projection, "
            f"got {len(labels)}")
    node_label: dict[int, int] = {}
    for element, label in zip(ref_map.vertex_elements, labels):
        if isinstance(element, Node):
            node_label[id(element)] = label
    order = graph.all_nodes()
    out = []
    for node in order:
        if id(node) not in node_label:
            raise PartitionError(f"node {node.name!r} received no partition label")
        out.append(node_label[id(node)])
    if len(node_label) != len(order):
        raise PartitionError("labels cover nodes outside this graph")
    if any(lab < 0 for lab in out):
        raise PartitionError("partition labels must be nonnegative")
    k = num_parts if num_parts is not None else max(out) + 1
    if max(out) >= k:
        raise PartitionError(f"label {max(out)} outside [0, {k})")
    return Partition(graph=graph, labels=out, num_parts=k, node_order=order,
                     revision=graph.revision)


def apply_partition(graph: Graph, partition: Partition) -> Graph:
    """Restructure the graph in place: one subgraph per nonempty part.

    Edges internal to a part move into its subgraph; edges crossing parts
    stay at the top level.  Prior subgraph structure is discarded while node
    and edge objects keep their identity.
    """
    if partition.graph is not graph:
        raise PartitionError("partition was built for a different graph")
    if partition.revision != graph.revision:
        raise StalePartitionError(
            "graph was modified after the partition was created; rebuild it")

    label_of = {id(n): lab for n, lab in zip(partition.node_order, partition.labels)}
    part_nodes: list[list[Node]] = [[] for _ in range(partition.num_parts)]
    for node in partition.node_order:
        part_nodes[label_of[id(node)]].append(node)

    all_edges = graph.all_edges()

    part_graphs: dict[int, Graph] = {}
    for idx, members in enumerate(part_nodes):
        if members:
            part_graphs[idx] = Graph(f"part{idx}")

    for old in graph._subgraphs:
        old._parent = None
    graph._nodes = []
    graph._edges = []
    graph._subgraphs = []
    graph._edge_by_key = {}
    graph._nodes_by_name = {}
    graph._subgraphs_by_name = {}

    for idx in sorted(part_graphs):
        pg = part_graphs[idx]
        for node in part_nodes[idx]:
            name = node.name
            if name in pg._nodes_by_name:
                suffix = 2
                while f"{name}_{suffix}" in pg._nodes_by_name:
                    suffix += 1
                name = f"{name}_{suffix}"
                node.name = name
            node.graph = pg
            pg._nodes.append(node)
            pg._nodes_by_name[name] = node
        pg._parent = graph
        graph._subgraphs.append(pg)
        graph._subgraphs_by_name[pg.name] = pg

    for edge in all_edges:
        parts_touched = {label_of[id(n)] for n in edge.nodes}
        if len(parts_touched) == 1:
            home = part_graphs[parts_touched.pop()]
        else:
            home = graph
        edge.graph = home
        home._edges.append(edge)
        home._edge_by_key[frozenset(edge.nodes)] = edge

    graph._bump()
    return graph


def write_labels(path, labels) -> None:
    """Write one base-10 label per line, line i for recursive node i."""
    with open(path, "w", encoding="ascii") as fh:
        for lab in labels:
            fh.write(f"{int(lab)}\n")


def read_labels(path) -> list[int]:
    """Read a label file as written by :func:`write_labels`."""
    labels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                labels.append(int(text, 10))
            except ValueError:
                raise PartitionError(
                    f"{path}:{lineno}: expected a base-10 label, got {text!r}") from None
    return labels
