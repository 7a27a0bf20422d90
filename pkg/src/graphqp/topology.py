"""Projections of a graph onto plain (hyper)graph structure, plus the
topology queries built on them: incident edges, neighborhoods, expansion.

All projections come with a :class:`RefMap` that ties projected vertex
indices back to the graph elements, so partition labels computed on a
projection can be transported onto the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import scipy.sparse as sp

from .errors import ModelError, ScopeError
from .model import Edge, Graph, Node


@dataclass
class RefMap:
    """Back-mapping from projected vertices to graph elements.

    ``vertex_elements[i]`` is the Node (or, for the bipartite projection past
    ``bipartite_split``, the Edge) behind projected vertex ``i``.
    ``edge_elements[j]`` is the source Edge of hyperedge ``j`` when the
    projection keeps hyperedges.
    """

    vertex_elements: list
    edge_elements: list = field(default_factory=list)
    bipartite_split: int | None = None

    def __post_init__(self):
        self.vertex_of = {id(el): i for i, el in enumerate(self.vertex_elements)}

    def vertex_index(self, element) -> int:
        try:
            return self.vertex_of[id(element)]
        except KeyError:
            raise ScopeError("element is not part of this projection") from None


@dataclass
class Hypergraph:
    """Plain hypergraph: vertices, hyperedges as vertex-index tuples, weights."""

    num_vertices: int
    hyperedges: list[tuple[int, ...]]
    vertex_weights: list[int]
    edge_weights: list[int]

    def __post_init__(self):
        for e, members in enumerate(self.hyperedges):
            if len(set(members)) < 2:
                raise ModelError(f"hyperedge {e} must span at least two vertices")
            for v in members:
                if not 0 <= v < self.num_vertices:
                    raise ModelError(f"hyperedge {e} references vertex {v} out of range")

    @property
    def num_edges(self) -> int:
        return len(self.hyperedges)

    @property
    def incidence(self) -> sp.csr_matrix:
        """0/1 incidence matrix, shape (num_vertices, num_edges)."""
        rows, cols = [], []
        for j, members in enumerate(self.hyperedges):
            for v in members:
                rows.append(v)
                cols.append(j)
        data = [1] * len(rows)
        return sp.csr_matrix((data, (rows, cols)),
                             shape=(self.num_vertices, self.num_edges), dtype=int)


@dataclass
class SimpleGraph:
    """Weighted undirected graph: edges as (u, v, weight) with u < v."""

    num_vertices: int
    edges: list[tuple[int, int, int]]
    vertex_weights: list[int]

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


def to_hypergraph(graph: Graph) -> tuple[Hypergraph, RefMap]:
    """Project the graph onto its hypergraph: one vertex per recursive node,
    one hyperedge per recursive edge.

    Vertex weights default to variable counts, edge weights to link counts,
    the inputs a balance-aware partitioner needs.
    """
    nodes = graph.all_nodes()
    index = {id(n): i for i, n in enumerate(nodes)}
    edges = graph.all_edges()
    hyperedges = [tuple(sorted(index[id(n)] for n in e.nodes)) for e in edges]
    hg = Hypergraph(num_vertices=len(nodes), hyperedges=hyperedges,
                    vertex_weights=[n.num_variables for n in nodes],
                    edge_weights=[e.num_link_constraints for e in edges])
    return hg, RefMap(vertex_elements=list(nodes), edge_elements=list(edges))


def to_clique_graph(graph: Graph) -> tuple[SimpleGraph, RefMap]:
    """Clique expansion: each hyperedge becomes a clique on its vertices.

    Parallel pair edges from different hyperedges merge with summed weights.
    """
    nodes = graph.all_nodes()
    index = {id(n): i for i, n in enumerate(nodes)}
    weights: dict[tuple[int, int], int] = {}
    for e in graph.all_edges():
        members = sorted(index[id(n)] for n in e.nodes)
        w = e.num_link_constraints
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                key = (members[a], members[b])
                weights[key] = weights.get(key, 0) + w
    edges = [(u, v, w) for (u, v), w in sorted(weights.items())]
    sg = SimpleGraph(num_vertices=len(nodes), edges=edges,
                     vertex_weights=[n.num_variables for n in nodes])
    return sg, RefMap(vertex_elements=list(nodes))


def to_bipartite_graph(graph: Graph) -> tuple[SimpleGraph, RefMap]:
    """Bipartite expansion: node vertices on one side, edge vertices on the
    other, connected where the node belongs to the edge."""
    nodes = graph.all_nodes()
    edges = graph.all_edges()
    index = {id(n): i for i, n in enumerate(nodes)}
    split = len(nodes)
    pair_edges = []
    for j, e in enumerate(edges):
        for v in sorted(index[id(n)] for n in e.nodes):
            pair_edges.append((v, split + j, 1))
    pair_edges.sort()
    sg = SimpleGraph(num_vertices=split + len(edges), edges=pair_edges,
                     vertex_weights=[n.num_variables for n in nodes]
                     + [e.num_link_constraints for e in edges])
    return sg, RefMap(vertex_elements=list(nodes) + list(edges), bipartite_split=split)


def _node_set(graph: Graph, nodes) -> set[int]:
    ids = set()
    for n in nodes:
        if not isinstance(n, Node) or not graph.contains_node(n):
            name = getattr(n, "name", n)
            raise ScopeError(f"node {name!r} is not part of this graph")
        ids.add(id(n))
    return ids


def incident_edges(graph: Graph, nodes) -> list[Edge]:
    """Edges that touch the node set but are not fully inside it.

    Edges entirely within the set are interior, not incident; the returned
    list follows the graph's recursive edge order.
    """
    ids = _node_set(graph, nodes)
    out = []
    for e in graph.all_edges():
        inside = sum(1 for n in e.nodes if id(n) in ids)
        if 0 < inside < len(e.nodes):
            out.append(e)
    return out


def neighborhood(graph: Graph, nodes, distance: int) -> list[Node]:
    """Nodes within ``distance`` hops of the set, measured in the clique
    expansion (every pair inside one hyperedge is one hop apart).

    Distance 0 returns the input set.  The result is listed in the graph's
    recursive node order.
    """
    if distance < 0 or int(distance) != distance:
        raise ModelError(f"distance must be a non-negative integer, got {distance!r}")
    ids = _node_set(graph, nodes)
    node_edges: dict[int, list[Edge]] = {}
    for e in graph.all_edges():
        for n in e.nodes:
            node_edges.setdefault(id(n), []).append(e)
    all_nodes = graph.all_nodes()
    frontier = [n for n in all_nodes if id(n) in ids]
    reached = set(ids)
    for _ in range(int(distance)):
        next_frontier = []
        for n in frontier:
            for e in node_edges.get(id(n), ()):
                for m in e.nodes:
                    if id(m) not in reached:
                        reached.add(id(m))
                        next_frontier.append(m)
        if not next_frontier:
            break
        frontier = next_frontier
    return [n for n in all_nodes if id(n) in reached]


@dataclass
class SubgraphView:
    """Lightweight view of a node subset and the edges it fully contains.

    No model data is copied; the view shares nodes and edges with the parent
    graph.  ``base`` records the subgraph the view was expanded from.
    """

    graph: Graph
    nodes: list[Node]
    edges: list[Edge]
    base: Graph | None = None

    def __post_init__(self):
        self._node_ids = {id(n) for n in self.nodes}

    def contains_node(self, node: Node) -> bool:
        return id(node) in self._node_ids

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


def expand(graph: Graph, subgraph, distance: int) -> SubgraphView:
    """Grow a subgraph by ``distance`` hops into its surroundings.

    ``subgraph`` may be a subgraph of ``graph``, an existing view, or a plain
    node collection.  The view's edge set contains every edge fully supported
    by the expanded node set.
    """
    if isinstance(subgraph, Graph):
        base: Graph | None = subgraph
        seed_nodes = subgraph.all_nodes()
    elif isinstance(subgraph, SubgraphView):
        base = subgraph.base
        seed_nodes = subgraph.nodes
    else:
        base = None
        seed_nodes = list(subgraph)
    nodes = neighborhood(graph, seed_nodes, distance)
    ids = {id(n) for n in nodes}
    edges = [e for e in graph.all_edges() if all(id(n) in ids for n in e.nodes)]
    return SubgraphView(graph=graph, nodes=nodes, edges=edges, base=base)
