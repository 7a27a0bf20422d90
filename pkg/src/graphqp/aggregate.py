"""Collapsing subgraph structure into single nodes.

``aggregate(graph, n_levels)`` returns a new graph that keeps hierarchy down
to ``n_levels`` and replaces every subgraph below that depth with one node
holding all of its variables, constraints and objective terms.  Links that
were internal to a collapsed subgraph become node constraints; links that
cross collapsed boundaries are rewritten over the aggregate nodes and placed
at the shallowest level where all their endpoints exist.

The returned :class:`AggregationMap` is lossless: it maps every original
variable, node and constraint to its aggregate counterpart, so an optimal
solution of the aggregate transports to a feasible point of the original
with identical objective value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ModelError
from .model import (
    Graph,
    LinExpr,
    LinkConstraint,
    Node,
    NodeConstraint,
    QuadExpr,
    Variable,
)


@dataclass
class AggregationMap:
    """Element maps from an original graph onto its aggregate."""

    var_map: dict[Variable, Variable] = field(default_factory=dict)
    node_map: dict[Node, Node] = field(default_factory=dict)
    constraint_map: dict = field(default_factory=dict)

    def transport_primal(self, aggregate_values: dict[Variable, float]) -> dict[Variable, float]:
        """Pull aggregate variable values back onto the original variables."""
        return {v: aggregate_values[w] for v, w in self.var_map.items()}


def _fresh_name(base: str, taken) -> str:
    if base not in taken:
        return base
    suffix = 2
    while f"{base}_{suffix}" in taken:
        suffix += 1
    return f"{base}_{suffix}"


def _rewrite_quad(expr: QuadExpr, var_map: dict[Variable, Variable]) -> QuadExpr:
    out = QuadExpr(constant=expr.constant)
    for v, c in expr.linear.items():
        w = var_map[v]
        out.linear[w] = out.linear.get(w, 0.0) + c
    for (a, b), c in expr.quad.items():
        wa, wb = var_map[a], var_map[b]
        key = (wa, wb) if wa._uid <= wb._uid else (wb, wa)
        out.quad[key] = out.quad.get(key, 0.0) + c
    return out


def _copy_node_into(node: Node, target: Graph, amap: AggregationMap) -> Node:
    new = target.add_node(_fresh_name(node.name, target._nodes_by_name))
    for var in node.variables:
        amap.var_map[var] = new.add_variable(var.name, var.lower, var.upper, var.start)
    amap.node_map[node] = new
    for con in node.constraints:
        coeffs = {amap.var_map[v]: c for v, c in con.coeffs.items()}
        amap.constraint_map[con] = new.add_constraint(LinExpr(coeffs), con.sense, con.rhs)
    new.set_objective(_rewrite_quad(node.objective, amap.var_map))
    return new


def _collapse_subgraph(sub: Graph, target: Graph, amap: AggregationMap) -> Node:
    """Fold a whole subgraph (including nested levels) into one node."""
    agg = target.add_node(_fresh_name(sub.name, target._nodes_by_name))
    objective = QuadExpr()
    for node in sub.all_nodes():
        amap.node_map[node] = agg
        for var in node.variables:
            name = _fresh_name(f"{node.name}+{var.name}", agg._vars_by_name)
            amap.var_map[var] = agg.add_variable(name, var.lower, var.upper, var.start)
        objective = objective + _rewrite_quad(node.objective, amap.var_map)
    for node in sub.all_nodes():
        for con in node.constraints:
            coeffs = {amap.var_map[v]: c for v, c in con.coeffs.items()}
            amap.constraint_map[con] = agg.add_constraint(LinExpr(coeffs), con.sense,
                                                          con.rhs)
    # links fully inside the collapsed subgraph turn into node constraints
    for edge in sub.all_edges():
        for link in edge.link_constraints:
            coeffs = {amap.var_map[v]: c for v, c in link.terms.items()}
            amap.constraint_map[link] = agg.add_constraint(LinExpr(coeffs), link.sense,
                                                           link.rhs)
    agg.set_objective(objective)
    return agg


def _build_level(orig: Graph, depth: int, n_levels: int, amap: AggregationMap,
                 collapsed_edges: set[int]) -> Graph:
    out = Graph(orig.name)
    if depth < n_levels:
        for sub in orig.subgraphs:
            out.add_subgraph(_build_level(sub, depth + 1, n_levels, amap,
                                          collapsed_edges))
    else:
        for sub in orig.subgraphs:
            _collapse_subgraph(sub, out, amap)
            for edge in sub.all_edges():
                collapsed_edges.add(id(edge))
    for node in orig.nodes:
        _copy_node_into(node, out, amap)
    return out


def aggregate(graph: Graph, n_levels: int = 0) -> tuple[Graph, AggregationMap]:
    """Collapse hierarchy below ``n_levels`` into aggregate nodes.

    ``n_levels=0`` flattens every top-level subgraph into a single node; a
    graph without subgraphs comes back as a structurally identical copy.
    """
    if n_levels < 0 or int(n_levels) != n_levels:
        raise ModelError(f"n_levels must be a non-negative integer, got {n_levels!r}")
    amap = AggregationMap()
    collapsed_edges: set[int] = set()
    out = _build_level(graph, 0, int(n_levels), amap, collapsed_edges)

    # Re-add every surviving link at the shallowest level where all of its
    # (possibly aggregated) endpoints exist.
    from .model import _lowest_common_ancestor  # local import to avoid cycle

    for edge in graph.all_edges():
        if id(edge) in collapsed_edges:
            continue
        for link in edge.link_constraints:
            coeffs: dict[Variable, float] = {}
            for v, c in link.terms.items():
                w = amap.var_map[v]
                coeffs[w] = coeffs.get(w, 0.0) + c
            nodes_seen: dict[Node, None] = {}
            for w in coeffs:
                nodes_seen.setdefault(w.node)
            if len(nodes_seen) == 1:
                target_node = next(iter(nodes_seen))
                amap.constraint_map[link] = target_node.add_constraint(
                    LinExpr(coeffs), link.sense, link.rhs)
            else:
                lca = _lowest_common_ancestor(list(nodes_seen))
                new_edge = lca.add_link_constraint(LinExpr(coeffs), link.sense,
                                                   link.rhs, tag=link.tag)
                amap.constraint_map[link] = new_edge.link_constraints[-1]
    return out, amap
