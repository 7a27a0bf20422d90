"""Model and solution documents plus DOT export.

The wire format is JSON: human-diffable, schema-versioned, and canonical.
Emission sorts object keys and renders reals with ``repr``, the shortest
representation that round-trips exactly, so emitting the same graph twice
produces byte-identical documents.  Infinities appear as the strings
``"inf"`` and ``"-inf"`` because strict JSON has no literal for them.

Variable references inside link constraints are written ``node.var`` with
the node path relative to the graph that owns the edge, e.g.
``sg1/n3.x``.  Quadratic objective terms are keyed ``a*b`` with the two
variable names in lexicographic order.  None of ``. / *`` may appear in an
element name, so the references parse unambiguously.
"""

from __future__ import annotations

import json
import math
from itertools import combinations
from typing import Any

from .errors import GraphQPError, ParseError, UnresolvedReferenceError
from .ipm import Solution
from .model import Graph, LinExpr, Node, QuadExpr

SCHEMA_VERSION = 1

# Set3 qualitative scheme; cycled by subgraph index when coloring exports.
PALETTE = (
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
)


# ---------------------------------------------------------------------------
# scalar encoding


def _encode_real(value: float):
    if value == math.inf:
        return "inf"
    if value == -math.inf:
        return "-inf"
    return float(value)


def _decode_real(value, where: str) -> float:
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number or 'inf'/'-inf', got {value!r}")
    out = float(value)
    if math.isnan(out):
        raise ParseError(f"{where}: NaN is not a valid value")
    return out


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise ParseError(message)


def _get_str(record: dict, key: str, where: str) -> str:
    value = record.get(key)
    _expect(isinstance(value, str), f"{where}: field {key!r} must be a string")
    return value


def _real_map(record, where: str) -> dict[str, float]:
    _expect(isinstance(record, dict), f"{where}: expected an object")
    return {key: _decode_real(val, f"{where}[{key!r}]") for key, val in record.items()}


# ---------------------------------------------------------------------------
# model emission


def _objective_record(objective: QuadExpr) -> dict:
    rec: dict[str, Any] = {}
    if objective.constant:
        rec["constant"] = _encode_real(objective.constant)
    if objective.linear:
        rec["linear"] = {v.name: _encode_real(c) for v, c in objective.linear.items()}
    if objective.quad:
        quad = {}
        for (a, b), coef in objective.quad.items():
            lo, hi = sorted((a.name, b.name))
            quad[f"{lo}*{hi}"] = _encode_real(coef)
        rec["quadratic"] = quad
    return rec


def _node_record(node: Node) -> dict:
    rec: dict[str, Any] = {"name": node.name}
    if node.variables:
        rec["variables"] = [
            {"name": v.name, "lower": _encode_real(v.lower),
             "upper": _encode_real(v.upper), "start": _encode_real(v.start)}
            for v in node.variables
        ]
    if node.constraints:
        rec["constraints"] = [
            {"terms": {v.name: _encode_real(c) for v, c in con.coeffs.items()},
             "sense": con.sense, "rhs": _encode_real(con.rhs)}
            for con in node.constraints
        ]
    objective = _objective_record(node.objective)
    if objective:
        rec["objective"] = objective
    return rec


def _graph_record(graph: Graph) -> dict:
    rec: dict[str, Any] = {"name": graph.name}
    if graph.nodes:
        rec["nodes"] = [_node_record(n) for n in graph.nodes]
    if graph.subgraphs:
        rec["subgraphs"] = [_graph_record(sg) for sg in graph.subgraphs]
    edges = []
    for edge in graph.edges:
        links = []
        for con in edge.link_constraints:
            link: dict[str, Any] = {
                "terms": {f"{graph.node_path(v.node)}.{v.name}": _encode_real(c)
                          for v, c in con.terms.items()},
                "sense": con.sense,
                "rhs": _encode_real(con.rhs),
            }
            if con.tag:
                link["tag"] = con.tag
            links.append(link)
        edges.append({"links": links})
    if edges:
        rec["edges"] = edges
    return rec


def model_to_json(graph: Graph) -> str:
    """Canonical JSON document for a graph (sorted keys, exact reals)."""
    doc = {"schema_version": SCHEMA_VERSION, "graph": _graph_record(graph)}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_model(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(model_to_json(graph))


# ---------------------------------------------------------------------------
# model parsing


def _resolve_variable(graph: Graph, ref: str):
    parts = ref.split(".")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise UnresolvedReferenceError(
            f"malformed variable reference {ref!r}: expected 'node.var' with an "
            "optional subgraph path such as 'sg0/n1.x'")
    node_path, var_name = parts
    try:
        node = graph.resolve_node(node_path)
        return node.variable(var_name)
    except GraphQPError as exc:
        raise UnresolvedReferenceError(
            f"unresolved reference {ref!r}: {exc}") from None


def _build_objective(node: Node, record: dict, where: str) -> None:
    _expect(isinstance(record, dict), f"{where}: objective must be an object")
    expr = QuadExpr(constant=_decode_real(record.get("constant", 0.0),
                                          f"{where}.constant"))
    for name, coef in _real_map(record.get("linear", {}), f"{where}.linear").items():
        expr = expr + coef * node.variable(name)
    for key, coef in _real_map(record.get("quadratic", {}),
                               f"{where}.quadratic").items():
        names = key.split("*")
        _expect(len(names) == 2, f"{where}: quadratic key {key!r} must be 'a*b'")
        expr = expr + coef * (node.variable(names[0]) * node.variable(names[1]))
    node.set_objective(expr)


def _build_node(graph: Graph, record: dict, where: str) -> None:
    _expect(isinstance(record, dict), f"{where}: node must be an object")
    node = graph.add_node(_get_str(record, "name", where))
    variables = record.get("variables", [])
    _expect(isinstance(variables, list), f"{where}: 'variables' must be a list")
    for i, var in enumerate(variables):
        vwhere = f"{where}.variables[{i}]"
        _expect(isinstance(var, dict), f"{vwhere}: expected an object")
        node.add_variable(_get_str(var, "name", vwhere),
                          lower=_decode_real(var.get("lower", "-inf"), vwhere),
                          upper=_decode_real(var.get("upper", "inf"), vwhere),
                          start=_decode_real(var.get("start", 0.0), vwhere))
    constraints = record.get("constraints", [])
    _expect(isinstance(constraints, list), f"{where}: 'constraints' must be a list")
    for i, con in enumerate(constraints):
        cwhere = f"{where}.constraints[{i}]"
        _expect(isinstance(con, dict), f"{cwhere}: expected an object")
        terms = {node.variable(name): coef
                 for name, coef in _real_map(con.get("terms"), cwhere).items()}
        node.add_constraint(LinExpr(terms), _get_str(con, "sense", cwhere),
                            _decode_real(con.get("rhs", 0.0), f"{cwhere}.rhs"))
    if "objective" in record:
        _build_objective(node, record["objective"], f"{where}.objective")


def _build_graph(record: dict, where: str, top: bool) -> Graph:
    _expect(isinstance(record, dict), f"{where}: graph must be an object")
    name = _get_str(record, "name", where) if "name" in record or not top else ""
    _expect(top or bool(name), f"{where}: subgraphs must be named")
    graph = Graph(name)
    nodes = record.get("nodes", [])
    _expect(isinstance(nodes, list), f"{where}: 'nodes' must be a list")
    for i, node in enumerate(nodes):
        _build_node(graph, node, f"{where}.nodes[{i}]")
    subgraphs = record.get("subgraphs", [])
    _expect(isinstance(subgraphs, list), f"{where}: 'subgraphs' must be a list")
    for i, sub in enumerate(subgraphs):
        graph.add_subgraph(_build_graph(sub, f"{where}.subgraphs[{i}]", top=False))
    edges = record.get("edges", [])
    _expect(isinstance(edges, list), f"{where}: 'edges' must be a list")
    for i, edge in enumerate(edges):
        ewhere = f"{where}.edges[{i}]"
        _expect(isinstance(edge, dict), f"{ewhere}: expected an object")
        links = edge.get("links")
        _expect(isinstance(links, list) and links,
                f"{ewhere}: 'links' must be a non-empty list")
        for j, link in enumerate(links):
            lwhere = f"{ewhere}.links[{j}]"
            _expect(isinstance(link, dict), f"{lwhere}: expected an object")
            terms = {_resolve_variable(graph, ref): coef
                     for ref, coef in _real_map(link.get("terms"), lwhere).items()}
            graph.add_link_constraint(LinExpr(terms),
                                      _get_str(link, "sense", lwhere),
                                      _decode_real(link.get("rhs", 0.0),
                                                   f"{lwhere}.rhs"),
                                      tag=str(link.get("tag", "")))
    return graph


def model_from_json(text: str) -> Graph:
    """Parse a model document; inverse of :func:`model_to_json`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _expect(isinstance(doc, dict), "document root must be an object")
    version = doc.get("schema_version")
    _expect(isinstance(version, int) and not isinstance(version, bool),
            "document must declare an integer 'schema_version'")
    if version > SCHEMA_VERSION:
        raise ParseError(
            f"document schema_version {version} is newer than the supported "
            f"version {SCHEMA_VERSION}; refusing to guess at its meaning")
    _expect(version >= 1, f"schema_version must be at least 1, got {version}")
    try:
        return _build_graph(doc.get("graph"), "graph", top=True)
    except ParseError:
        raise
    except GraphQPError as exc:
        raise ParseError(f"invalid model document: {exc}") from None


def read_model(path) -> Graph:
    with open(path, "r", encoding="utf-8") as handle:
        return model_from_json(handle.read())


# ---------------------------------------------------------------------------
# solution documents


def variable_paths(graph: Graph) -> dict:
    """Root-relative ``path.var`` name of every recursive variable."""
    paths = {}
    for node in graph.all_nodes():
        prefix = graph.node_path(node)
        for var in node.variables:
            paths[var] = f"{prefix}.{var.name}"
    return paths


def solution_to_json(solution: Solution, graph: Graph, method: str = "",
                     paths: dict | None = None) -> str:
    """Canonical JSON record of a solve: objective, status, iteration count
    and per-variable values keyed by root-relative path.  Timing never
    appears, so identical invocations emit identical bytes.

    ``paths`` overrides the variable naming, for callers that restructured
    the graph after reading it and want the original document's keys.
    """
    if paths is None:
        paths = variable_paths(graph)
    variables = {name: _encode_real(solution.primal[var])
                 for var, name in paths.items()}
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "status": solution.status,
        "objective": _encode_real(solution.objective),
        "iterations": solution.iterations,
        "variables": variables,
    }
    if method:
        doc["method"] = method
    info = solution.info
    if info.get("method") == "schwarz":
        r_pr, r_du = info["residual_history"][-1] if info["residual_history"] else (
            math.inf, math.inf)
        doc["solver"] = {
            "overlap": info["overlap"],
            "primal_residual": _encode_real(r_pr),
            "dual_residual": _encode_real(r_du),
            "subproblem_iterations": int(sum(
                sum(row) for row in info["subproblem_iterations"])),
        }
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_solution(solution: Solution, graph: Graph, path, method: str = "",
                   paths: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(solution_to_json(solution, graph, method, paths))


# ---------------------------------------------------------------------------
# DOT export


def _quote(name: str) -> str:
    return f'"{name}"'


def export_dot(graph: Graph, color_by_partition: bool = False,
               aggregated: bool = False) -> str:
    """DOT text of the clique projection of a graph.

    Each hyperedge becomes a clique over its endpoints.  With
    ``color_by_partition`` nodes are filled with a 12-color palette cycled
    by the index of the top-level subgraph that owns them; nodes sitting
    directly on the root stay white.  With ``aggregated`` every top-level
    subgraph collapses to a single vertex and only cross-subgraph coupling
    survives, the condensed view of a partitioned model.
    """
    # top-level container of each node: subgraph index, or -1 for the root
    container: dict[int, int] = {}
    for index, sub in enumerate(graph.subgraphs):
        for node in sub.all_nodes():
            container[id(node)] = index
    for node in graph.nodes:
        container[id(node)] = -1

    def fill(index: int) -> str:
        color = "white" if index < 0 else PALETTE[index % len(PALETTE)]
        return f' [style=filled, fillcolor="{color}"]'

    lines = [f"graph {_quote(graph.name or 'model')} {{"]
    if aggregated:
        vertices = [(index, sub.name) for index, sub in enumerate(graph.subgraphs)]
        vertices += [(-1, node.name) for node in graph.nodes]
        rendered: dict[str, str] = {}
        for index, name in vertices:
            if name not in rendered:
                suffix = fill(index) if color_by_partition else ""
                lines.append(f"  {_quote(name)}{suffix};")
                rendered[name] = name
        seen: set[tuple[str, str]] = set()
        for edge in graph.all_edges():
            keys = []
            for node in edge.nodes:
                idx = container[id(node)]
                keys.append(node.name if idx < 0 else graph.subgraphs[idx].name)
            for a, b in combinations(dict.fromkeys(keys), 2):
                pair = (a, b) if a <= b else (b, a)
                if pair not in seen:
                    seen.add(pair)
                    lines.append(f"  {_quote(pair[0])} -- {_quote(pair[1])};")
    else:
        order: dict[int, int] = {}
        paths: dict[int, str] = {}
        for position, node in enumerate(graph.all_nodes()):
            order[id(node)] = position
            paths[id(node)] = graph.node_path(node)
            suffix = fill(container[id(node)]) if color_by_partition else ""
            lines.append(f"  {_quote(paths[id(node)])}{suffix};")
        seen_pairs: set[tuple[int, int]] = set()
        for edge in graph.all_edges():
            for a, b in combinations(edge.nodes, 2):
                pair = (order[id(a)], order[id(b)])
                if pair[0] > pair[1]:
                    pair = (pair[1], pair[0])
                if pair not in seen_pairs:
                    seen_pairs.add(pair)
                    lines.append(
                        f"  {_quote(paths[id(a)])} -- {_quote(paths[id(b)])};")
    lines.append("}")
    return "\n".join(lines) + "\n"
