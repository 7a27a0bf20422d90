"""Core modeling layer: hierarchical graphs of coupled quadratic subproblems.

A :class:`Graph` holds nodes, each node owning variables, linear constraints
and a convex quadratic objective.  Linking constraints couple variables of two
or more nodes and are stored on hyperedges keyed by the set of nodes they
touch.  Graphs nest: a subgraph is itself a full graph, and recursive queries
walk the whole hierarchy.

The graph objective is the unweighted sum of the node objectives.  Linking
constraints must be added to the lowest common ancestor graph of the nodes
they reference, which keeps every edge owned by exactly one graph.
"""

from __future__ import annotations

import itertools
import math
import re
from typing import Iterable, Iterator, Literal

from .errors import (
    BoundError,
    EdgeArityError,
    HierarchyError,
    IntegrityError,
    ModelError,
    ScopeError,
)

Sense = Literal["<=", "==", ">="]
SENSES: tuple[str, ...] = ("<=", "==", ">=")

# Names become path segments ("sg/node.var") in documents and DOT output, so
# separators and quoting characters are excluded.
_NAME_RE = re.compile(r"^[A-Za-z0-9_+\[\]()-]+$")

_uid_counter = itertools.count()


def _check_name(name: str, kind: str) -> str:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ModelError(
            f"invalid {kind} name {name!r}: use characters [A-Za-z0-9_+()\\[\\]-]"
        )
    return name


def _check_sense(sense: str) -> Sense:
    if sense not in SENSES:
        raise ModelError(f"invalid constraint sense {sense!r}: expected one of {SENSES}")
    return sense  # type: ignore[return-value]


def _add_term(terms: dict, key, coef: float) -> None:
    value = terms.get(key, 0.0) + coef
    if value == 0.0:
        terms.pop(key, None)
    else:
        terms[key] = value


class Variable:
    """Decision variable owned by a single node.

    Supports arithmetic with scalars, other variables and expressions, so
    models read like algebra: ``node.add_constraint(x + y, ">=", 3)``.
    """

    __slots__ = ("name", "lower", "upper", "start", "node", "index", "_uid")

    def __init__(self, name: str, lower: float, upper: float, start: float | None,
                 node: "Node", index: int):
        lower = float(lower)
        upper = float(upper)
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise BoundError(f"variable {name!r}: bounds [{lower}, {upper}] are invalid")
        if lower == math.inf or upper == -math.inf:
            raise BoundError(f"variable {name!r}: bounds admit no finite value")
        self.name = name
        self.lower = lower
        self.upper = upper
        if start is None:
            start = 0.0
        if math.isnan(float(start)):
            raise ModelError(f"variable {name!r}: start value must be finite")
        self.start = min(max(float(start), lower), upper)
        self.node = node
        self.index = index
        self._uid = next(_uid_counter)

    def __repr__(self) -> str:
        return f"Variable({self.node.name}.{self.name})"

    # -- arithmetic sugar ---------------------------------------------------
    def __add__(self, other):
        return LinExpr({self: 1.0}) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr({self: 1.0}) - other

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return LinExpr({self: -1.0})

    def __mul__(self, other):
        if isinstance(other, Variable):
            return QuadExpr(quad={_pair(self, other): 1.0})
        if isinstance(other, (LinExpr, QuadExpr)):
            return as_quad(other) * self
        return LinExpr({self: float(other)})

    __rmul__ = __mul__

    def __pow__(self, exponent):
        if exponent != 2:
            raise ModelError("only squares of variables are supported")
        return QuadExpr(quad={_pair(self, self): 1.0})


def _pair(a: Variable, b: Variable) -> tuple[Variable, Variable]:
    return (a, b) if a._uid <= b._uid else (b, a)


class LinExpr:
    """Affine expression: sum of coefficient * variable plus a constant."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: dict[Variable, float] | None = None, constant: float = 0.0):
        self.terms: dict[Variable, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def __add__(self, other):
        if isinstance(other, QuadExpr):
            return other + self
        out = self.copy()
        if isinstance(other, Variable):
            _add_term(out.terms, other, 1.0)
        elif isinstance(other, LinExpr):
            for v, c in other.terms.items():
                _add_term(out.terms, v, c)
            out.constant += other.constant
        else:
            out.constant += float(other)
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * _as_addable(other)

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, Variable):
            quad = {}
            for v, c in self.terms.items():
                _add_term(quad, _pair(v, other), c)
            out = QuadExpr(quad=quad)
            if self.constant:
                _add_term(out.linear, other, self.constant)
            return out
        if isinstance(other, (LinExpr, QuadExpr)):
            return as_quad(self) * other
        scale = float(other)
        return LinExpr({v: c * scale for v, c in self.terms.items()}, self.constant * scale)

    __rmul__ = __mul__

    def __pow__(self, exponent):
        if exponent != 2:
            raise ModelError("only squares of affine expressions are supported")
        return as_quad(self) * self


class QuadExpr:
    """Quadratic expression: constant + linear terms + unordered-pair terms.

    The pair map stores each product once with the coefficient of
    ``x_i * x_j``; a square ``x**2`` is the pair ``(x, x)`` with coefficient 1.
    """

    __slots__ = ("linear", "quad", "constant")

    def __init__(self, linear: dict[Variable, float] | None = None,
                 quad: dict[tuple[Variable, Variable], float] | None = None,
                 constant: float = 0.0):
        self.linear: dict[Variable, float] = dict(linear) if linear else {}
        self.quad: dict[tuple[Variable, Variable], float] = dict(quad) if quad else {}
        self.constant = float(constant)

    def copy(self) -> "QuadExpr":
        return QuadExpr(self.linear, self.quad, self.constant)

    def variables(self) -> list[Variable]:
        seen: dict[Variable, None] = {}
        for v in self.linear:
            seen.setdefault(v)
        for a, b in self.quad:
            seen.setdefault(a)
            seen.setdefault(b)
        return list(seen)

    def is_linear(self) -> bool:
        return not self.quad

    def value(self, values: dict[Variable, float]) -> float:
        total = self.constant
        for v, c in self.linear.items():
            total += c * values[v]
        for (a, b), c in self.quad.items():
            total += c * values[a] * values[b]
        return total

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, Variable):
            _add_term(out.linear, other, 1.0)
        elif isinstance(other, LinExpr):
            for v, c in other.terms.items():
                _add_term(out.linear, v, c)
            out.constant += other.constant
        elif isinstance(other, QuadExpr):
            for v, c in other.linear.items():
                _add_term(out.linear, v, c)
            for p, c in other.quad.items():
                _add_term(out.quad, p, c)
            out.constant += other.constant
        else:
            out.constant += float(other)
        return out

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * _as_addable(other)

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, (Variable, LinExpr, QuadExpr)):
            rhs = as_quad(other)
            if self.quad and (rhs.quad or rhs.linear):
                raise ModelError("products beyond quadratic degree are not supported")
            if rhs.quad and self.linear:
                raise ModelError("products beyond quadratic degree are not supported")
            out = QuadExpr(constant=self.constant * rhs.constant)
            for v, c in self.linear.items():
                _add_term(out.linear, v, c * rhs.constant)
            for v, c in rhs.linear.items():
                _add_term(out.linear, v, c * self.constant)
            for va, ca in self.linear.items():
                for vb, cb in rhs.linear.items():
                    _add_term(out.quad, _pair(va, vb), ca * cb)
            for p, c in self.quad.items():
                _add_term(out.quad, p, c * rhs.constant)
            for p, c in rhs.quad.items():
                _add_term(out.quad, p, c * self.constant)
            return out
        scale = float(other)
        return QuadExpr({v: c * scale for v, c in self.linear.items()},
                        {p: c * scale for p, c in self.quad.items()},
                        self.constant * scale)

    __rmul__ = __mul__


def _as_addable(obj):
    if isinstance(obj, (Variable, LinExpr, QuadExpr)):
        return obj
    return LinExpr(constant=float(obj))


def as_quad(obj) -> QuadExpr:
    """Coerce a number, variable or expression to a QuadExpr."""
    if isinstance(obj, QuadExpr):
        return obj.copy()
    if isinstance(obj, LinExpr):
        return QuadExpr(obj.terms, None, obj.constant)
    if isinstance(obj, Variable):
        return QuadExpr({obj: 1.0})
    return QuadExpr(constant=float(obj))


def as_linear(obj) -> LinExpr:
    """Coerce to a LinExpr, rejecting quadratic terms."""
    if isinstance(obj, QuadExpr):
        if obj.quad:
            raise ModelError("constraint expressions must be linear")
        return LinExpr(obj.linear, obj.constant)
    if isinstance(obj, LinExpr):
        return obj.copy()
    if isinstance(obj, Variable):
        return LinExpr({obj: 1.0})
    if isinstance(obj, dict):
        return LinExpr(obj)
    return LinExpr(constant=float(obj))


class NodeConstraint:
    """Linear constraint over the variables of a single node."""

    __slots__ = ("node", "coeffs", "sense", "rhs", "index")

    def __init__(self, node: "Node", coeffs: dict[Variable, float], sense: Sense,
                 rhs: float, index: int):
        self.node = node
        self.coeffs = coeffs
        self.sense = sense
        self.rhs = float(rhs)
        self.index = index

    def __repr__(self) -> str:
        return f"NodeConstraint({self.node.name}[{self.index}])"


class LinkConstraint:
    """Linear constraint coupling variables of two or more nodes."""

    __slots__ = ("edge", "terms", "sense", "rhs", "tag", "index")

    def __init__(self, edge: "Edge", terms: dict[Variable, float], sense: Sense,
                 rhs: float, tag: str, index: int):
        self.edge = edge
        self.terms = terms
        self.sense = sense
        self.rhs = float(rhs)
        self.tag = tag
        self.index = index

    def nodes(self) -> list["Node"]:
        seen: dict[Node, None] = {}
        for v in self.terms:
            seen.setdefault(v.node)
        return list(seen)

    def violation(self, values: dict[Variable, float]) -> float:
        """One-sided violation of the constraint at the given point."""
        activity = sum(c * values[v] for v, c in self.terms.items())
        if self.sense == "==":
            return abs(activity - self.rhs)
        if self.sense == "<=":
            return max(0.0, activity - self.rhs)
        return max(0.0, self.rhs - activity)

    def __repr__(self) -> str:
        names = ",".join(n.name for n in self.edge.nodes)
        return f"LinkConstraint({{{names}}}[{self.index}])"


class Edge:
    """Hyperedge: the set of nodes coupled by one or more link constraints.

    Edges are keyed by node set inside their owning graph, so repeated links
    over the same nodes share a single edge.
    """

    __slots__ = ("graph", "nodes", "link_constraints", "_uid")

    def __init__(self, graph: "Graph", nodes: tuple["Node", ...]):
        self.graph = graph
        self.nodes = nodes
        self.link_constraints: list[LinkConstraint] = []
        self._uid = next(_uid_counter)

    @property
    def num_link_constraints(self) -> int:
        return len(self.link_constraints)

    def __repr__(self) -> str:
        return f"Edge({{{','.join(n.name for n in self.nodes)}}})"


class Node:
    """One subproblem: variables, linear constraints, quadratic objective."""

    __slots__ = ("name", "graph", "variables", "constraints", "objective", "_uid",
                 "_vars_by_name")

    def __init__(self, name: str, graph: "Graph"):
        self.name = name
        self.graph = graph
        self.variables: list[Variable] = []
        self.constraints: list[NodeConstraint] = []
        self.objective = QuadExpr()
        self._uid = next(_uid_counter)
        self._vars_by_name: dict[str, Variable] = {}

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def add_variable(self, name: str, lower: float = -math.inf,
                     upper: float = math.inf, start: float | None = None) -> Variable:
        """Create a variable on this node and return a stable reference."""
        _check_name(name, "variable")
        if name in self._vars_by_name:
            raise ModelError(f"node {self.name!r} already has a variable {name!r}")
        var = Variable(name, lower, upper, start, self, len(self.variables))
        self.variables.append(var)
        self._vars_by_name[name] = var
        self.graph._bump()
        return var

    def variable(self, name: str) -> Variable:
        try:
            return self._vars_by_name[name]
        except KeyError:
            raise ModelError(f"node {self.name!r} has no variable {name!r}") from None

    def add_constraint(self, expr, sense: str, rhs: float = 0.0) -> NodeConstraint:
        """Add a linear constraint over this node's own variables.

        Any constant in the expression is folded into the right-hand side.
        """
        _check_sense(sense)
        lin = as_linear(expr)
        for v in lin.terms:
            if v.node is not self:
                raise ScopeError(
                    f"node constraint on {self.name!r} references foreign variable "
                    f"{v.node.name}.{v.name}; use a link constraint instead")
        coeffs = dict(lin.terms)
        con = NodeConstraint(self, coeffs, sense, float(rhs) - lin.constant,
                             len(self.constraints))
        self.constraints.append(con)
        self.graph._bump()
        return con

    def set_objective(self, expr) -> None:
        """Replace this node's objective with a quadratic expression."""
        quad = as_quad(expr)
        for v in quad.variables():
            if v.node is not self:
                raise ScopeError(
                    f"objective of {self.name!r} references foreign variable "
                    f"{v.node.name}.{v.name}")
        self.objective = quad
        self.graph._bump()

    def add_objective(self, expr) -> None:
        """Add a quadratic expression to this node's objective."""
        self.set_objective(self.objective + as_quad(expr))

    def __repr__(self) -> str:
        return f"Node({self.name})"


class Graph:
    """Hierarchical graph of node subproblems joined by link constraints.

    ``nodes``, ``edges`` and ``subgraphs`` are the local elements; the
    ``all_*`` methods walk subgraphs recursively, listing subgraph elements
    before the local ones so that deeper structure always precedes the level
    that couples it.
    """

    def __init__(self, name: str = ""):
        if name:
            _check_name(name, "graph")
        self.name = name
        self._nodes: list[Node] = []
        self._edges: list[Edge] = []
        self._subgraphs: list[Graph] = []
        self._parent: Graph | None = None
        self._edge_by_key: dict[frozenset, Edge] = {}
        self._nodes_by_name: dict[str, Node] = {}
        self._subgraphs_by_name: dict[str, Graph] = {}
        self._auto_counter = 0
        self.revision = 0

    # -- bookkeeping ---------------------------------------------------------
    def _bump(self) -> None:
        g: Graph | None = self
        while g is not None:
            g.revision += 1
            g = g._parent

    @property
    def parent(self) -> "Graph | None":
        return self._parent

    @property
    def nodes(self) -> tuple[Node, ...]:
        return tuple(self._nodes)

    @property
    def edges(self) -> tuple[Edge, ...]:
        return tuple(self._edges)

    @property
    def subgraphs(self) -> tuple["Graph", ...]:
        return tuple(self._subgraphs)

    # -- construction ----------------------------------------------------------
    def add_node(self, name: str | None = None) -> Node:
        """Create an empty node in this graph."""
        if name is None:
            while True:
                name = f"n{self._auto_counter}"
                self._auto_counter += 1
                if name not in self._nodes_by_name:
                    break
        else:
            _check_name(name, "node")
            if name in self._nodes_by_name:
                raise ModelError(f"graph already has a node named {name!r}")
        node = Node(name, self)
        self._nodes.append(node)
        self._nodes_by_name[name] = node
        self._bump()
        return node

    def add_subgraph(self, child: "Graph") -> "Graph":
        """Attach an existing graph as a subgraph of this one."""
        if child is self:
            raise HierarchyError("a graph cannot be its own subgraph")
        if child._parent is not None:
            raise HierarchyError("subgraph is already attached to a parent graph")
        anc: Graph | None = self
        while anc is not None:
            if anc is child:
                raise HierarchyError("attachment would create a cycle in the hierarchy")
            anc = anc._parent
        if not child.name:
            while True:
                name = f"sg{self._auto_counter}"
                self._auto_counter += 1
                if name not in self._subgraphs_by_name:
                    break
            child.name = name
        if child.name in self._subgraphs_by_name:
            raise ModelError(f"graph already has a subgraph named {child.name!r}")
        child._parent = self
        self._subgraphs.append(child)
        self._subgraphs_by_name[child.name] = child
        self._bump()
        return child

    def add_link_constraint(self, expr, sense: str, rhs: float = 0.0,
                            tag: str = "") -> Edge:
        """Add a linear constraint coupling two or more nodes.

        The constraint must be added to the lowest common ancestor graph of
        the nodes it references.  Returns the hyperedge holding it; the
        constraint itself is ``edge.link_constraints[-1]``.
        """
        _check_sense(sense)
        lin = as_linear(expr)
        if not lin.terms:
            raise EdgeArityError("link constraint has no variable terms")
        nodes_seen: dict[Node, None] = {}
        for v in lin.terms:
            nodes_seen.setdefault(v.node)
        nodes = list(nodes_seen)
        if len(nodes) < 2:
            raise EdgeArityError(
                "link constraint must couple at least two nodes; "
                f"got only {nodes[0].name!r} (use a node constraint)")
        lca = _lowest_common_ancestor(nodes)
        if lca is not self:
            owner = lca.name or "<root>"
            raise ScopeError(
                f"link constraint belongs to graph {owner!r}, the lowest common "
                "ancestor of its nodes; add it there")
        key = frozenset(nodes)
        edge = self._edge_by_key.get(key)
        if edge is None:
            ordered = tuple(sorted(nodes, key=lambda n: n._uid))
            edge = Edge(self, ordered)
            self._edges.append(edge)
            self._edge_by_key[key] = edge
        con = LinkConstraint(edge, dict(lin.terms), sense, float(rhs) - lin.constant,
                             tag, len(edge.link_constraints))
        edge.link_constraints.append(con)
        self._bump()
        return edge

    # -- queries ---------------------------------------------------------------
    def all_nodes(self) -> list[Node]:
        """All nodes, recursing into subgraphs (subgraph nodes first)."""
        out: list[Node] = []
        for sg in self._subgraphs:
            out.extend(sg.all_nodes())
        out.extend(self._nodes)
        return out

    def all_edges(self) -> list[Edge]:
        """All edges, recursing into subgraphs (subgraph edges first)."""
        out: list[Edge] = []
        for sg in self._subgraphs:
            out.extend(sg.all_edges())
        out.extend(self._edges)
        return out

    def all_subgraphs(self) -> list["Graph"]:
        """All nested subgraphs, deepest first within each branch."""
        out: list[Graph] = []
        for sg in self._subgraphs:
            out.extend(sg.all_subgraphs())
            out.append(sg)
        return out

    def all_link_constraints(self, tag: str | None = None) -> list[LinkConstraint]:
        out = []
        for edge in self.all_edges():
            for con in edge.link_constraints:
                if tag is None or con.tag == tag:
                    out.append(con)
        return out

    def node(self, name: str) -> Node:
        try:
            return self._nodes_by_name[name]
        except KeyError:
            raise ModelError(f"graph has no local node named {name!r}") from None

    def subgraph(self, name: str) -> "Graph":
        try:
            return self._subgraphs_by_name[name]
        except KeyError:
            raise ModelError(f"graph has no subgraph named {name!r}") from None

    def contains_node(self, node: Node) -> bool:
        g: Graph | None = node.graph
        while g is not None:
            if g is self:
                return True
            g = g._parent
        return False

    def node_path(self, node: Node) -> str:
        """Path of a node relative to this graph, e.g. ``sg1/n3``."""
        parts = [node.name]
        g = node.graph
        while g is not self:
            if g is None:
                raise ScopeError(f"node {node.name!r} is not in this graph")
            parts.append(g.name)
            g = g._parent
        return "/".join(reversed(parts))

    def resolve_node(self, path: str) -> Node:
        """Inverse of :meth:`node_path`."""
        *graph_parts, node_name = path.split("/")
        g: Graph = self
        for part in graph_parts:
            g = g.subgraph(part)
        return g.node(node_name)

    def objective_value(self, values: dict[Variable, float]) -> float:
        """Sum of node objectives over all recursive nodes at a point."""
        return sum(n.objective.value(values) for n in self.all_nodes())

    def __repr__(self) -> str:
        return (f"Graph({self.name!r}: {len(self._nodes)} nodes, "
                f"{len(self._edges)} edges, {len(self._subgraphs)} subgraphs)")


def _lowest_common_ancestor(nodes: Iterable[Node]) -> Graph:
    chains: list[list[Graph]] = []
    for node in nodes:
        chain = []
        g: Graph | None = node.graph
        while g is not None:
            chain.append(g)
            g = g._parent
        chains.append(chain)
    candidates = chains[0]
    rest = [set(map(id, chain)) for chain in chains[1:]]
    for g in candidates:
        if all(id(g) in ids for ids in rest):
            return g
    raise ScopeError("link constraint references nodes from unrelated graphs")


def query_elements(graph: Graph, scope: str = "local"):
    """Return ``(nodes, edges, subgraphs)`` for the given scope.

    ``local`` lists only the graph's own elements; ``recursive`` walks the
    full hierarchy in canonical order (subgraph elements first).
    """
    if scope == "local":
        return graph.nodes, graph.edges, graph.subgraphs
    if scope == "recursive":
        return (tuple(graph.all_nodes()), tuple(graph.all_edges()),
                tuple(graph.all_subgraphs()))
    raise ModelError(f"unknown query scope {scope!r}: expected 'local' or 'recursive'")


def iter_links(edges: Iterable[Edge]) -> Iterator[LinkConstraint]:
    for edge in edges:
        yield from edge.link_constraints
