"""Flattening a graph into one standard-form convex QP.

The flat form is

    minimize   0.5 x'Hx + c'x + const
    subject to A_eq x = b_eq
               low <= A_in x <= up      (one-sided rows use +/- infinity)
               lb <= x <= ub

Variable order is the canonical recursive node order crossed with each node's
variable insertion order.  Rows list node constraints first (in node order),
then link constraints in recursive edge order, which places subgraph links
before the links of the graph that couples them.  Flattening the same graph
twice yields bitwise-identical arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .errors import ConvexityError, IntegrityError
from .model import Edge, Graph, LinkConstraint, Node, NodeConstraint, Variable

PSD_PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class RowRef:
    """Provenance of one flat row: which constraint produced it."""

    kind: Literal["node", "link"]
    constraint: NodeConstraint | LinkConstraint
    sense: str

    @property
    def owner(self):
        if self.kind == "node":
            return self.constraint.node
        return self.constraint.edge


@dataclass
class FlatQP:
    """Standard-form QP with maps back to the originating graph elements."""

    hessian: sp.csr_matrix
    c: np.ndarray
    obj_const: float
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_in: sp.csr_matrix
    b_in_low: np.ndarray
    b_in_up: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray
    var_map: list[tuple[Node, Variable]]
    eq_rows: list[RowRef]
    in_rows: list[RowRef]
    var_index: dict[Variable, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.var_index:
            self.var_index = {v: i for i, (_, v) in enumerate(self.var_map)}

    @property
    def num_vars(self) -> int:
        return len(self.var_map)

    @property
    def num_eq(self) -> int:
        return self.a_eq.shape[0]

    @property
    def num_in(self) -> int:
        return self.a_in.shape[0]

    def objective_value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.hessian @ x) + self.c @ x + self.obj_const)


def _hessian_block(node: Node, index_of: dict[Variable, int]) -> list[tuple[int, int, float]]:
    entries = []
    for (va, vb), coef in node.objective.quad.items():
        ia, ib = index_of[va], index_of[vb]
        if ia == ib:
            entries.append((ia, ia, 2.0 * coef))
        else:
            entries.append((ia, ib, coef))
            entries.append((ib, ia, coef))
    return entries


def _check_node_psd(node: Node) -> None:
    """Eagerly reject objectives whose Hessian block is not PSD.

    Equivalent to a symmetric factorization with tolerance 1e-10 on negative
    pivots; checked per node, since objectives never mix variables of
    different nodes the joint Hessian is block diagonal.
    """
    quad = node.objective.quad
    if not quad:
        return
    local: dict[Variable, int] = {}
    for (va, vb) in quad:
        local.setdefault(va, len(local))
        local.setdefault(vb, len(local))
    k = len(local)
    block = np.zeros((k, k))
    for (va, vb), coef in quad.items():
        ia, ib = local[va], local[vb]
        if ia == ib:
            block[ia, ia] += 2.0 * coef
        else:
            block[ia, ib] += coef
            block[ib, ia] += coef
    eigmin = float(np.linalg.eigvalsh(block).min())
    scale = max(1.0, float(np.abs(block).max()))
    if eigmin < -PSD_PIVOT_TOL * scale:
        raise ConvexityError(
            f"objective of node {node.name!r} is not positive semidefinite "
            f"(minimum eigenvalue {eigmin:.3e})", node=node)


def flatten(graph: Graph) -> FlatQP:
    """Assemble the graph into one standard-form convex QP."""
    nodes = graph.all_nodes()
    var_map: list[tuple[Node, Variable]] = []
    for node in nodes:
        for var in node.variables:
            var_map.append((node, var))
    index_of = {v: i for i, (_, v) in enumerate(var_map)}
    n = len(var_map)

    lb = np.array([v.lower for _, v in var_map], dtype=float)
    ub = np.array([v.upper for _, v in var_map], dtype=float)
    x0 = np.array([v.start for _, v in var_map], dtype=float)

    c = np.zeros(n)
    obj_const = 0.0
    h_rows: list[int] = []
    h_cols: list[int] = []
    h_vals: list[float] = []
    for node in nodes:
        _check_node_psd(node)
        for v, coef in node.objective.linear.items():
            if v not in index_of:
                raise IntegrityError(
                    f"objective of node {node.name!r} references variable "
                    f"{v.name!r} outside the graph")
            c[index_of[v]] += coef
        obj_const += node.objective.constant
        for i, j, val in _hessian_block(node, index_of):
            h_rows.append(i)
            h_cols.append(j)
            h_vals.append(val)
    hessian = sp.coo_matrix((h_vals, (h_rows, h_cols)), shape=(n, n)).tocsr()
    hessian.sum_duplicates()

    eq_rows: list[RowRef] = []
    in_rows: list[RowRef] = []
    eq_data: list[tuple[dict[Variable, float], float]] = []
    in_data: list[tuple[dict[Variable, float], float, float]] = []

    def add_row(kind: str, con, coeffs: dict[Variable, float], sense: str, rhs: float):
        for v in coeffs:
            if v not in index_of:
                raise IntegrityError(
                    f"{kind} constraint references variable {v.name!r} of node "
                    f"{v.node.name!r} which is outside the graph")
        ref = RowRef(kind, con, sense)  # type: ignore[arg-type]
        if sense == "==":
            eq_rows.append(ref)
            eq_data.append((coeffs, rhs))
        elif sense == "<=":
            in_rows.append(ref)
            in_data.append((coeffs, -math.inf, rhs))
        else:
            in_rows.append(ref)
            in_data.append((coeffs, rhs, math.inf))

    for node in nodes:
        for con in node.constraints:
            add_row("node", con, con.coeffs, con.sense, con.rhs)
    for edge in graph.all_edges():
        for link in edge.link_constraints:
            add_row("link", link, link.terms, link.sense, link.rhs)

    def build_matrix(rows_data, width):
        r_idx: list[int] = []
        c_idx: list[int] = []
        vals: list[float] = []
        for r, coeffs in enumerate(rows_data):
            for v, coef in coeffs.items():
                r_idx.append(r)
                c_idx.append(index_of[v])
                vals.append(coef)
        mat = sp.coo_matrix((vals, (r_idx, c_idx)), shape=(len(rows_data), width))
        mat = mat.tocsr()
        mat.sum_duplicates()
        return mat

    a_eq = build_matrix([coeffs for coeffs, _ in eq_data], n)
    b_eq = np.array([rhs for _, rhs in eq_data], dtype=float)
    a_in = build_matrix([coeffs for coeffs, _, _ in in_data], n)
    b_in_low = np.array([low for _, low, _ in in_data], dtype=float)
    b_in_up = np.array([up for _, _, up in in_data], dtype=float)

    return FlatQP(hessian=hessian, c=c, obj_const=obj_const,
                  a_eq=a_eq, b_eq=b_eq, a_in=a_in,
                  b_in_low=b_in_low, b_in_up=b_in_up,
                  lb=lb, ub=ub, x0=x0,
                  var_map=var_map, eq_rows=eq_rows, in_rows=in_rows)
