"""Synchronous overlapping Schwarz decomposition for graph QPs.

The graph's top-level subgraphs (typically produced by apply_partition) are
expanded by ``overlap`` hops; each iteration solves one QP per expanded
subgraph against the previous iteration's boundary caches (Jacobi update),
restricts every solution back to its original subgraph, and exchanges primal
values and link duals.  Incident links are treated in one of two ways:

  dual   -- the link is relaxed into the subproblem objective through a
            penalty with the cached multiplier (the default);
  primal -- the link is imposed as a constraint with external variables
            frozen at their cached values.

Convergence is declared when both the worst cut-link violation and the worst
pairwise disagreement between dual estimates fall below the tolerance.  The
penalty sign follows the package-wide multiplier convention (stationarity
grad f + J' lambda = 0), which makes a KKT point of the full problem a fixed
point of the iteration.

Iterates are deterministic and independent of the worker count: subproblems
consume only iteration k-1 caches, and results are merged in subgraph order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (ClassificationError, OptionError, SolveError,
                     StructureError, SubproblemError)
from .flatten import FlatQP, RowRef, _hessian_block, flatten
from .ipm import Solution, SolverOptions, solve_monolithic
from .model import Graph, LinkConstraint, Variable
from .topology import SubgraphView, expand, incident_edges

TREATMENTS = ("dual", "primal")
DIVERGENCE_FACTOR = 1e6


@dataclass
class SchwarzOptions:
    """Controls for the decomposition loop.

    ``treatment_overrides`` maps a LinkConstraint or a link tag to "primal"
    or "dual"; everything else uses ``link_treatment``.
    """

    overlap: int = 1
    tolerance: float = 1e-6
    max_iterations: int = 100
    link_treatment: str = "dual"
    treatment_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.overlap, int) or self.overlap < 0:
            raise OptionError(f"overlap must be a nonnegative integer, got {self.overlap}")
        if not (self.tolerance > 0):
            raise OptionError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise OptionError(
                f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.link_treatment not in TREATMENTS:
            raise OptionError(
                f"link_treatment must be one of {TREATMENTS}, got {self.link_treatment!r}")


@dataclass
class SchwarzState:
    """Everything one iteration consumes and produces."""

    graph: Graph
    parts: list[Graph]
    expanded: list[SubgraphView]
    dual_links: list[tuple[LinkConstraint, ...]]     # I1 per subgraph
    primal_links: list[tuple[LinkConstraint, ...]]   # I2 per subgraph
    cut_links: tuple[LinkConstraint, ...]
    owner: dict[Variable, int]
    primal_cache: dict[Variable, float]
    dual_cache: dict[LinkConstraint, float]
    dual_estimates: dict[LinkConstraint, list[tuple[int, float]]] = field(default_factory=dict)
    residual_history: list[tuple[float, float]] = field(default_factory=list)
    iteration: int = 0


def _treatment_of(link: LinkConstraint, options: SchwarzOptions) -> str:
    value = options.treatment_overrides.get(link)
    if value is None and link.tag is not None:
        value = options.treatment_overrides.get(link.tag)
    if value is None:
        value = options.link_treatment
    if value not in TREATMENTS:
        raise ClassificationError(
            f"link treatment must be one of {TREATMENTS}, got {value!r}")
    return value


def classify_links(graph: Graph, expanded_subgraphs: list[SubgraphView],
                   options: SchwarzOptions) -> list[tuple[tuple[LinkConstraint, ...],
                                                          tuple[LinkConstraint, ...]]]:
    """Split each expanded subgraph's incident links into dual-treated (I1)
    and primal-treated (I2) sets.  Classification is per link constraint, so
    two links sharing a hyperedge may be treated differently."""
    incident_union: set[int] = set()
    per_subgraph = []
    for view in expanded_subgraphs:
        i1: list[LinkConstraint] = []
        i2: list[LinkConstraint] = []
        for edge in incident_edges(graph, view.nodes):
            for link in edge.link_constraints:
                incident_union.add(id(link))
                (i2 if _treatment_of(link, options) == "primal" else i1).append(link)
        per_subgraph.append((tuple(i1), tuple(i2)))

    all_tags = {l.tag for l in graph.all_link_constraints() if l.tag is not None}
    for key in options.treatment_overrides:
        if isinstance(key, LinkConstraint):
            if id(key) not in incident_union:
                raise ClassificationError(
                    "treatment override refers to a link constraint that is "
                    "not incident to any expanded subgraph")
        elif key not in all_tags:
            raise ClassificationError(
                f"treatment override tag {key!r} matches no link constraint")
    return per_subgraph


def _assemble(state: SchwarzState, i: int) -> FlatQP:
    """Expanded-subgraph QP at the current caches, keyed by original objects."""
    view = state.expanded[i]
    cache = state.primal_cache
    var_map = [(node, var) for node in view.nodes for var in node.variables]
    index_of = {v: k for k, (_, v) in enumerate(var_map)}
    n = len(var_map)

    lb = np.array([v.lower for _, v in var_map], dtype=float)
    ub = np.array([v.upper for _, v in var_map], dtype=float)
    x0 = np.clip(np.array([cache[v] for _, v in var_map], dtype=float), lb, ub)

    c = np.zeros(n)
    const = 0.0
    h_rows: list[int] = []
    h_cols: list[int] = []
    h_vals: list[float] = []
    for node in view.nodes:
        for v, coef in node.objective.linear.items():
            c[index_of[v]] += coef
        const += node.objective.constant
        for r, col, val in _hessian_block(node, index_of):
            h_rows.append(r)
            h_cols.append(col)
            h_vals.append(val)

    for link in state.dual_links[i]:
        lam = state.dual_cache[link]
        for v, coef in link.terms.items():
            if v in index_of:
                c[index_of[v]] += lam * coef
            else:
                if v not in cache:
                    raise SolveError(
                        f"boundary cache has no value for {v.node.name}.{v.name}")
                const += lam * coef * cache[v]
        const -= lam * link.rhs

    eq_rows: list[RowRef] = []
    in_rows: list[RowRef] = []
    eq_data: list[tuple[dict[Variable, float], float]] = []
    in_data: list[tuple[dict[Variable, float], float, float]] = []

    def add_row(kind, con, coeffs, sense, rhs):
        ref = RowRef(kind, con, sense)
        if sense == "==":
            eq_rows.append(ref)
            eq_data.append((coeffs, rhs))
        elif sense == "<=":
            in_rows.append(ref)
            in_data.append((coeffs, -math.inf, rhs))
        else:
            in_rows.append(ref)
            in_data.append((coeffs, rhs, math.inf))

    for node in view.nodes:
        for con in node.constraints:
            add_row("node", con, con.coeffs, con.sense, con.rhs)
    for edge in view.edges:
        for link in edge.link_constraints:
            add_row("link", link, link.terms, link.sense, link.rhs)
    for link in state.primal_links[i]:
        coeffs = {}
        shift = 0.0
        for v, coef in link.terms.items():
            if v in index_of:
                coeffs[v] = coeffs.get(v, 0.0) + coef
            else:
                if v not in cache:
                    raise SolveError(
                        f"boundary cache has no value for {v.node.name}.{v.name}")
                shift += coef * cache[v]
        add_row("link", link, coeffs, link.sense, link.rhs - shift)

    def build(rows, width):
        ri, ci, vals = [], [], []
        for r, coeffs in enumerate(rows):
            for v, coef in coeffs.items():
                ri.append(r)
                ci.append(index_of[v])
                vals.append(coef)
        mat = sp.coo_matrix((vals, (ri, ci)), shape=(len(rows), width)).tocsr()
        mat.sum_duplicates()
        return mat

    hessian = sp.coo_matrix((h_vals, (h_rows, h_cols)), shape=(n, n)).tocsr()
    hessian.sum_duplicates()
    return FlatQP(hessian=hessian, c=c, obj_const=const,
                  a_eq=build([d for d, _ in eq_data], n),
                  b_eq=np.array([r for _, r in eq_data], dtype=float),
                  a_in=build([d for d, _, _ in in_data], n),
                  b_in_low=np.array([lo for _, lo, _ in in_data], dtype=float),
                  b_in_up=np.array([up for _, _, up in in_data], dtype=float),
                  lb=lb, ub=ub, x0=x0,
                  var_map=var_map, eq_rows=eq_rows, in_rows=in_rows)


def build_subproblem(expanded_subgraph: SubgraphView, state: SchwarzState) -> FlatQP:
    """Eq.-style subproblem for one expanded subgraph: dual-treated incident
    links enter the objective with cached multipliers, primal-treated ones
    become constraints with externals frozen at cached values."""
    for i, view in enumerate(state.expanded):
        if view is expanded_subgraph:
            return _assemble(state, i)
    raise OptionError("expanded subgraph does not belong to this state")


def restrict(solution: Solution, original: Graph, expanded: SubgraphView,
             ) -> tuple[dict[Variable, float], dict[LinkConstraint, float]]:
    """Drop expansion-acquired values: keep primal entries of the original
    subgraph's nodes and duals of its links plus cut links of the root."""
    if solution.status != "optimal":
        raise SubproblemError(f"cannot restrict a {solution.status} subproblem solution")
    keep_nodes = {id(n) for n in original.all_nodes()}
    primal = {v: val for v, val in solution.primal.items() if id(v.node) in keep_nodes}
    own_links = {id(l) for e in original.all_edges() for l in e.link_constraints}
    cut = {id(l) for e in expanded.graph.edges for l in e.link_constraints}
    duals = {l: val for l, val in solution.duals_link.items()
             if id(l) in own_links or id(l) in cut}
    return primal, duals


def residuals(graph: Graph, state: SchwarzState) -> tuple[float, float]:
    """(max cut-link violation at the cached iterate, max pairwise dual gap)."""
    r_pr = 0.0
    for link in state.cut_links:
        r_pr = max(r_pr, link.violation(state.primal_cache))
    r_du = 0.0
    for link in state.cut_links:
        estimates = state.dual_estimates.get(link)
        if estimates and len(estimates) > 1:
            values = [v for _, v in estimates]
            r_du = max(r_du, max(values) - min(values))
    return r_pr, r_du


def _setup_state(graph: Graph, expanded, options: SchwarzOptions,
                 initial_primal, initial_duals) -> SchwarzState:
    parts = list(graph.subgraphs)
    if not parts:
        raise StructureError(
            "Schwarz decomposition needs top-level subgraphs; apply_partition "
            "or add subgraphs first")
    if graph.nodes:
        raise StructureError(
            "graph has nodes outside every subgraph; they would not be "
            "covered by any subproblem")
    all_ids = {id(n) for n in graph.all_nodes()}
    covered: set[int] = set()
    total = 0
    for part in parts:
        part_nodes = part.all_nodes()
        total += len(part_nodes)
        covered.update(id(n) for n in part_nodes)
    if covered != all_ids or total != len(all_ids):
        raise StructureError("subgraphs must partition the graph's nodes")

    if expanded is None:
        views = [expand(graph, part, options.overlap) for part in parts]
    elif isinstance(expanded, int):
        if expanded < 0:
            raise OptionError(f"overlap must be nonnegative, got {expanded}")
        views = [expand(graph, part, expanded) for part in parts]
    else:
        views = list(expanded)
        if len(views) != len(parts):
            raise StructureError(
                f"{len(views)} expanded subgraphs supplied for {len(parts)} parts")
        for part, view in zip(parts, views):
            ids = {id(n) for n in view.nodes}
            if any(id(n) not in ids for n in part.all_nodes()):
                raise StructureError(
                    f"expanded subgraph does not cover part {part.name!r}")

    classification = classify_links(graph, views, options)
    owner: dict[Variable, int] = {}
    for i, part in enumerate(parts):
        for node in part.all_nodes():
            for var in node.variables:
                owner[var] = i

    primal_cache = {var: var.start for node in graph.all_nodes() for var in node.variables}
    if initial_primal:
        for var, value in initial_primal.items():
            if var not in primal_cache:
                raise OptionError(f"initial primal value for unknown variable {var.name!r}")
            primal_cache[var] = float(value)
    dual_cache = {link: 0.0 for link in graph.all_link_constraints()}
    if initial_duals:
        for link, value in initial_duals.items():
            if link not in dual_cache:
                raise OptionError("initial dual value for unknown link constraint")
            dual_cache[link] = float(value)

    return SchwarzState(
        graph=graph, parts=parts, expanded=views,
        dual_links=[i1 for i1, _ in classification],
        primal_links=[i2 for _, i2 in classification],
        cut_links=tuple(l for e in graph.edges for l in e.link_constraints),
        owner=owner, primal_cache=primal_cache, dual_cache=dual_cache)


def schwarz_solve(graph: Graph, expanded=None, options: SchwarzOptions | None = None,
                  workers: int = 1, initial_primal=None, initial_duals=None) -> Solution:
    """Solve by overlapping Schwarz over the graph's top-level subgraphs.

    ``expanded`` may be None (expand by options.overlap), an integer overlap,
    or a list of SubgraphView pairing up with the subgraphs.  ``workers``
    sets the thread pool size; results do not depend on it.
    """
    options = options or SchwarzOptions()
    if workers < 1:
        raise OptionError(f"workers must be at least 1, got {workers}")
    flat = flatten(graph)  # validates convexity; fixes the reporting order
    state = _setup_state(graph, expanded, options, initial_primal, initial_duals)
    num_parts = len(state.parts)
    # subproblems are solved well below the outer tolerance so that dual
    # estimates, not solver noise, dominate the consensus residual
    inner_options = SolverOptions(tol=max(1e-12, options.tolerance * 1e-4))

    part_nodes = [part.all_nodes() for part in state.parts]
    own_links: list[set[int]] = [
        {id(l) for e in part.all_edges() for l in e.link_constraints}
        for part in state.parts]
    owned_node_ids = [{id(n) for n in nodes} for nodes in part_nodes]

    trace: list[tuple[int, float, float, float]] = []
    status = "iteration_limit"
    message = f"no convergence within {options.max_iterations} iterations"
    initial_r_pr: float | None = None
    last_solutions: list[Solution] = []
    subproblem_iters: list[tuple[int, ...]] = []
    t0 = time.perf_counter()

    iteration = 0
    for iteration in range(1, options.max_iterations + 1):
        state.iteration = iteration
        qps = [_assemble(state, i) for i in range(num_parts)]
        if workers == 1:
            solutions = [solve_monolithic(qp, inner_options) for qp in qps]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                solutions = list(pool.map(
                    lambda qp: solve_monolithic(qp, inner_options), qps))
        for i, sol in enumerate(solutions):
            if sol.status != "optimal":
                raise SubproblemError(
                    f"subproblem for subgraph {state.parts[i].name!r} returned "
                    f"status {sol.status} at iteration {iteration}",
                    subgraph_index=i, iteration=iteration, status=sol.status)
        last_solutions = solutions
        subproblem_iters.append(tuple(s.iterations for s in solutions))

        new_primal = dict(state.primal_cache)
        for i, sol in enumerate(solutions):
            for node in part_nodes[i]:
                for var in node.variables:
                    new_primal[var] = sol.primal[var]
        estimates: dict[LinkConstraint, list[tuple[int, float]]] = {}
        for i, sol in enumerate(solutions):
            for link, val in sol.duals_link.items():
                estimates.setdefault(link, []).append((i, val))
        for link, vals in estimates.items():
            state.dual_cache[link] = sum(v for _, v in vals) / len(vals)
        state.primal_cache = new_primal
        state.dual_estimates = estimates

        r_pr, r_du = residuals(graph, state)
        state.residual_history.append((r_pr, r_du))
        trace.append((iteration, r_pr, r_du, time.perf_counter() - t0))
        if initial_r_pr is None:
            initial_r_pr = max(r_pr, 1e-12)
        if max(r_pr, r_du) <= options.tolerance:
            status = "optimal"
            message = ""
            break
        if r_pr > DIVERGENCE_FACTOR * initial_r_pr:
            status = "numerical_error"
            message = (f"primal residual {r_pr:.3e} exceeds {DIVERGENCE_FACTOR:g} "
                       f"times its initial value; diverging")
            break

    x = np.array([state.primal_cache[v] for _, v in flat.var_map], dtype=float)
    duals_node = {}
    reduced = {}
    for i, sol in enumerate(last_solutions):
        for con, val in sol.duals_node.items():
            if id(con.node) in owned_node_ids[i]:
                duals_node[con] = val
        for var, val in sol.reduced_costs.items():
            if state.owner.get(var) == i:
                reduced[var] = val
    duals_link = dict(state.dual_cache)

    info = {
        "iterations": iteration,
        "residual_history": list(state.residual_history),
        "trace": trace,
        "message": message,
        "overlap": options.overlap if not isinstance(expanded, int) else expanded,
        "subproblem_iterations": subproblem_iters,
        "workers": workers,
        "x": x,
        "method": "schwarz",
    }
    return Solution(status=status, objective=flat.objective_value(x),
                    primal=dict(state.primal_cache), duals_node=duals_node,
                    duals_link=duals_link, reduced_costs=reduced,
                    iterations=iteration, info=info)
