"""Structure-exploiting factorization of the interior-point step.

For a graph whose link constraints couple otherwise independent nodes, the
augmented system of each interior-point iteration is block-arrowhead: one
block per node (its variables, slacks of its rows, and its row duals) plus a
dense border of link-constraint multipliers.  Eliminating the node blocks
leaves the Schur complement

    S = -sum_n  B_n' K_n^{-1} B_n

whose dimension equals the number of link constraints.  S is symmetric
indefinite and is factorized with LAPACK's Bunch-Kaufman routine; node blocks
factor independently.  The permuted block system is entry-for-entry the
monolithic augmented matrix, so the structured solver follows the same
iterate trajectory as the monolithic one up to linear-algebra roundoff.

Slacks of inequality link rows live in the block of the edge's first node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import OptionError, RankError, StructureError
from .flatten import flatten
from .ipm import (FactorizationError, PreparedQP, Solution, SolverOptions,
                  _State, _interior_start, _ipm_loop, build_solution, prepare)
from .model import Graph, Node

SCHUR_DIM_CAP = 20_000


class _Structure:
    """Index bookkeeping that splits the prepared QP into node blocks and a
    link border.  Built once per solve; barrier-independent."""

    def __init__(self, prob: PreparedQP, graph: Graph):
        if graph.subgraphs:
            raise StructureError(
                "structured factorization expects a flat graph with no "
                "subgraphs; call aggregate(graph, n_levels) first")
        qp = prob.qp
        self.prob = prob
        self.nodes: list[Node] = list(graph.nodes)
        node_pos = {id(node): t for t, node in enumerate(self.nodes)}
        n, m_in, m_eq = prob.num_vars, prob.num_in, prob.num_eq
        self.total_dim = prob.total_dim

        cols_x: list[list[int]] = [[] for _ in self.nodes]
        var_owner = np.empty(n, dtype=int)
        for i, (node, _) in enumerate(qp.var_map):
            t = node_pos.get(id(node))
            if t is None:
                raise StructureError("flattened variables do not match the graph nodes")
            cols_x[t].append(i)
            var_owner[i] = t

        rows_eq: list[list[int]] = [[] for _ in self.nodes]
        border_eq: list[int] = []
        for i, (kind, idx) in enumerate(prob.eq_src):
            if kind == "eq":
                ref = qp.eq_rows[idx]
            elif kind == "din":
                ref = qp.in_rows[idx]
            else:  # fixed variable row, owned by the variable's node
                rows_eq[var_owner[idx]].append(i)
                continue
            if ref.kind == "node":
                rows_eq[node_pos[id(ref.constraint.node)]].append(i)
            else:
                border_eq.append(i)

        rows_in: list[list[int]] = [[] for _ in self.nodes]
        cols_s: list[list[int]] = [[] for _ in self.nodes]
        border_in: list[int] = []
        for j, src in enumerate(prob.in_src):
            ref = qp.in_rows[src]
            if ref.kind == "node":
                t = node_pos[id(ref.constraint.node)]
                rows_in[t].append(j)
                cols_s[t].append(j)
            else:
                border_in.append(j)
                owner = ref.constraint.edge.nodes[0]
                cols_s[node_pos[id(owner)]].append(j)

        self.border = [("eq", i) for i in border_eq] + [("in", j) for j in border_in]
        self.dim_s = len(self.border)
        if self.dim_s > SCHUR_DIM_CAP:
            raise StructureError(
                f"Schur complement dimension {self.dim_s} exceeds the "
                f"{SCHUR_DIM_CAP} cap; aggregate the graph or repartition")
        self.border_global = np.array(
            [(n + m_in + idx) if kind == "eq" else (n + m_in + m_eq + idx)
             for kind, idx in self.border], dtype=int)

        self.cols_x = cols_x
        self.cols_s = [sorted(s) for s in cols_s]
        self.rows_eq = rows_eq
        self.rows_in = rows_in

        self.idx_w: list[np.ndarray] = []
        self.k0: list[sp.csr_matrix] = []
        self.primal_sizes: list[tuple[int, int, int, int]] = []
        b_entries: list[list[tuple[int, int, float]]] = [[] for _ in self.nodes]

        x_local = {}
        s_local: list[dict[int, int]] = []
        for t in range(len(self.nodes)):
            cx, cs = cols_x[t], self.cols_s[t]
            re, ri = rows_eq[t], rows_in[t]
            nx, ns, ne, ni = len(cx), len(cs), len(re), len(ri)
            self.primal_sizes.append((nx, ns, ne, ni))
            idx = np.concatenate([
                np.asarray(cx, dtype=int),
                n + np.asarray(cs, dtype=int),
                n + m_in + np.asarray(re, dtype=int),
                n + m_in + m_eq + np.asarray(ri, dtype=int),
            ]) if nx + ns + ne + ni else np.zeros(0, dtype=int)
            self.idx_w.append(idx)
            for p, gi in enumerate(cx):
                x_local[gi] = (t, p)
            s_map = {j: p for p, j in enumerate(cs)}
            s_local.append(s_map)

            h_tt = prob.hessian[cx, :][:, cx] if nx else sp.csr_matrix((0, 0))
            a_e = prob.a_eq[re, :][:, cx] if ne and nx else sp.csr_matrix((ne, nx))
            a_i = prob.a_in[ri, :][:, cx] if ni and nx else sp.csr_matrix((ni, nx))
            coupling = sp.coo_matrix(
                ([-1.0] * ni, ([r for r in range(ni)], [s_map[j] for j in ri])),
                shape=(ni, ns)) if ni else sp.csr_matrix((ni, ns))
            k0 = sp.bmat([
                [h_tt, sp.csr_matrix((nx, ns)), a_e.T, a_i.T],
                [sp.csr_matrix((ns, nx)), sp.csr_matrix((ns, ns)),
                 sp.csr_matrix((ns, ne)), coupling.T],
                [a_e, sp.csr_matrix((ne, ns)), sp.csr_matrix((ne, ne)),
                 sp.csr_matrix((ne, ni))],
                [a_i, coupling, sp.csr_matrix((ni, ne)), sp.csr_matrix((ni, ni))],
            ], format="csr") if nx + ns + ne + ni else sp.csr_matrix((0, 0))
            self.k0.append(k0)

        for b, (kind, idx) in enumerate(self.border):
            row = (prob.a_eq if kind == "eq" else prob.a_in).getrow(idx)
            for gi, val in zip(row.indices, row.data):
                t, p = x_local[gi]
                b_entries[t].append((p, b, val))
            if kind == "in":
                owner = node_pos[id(qp.in_rows[prob.in_src[idx]].constraint.edge.nodes[0])]
                p = len(cols_x[owner]) + s_local[owner][idx]
                b_entries[owner].append((p, b, -1.0))

        self.b: list[sp.csr_matrix] = []
        for t in range(len(self.nodes)):
            nw = self.idx_w[t].size
            if b_entries[t]:
                rows, cols, vals = zip(*b_entries[t])
                self.b.append(sp.coo_matrix((vals, (rows, cols)),
                                            shape=(nw, self.dim_s)).tocsr())
            else:
                self.b.append(sp.csr_matrix((nw, self.dim_s)))

        covered = np.concatenate([*self.idx_w, self.border_global]) \
            if self.idx_w or self.dim_s else np.zeros(0, dtype=int)
        if covered.size != self.total_dim or np.unique(covered).size != self.total_dim:
            raise StructureError("node blocks do not partition the KKT system")

    def diag_vector(self, t: int, d_x: np.ndarray, d_s: np.ndarray, delta: float) -> np.ndarray:
        nx, ns, ne, ni = self.primal_sizes[t]
        return np.concatenate([
            d_x[self.cols_x[t]] + delta if nx else np.zeros(0),
            d_s[self.cols_s[t]] + delta if ns else np.zeros(0),
            np.zeros(ne + ni),
        ])


def _factor_blocks(structure: _Structure, k_mats: list[sp.csr_matrix]):
    lus = []
    for t, k in enumerate(k_mats):
        if k.shape[0] == 0:
            lus.append(None)
            continue
        try:
            lus.append(spla.splu(k.tocsc()))
        except RuntimeError as exc:
            raise RankError(
                f"node block {structure.nodes[t].name!r} is singular: {exc}") from exc
    return lus


def _schur_matrix(structure: _Structure, lus) -> np.ndarray:
    dim = structure.dim_s
    s = np.zeros((dim, dim))
    for t, b in enumerate(structure.b):
        if b.nnz == 0 or lus[t] is None:
            continue
        cols = np.unique(b.tocoo().col)
        bd = b[:, cols].toarray()
        x = lus[t].solve(bd)
        s[np.ix_(cols, cols)] -= bd.T @ x
    return s


RCOND_MIN = 1e-12


def _factor_schur(s: np.ndarray, check_rcond: bool = False):
    if s.shape[0] == 0:
        return None
    anorm = float(np.max(np.sum(np.abs(s), axis=0)))
    ldl, piv, info = lapack.dsytrf(s, lower=1)
    if info != 0:
        raise RankError(
            "Schur complement is singular; the link constraints are linearly "
            "dependent at this level")
    if check_rcond and anorm > 0.0:
        # duplicate links leave S exactly rank-deficient but rounding in the
        # elimination can hide the zero pivot from dsytrf
        rcond, cinfo = lapack.dsycon(ldl, piv, anorm, lower=1)
        if cinfo == 0 and rcond < RCOND_MIN:
            raise RankError(
                f"Schur complement is numerically singular (rcond {rcond:.1e}); "
                "the link constraints are linearly dependent at this level")
    return ldl, piv


def _solve_schur(factor, rhs: np.ndarray) -> np.ndarray:
    if factor is None:
        return np.zeros(0)
    ldl, piv = factor
    sol, info = lapack.dsytrs(ldl, piv, rhs, lower=1)
    if info != 0:
        raise RankError("Schur complement backsolve failed")
    return sol


@dataclass
class KKTBlocks:
    """Per-node KKT blocks and the link border at a fixed iterate.

    ``k_matrices[t]`` couples node t's variables, its slacks, and its row
    duals; ``b_matrices[t]`` carries the link-constraint coefficients hitting
    that block.  ``r_nodes`` / ``r_link`` are KKT residuals, so the Newton
    step solves K dw + B dl = -r_node, sum B' dw = -r_link.
    """

    nodes: tuple[Node, ...]
    k_matrices: tuple[sp.csr_matrix, ...]
    b_matrices: tuple[sp.csr_matrix, ...]
    r_nodes: tuple[np.ndarray, ...]
    r_link: np.ndarray
    link_count: int
    regularization: float
    _structure: _Structure

    @property
    def dim_s(self) -> int:
        return self.r_link.size


def _residual_vectors(prob: PreparedQP, state: _State) -> np.ndarray:
    """Raw KKT residuals [r_dx, r_ds, r_eq, r_in] at a state."""
    flb, fub = np.isfinite(prob.lb), np.isfinite(prob.ub)
    flo, fup = np.isfinite(prob.low), np.isfinite(prob.up)
    r_dx = (prob.hessian @ state.x + prob.c + prob.a_eq.T @ state.le
            + prob.a_in.T @ state.li
            - np.where(flb, state.zxl, 0.0) + np.where(fub, state.zxu, 0.0))
    r_ds = -state.li - np.where(flo, state.zsl, 0.0) + np.where(fup, state.zsu, 0.0)
    r_eq = prob.a_eq @ state.x - prob.b_eq
    r_in = (prob.a_in @ state.x - state.s) if prob.num_in else np.zeros(0)
    return np.concatenate([r_dx, r_ds, r_eq, r_in])


def _barrier_diagonals(prob: PreparedQP, state: _State) -> tuple[np.ndarray, np.ndarray]:
    flb, fub = np.isfinite(prob.lb), np.isfinite(prob.ub)
    flo, fup = np.isfinite(prob.low), np.isfinite(prob.up)
    gxl = np.where(flb, state.x - prob.lb, np.inf)
    gxu = np.where(fub, prob.ub - state.x, np.inf)
    gsl = np.where(flo, state.s - prob.low, np.inf)
    gsu = np.where(fup, prob.up - state.s, np.inf)
    if np.any(gxl[flb] <= 0) or np.any(gxu[fub] <= 0) \
            or np.any(gsl[flo] <= 0) or np.any(gsu[fup] <= 0):
        raise OptionError("iterate must be strictly interior to all bounds")
    d_x = (np.where(flb, state.zxl / np.where(flb, gxl, 1.0), 0.0)
           + np.where(fub, state.zxu / np.where(fub, gxu, 1.0), 0.0))
    d_s = (np.where(flo, state.zsl / np.where(flo, gsl, 1.0), 0.0)
           + np.where(fup, state.zsu / np.where(fup, gsu, 1.0), 0.0))
    return d_x, d_s


def _state_from_iterate(prob: PreparedQP, iterate) -> _State:
    state = _interior_start(prob)
    if iterate is None:
        return state
    if isinstance(iterate, Solution):
        info = iterate.info
        lam_eq = np.asarray(info["lam_eq"], dtype=float)
        lam_in = np.asarray(info["lam_in"], dtype=float)
        z_l = np.asarray(info["z_lower"], dtype=float)
        z_u = np.asarray(info["z_upper"], dtype=float)
        state.x = np.asarray(info["x"], dtype=float).copy()
        state.s = prob.a_in @ state.x if prob.num_in else np.zeros(0)
        le = np.zeros(prob.num_eq)
        for i, (kind, idx) in enumerate(prob.eq_src):
            if kind == "eq":
                le[i] = lam_eq[idx]
            elif kind == "din":
                le[i] = lam_in[idx]
            else:  # fixed variable row: dual was reported as a reduced cost
                le[i] = z_u[idx] - z_l[idx]
        state.le = le
        state.li = lam_in[prob.in_src] if prob.num_in else np.zeros(0)
        state.zxl = z_l.copy()
        state.zxu = z_u.copy()
        state.zsl = np.maximum(-state.li, 0.0)
        state.zsu = np.maximum(state.li, 0.0)
        return state
    values = dict(iterate)
    x = state.x.copy()
    for i, (_, var) in enumerate(prob.qp.var_map):
        if var in values:
            x[i] = float(values[var])
    state.x = x
    state.s = prob.a_in @ x if prob.num_in else np.zeros(0)
    low, up = prob.low, prob.up
    state.s = np.where(np.isfinite(low), np.maximum(state.s, low + 1e-8), state.s)
    state.s = np.where(np.isfinite(up), np.minimum(state.s, up - 1e-8), state.s)
    return state


def assemble_blocks(graph: Graph, iterate=None, regularization: float = 0.0) -> KKTBlocks:
    """Build the node-bordered KKT blocks of a flat graph at an iterate.

    ``iterate`` may be None (declared starts, pushed interior where bounded),
    a {Variable: value} mapping, or a prior Solution.  The iterate must be
    strictly interior to every finite bound.
    """
    qp = flatten(graph)
    prob = prepare(qp)
    structure = _Structure(prob, graph)
    state = _state_from_iterate(prob, iterate)
    d_x, d_s = _barrier_diagonals(prob, state)
    r_full = _residual_vectors(prob, state)

    k_mats = []
    for t in range(len(structure.nodes)):
        k0 = structure.k0[t]
        if k0.shape[0]:
            k_mats.append((k0 + sp.diags(
                structure.diag_vector(t, d_x, d_s, regularization))).tocsr())
        else:
            k_mats.append(k0)
    r_nodes = tuple(r_full[structure.idx_w[t]] for t in range(len(structure.nodes)))
    r_link = r_full[structure.border_global] if structure.dim_s else np.zeros(0)
    return KKTBlocks(nodes=tuple(structure.nodes), k_matrices=tuple(k_mats),
                     b_matrices=tuple(structure.b), r_nodes=r_nodes,
                     r_link=r_link, link_count=structure.dim_s,
                     regularization=regularization, _structure=structure)


def schur_solve(blocks: KKTBlocks) -> tuple[list[np.ndarray], np.ndarray]:
    """One Newton step from assembled blocks: returns (dw per node, dlambda).

    Raises RankError when a node block or the Schur complement is singular.
    """
    structure = blocks._structure
    lus = _factor_blocks(structure, list(blocks.k_matrices))
    s = _schur_matrix(structure, lus)
    factor = _factor_schur(s, check_rcond=True)

    acc = np.zeros(structure.dim_s)
    ys = []
    for t, lu in enumerate(lus):
        rhs_t = -blocks.r_nodes[t]
        y = lu.solve(rhs_t) if lu is not None else np.zeros(0)
        ys.append(y)
        if blocks.b_matrices[t].nnz:
            acc += blocks.b_matrices[t].T @ y
    d_lambda = _solve_schur(factor, -blocks.r_link - acc)
    d_w = []
    for t, lu in enumerate(lus):
        if lu is None:
            d_w.append(np.zeros(0))
            continue
        rhs_t = -blocks.r_nodes[t]
        if blocks.b_matrices[t].nnz and d_lambda.size:
            rhs_t = rhs_t - blocks.b_matrices[t] @ d_lambda
        d_w.append(lu.solve(rhs_t))
    return d_w, d_lambda


class SchurKKT:
    """IPM linear-algebra backend: node-block elimination per iteration."""

    def __init__(self, prob: PreparedQP, structure: _Structure, options: SolverOptions):
        self.prob = prob
        self.st = structure
        self._lus = None
        self._schur_factor = None
        self._first_factor = True
        self._k_cur: list[sp.csr_matrix] = []
        self.diagnostics = {"dim_s": structure.dim_s, "schur_asymmetry": 0.0}

    def factor(self, d_x: np.ndarray, d_s: np.ndarray, delta: float) -> None:
        st = self.st
        k_mats = []
        for t in range(len(st.nodes)):
            k0 = st.k0[t]
            if k0.shape[0]:
                k_mats.append((k0 + sp.diags(st.diag_vector(t, d_x, d_s, delta))).tocsr())
            else:
                k_mats.append(k0)
        try:
            # node-block failures are retryable: regularization lands on these
            # diagonals, so the caller's delta bump can repair them
            lus = _factor_blocks(st, k_mats)
        except RankError as exc:
            raise FactorizationError(str(exc)) from exc
        s = _schur_matrix(st, lus)
        if s.size:
            asym = float(np.max(np.abs(s - s.T)))
            self.diagnostics["schur_asymmetry"] = max(
                self.diagnostics["schur_asymmetry"], asym)
        # a singular Schur complement means dependent link rows, which no
        # amount of node regularization fixes; let RankError escape.  The
        # rcond probe runs once, at the well-scaled interior start.
        self._schur_factor = _factor_schur(s, check_rcond=self._first_factor)
        self._first_factor = False
        self._lus = lus
        self._k_cur = k_mats

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        st = self.st
        acc = np.zeros(st.dim_s)
        w_rhs = []
        for t, lu in enumerate(self._lus):
            r = rhs[st.idx_w[t]]
            w_rhs.append(r)
            if lu is not None and st.b[t].nnz:
                acc += st.b[t].T @ lu.solve(r)
        border_rhs = rhs[st.border_global] if st.dim_s else np.zeros(0)
        d_lambda = _solve_schur(self._schur_factor, border_rhs - acc)
        out = np.empty(st.total_dim)
        for t, lu in enumerate(self._lus):
            if lu is None:
                continue
            r = w_rhs[t]
            if st.b[t].nnz and d_lambda.size:
                r = r - st.b[t] @ d_lambda
            out[st.idx_w[t]] = lu.solve(r)
        if st.dim_s:
            out[st.border_global] = d_lambda
        return out

    def apply(self, vec: np.ndarray) -> np.ndarray:
        st = self.st
        out = np.zeros(st.total_dim)
        lam = vec[st.border_global] if st.dim_s else np.zeros(0)
        for t, k in enumerate(self._k_cur):
            if k.shape[0] == 0:
                continue
            w = vec[st.idx_w[t]]
            contrib = k @ w
            if st.b[t].nnz and lam.size:
                contrib = contrib + st.b[t] @ lam
            out[st.idx_w[t]] += contrib
            if st.b[t].nnz:
                out[st.border_global] += st.b[t].T @ w
        return out


def solve_structured(graph: Graph, options: SolverOptions | None = None) -> Solution:
    """Interior-point solve with per-node factorization and a link-border
    Schur complement.  The graph must have no subgraphs (aggregate first);
    the iterate trajectory matches solve_monolithic up to roundoff."""
    options = options or SolverOptions()
    qp = flatten(graph)
    prob = prepare(qp)
    structure = _Structure(prob, graph)
    backend = SchurKKT(prob, structure, options)
    state, status, info = _ipm_loop(prob, options, backend)
    solution = build_solution(prob, state, status, info)
    solution.info["method"] = "schur"
    solution.info["dim_s"] = structure.dim_s
    return solution
