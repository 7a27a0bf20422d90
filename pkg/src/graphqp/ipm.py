"""Primal-dual interior-point solver for flattened convex QPs.

Long-step path following with a single centrality corrector per iteration.
Variable bounds and inequality rows are handled through slacks inside the
barrier; there is no active-set phase.  Each iteration factorizes one
symmetric indefinite augmented system

    [ H + D_x            A_eq'   A_in' ] [dx ]   [rhs_x ]
    [         D_s               -I     ] [ds ] = [rhs_s ]
    [ A_eq                             ] [dle]   [rhs_eq]
    [ A_in       -I                    ] [dli]   [rhs_in]

where D_x, D_s collect the barrier terms of the active bounds.  The linear
algebra sits behind a small backend interface so a structure-exploiting
factorization can replace the monolithic one without touching the algorithm;
runs are deterministic and bitwise reproducible.

Dual convention: stationarity is grad f + J' lambda = 0, so multipliers of
"<=" rows are nonnegative and multipliers of ">=" rows are nonpositive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoundError, OptionError
from .flatten import FlatQP, flatten
from .model import Graph, LinkConstraint, NodeConstraint, Variable

Status = Literal["optimal", "infeasible", "iteration_limit", "numerical_error"]

REG_MAX = 1e-4
GAP_FLOOR = 1e-16
SIGMA_MIN = 0.05
SIGMA_MAX = 0.95
STAGNATION_WINDOW = 20


@dataclass
class SolverOptions:
    """Interior-point options; defaults suit desk-scale problems."""

    tol: float = 1e-8
    max_iter: int = 200
    regularization: float = 1e-8
    fraction_to_boundary: float = 0.995

    def __post_init__(self):
        if not (self.tol > 0):
            raise OptionError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise OptionError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.regularization < 0:
            raise OptionError(
                f"regularization must be nonnegative, got {self.regularization}")
        if not (0 < self.fraction_to_boundary < 1):
            raise OptionError("fraction_to_boundary must lie strictly inside (0, 1), "
                              f"got {self.fraction_to_boundary}")


class KKTResiduals(NamedTuple):
    stationarity: float
    primal_feasibility: float
    complementarity: float


@dataclass
class Solution:
    """Solver result keyed by the originating model objects."""

    status: Status
    objective: float
    primal: dict[Variable, float]
    duals_node: dict[NodeConstraint, float]
    duals_link: dict[LinkConstraint, float]
    reduced_costs: dict[Variable, float]
    iterations: int
    info: dict = field(default_factory=dict)

    def value(self, var: Variable) -> float:
        return self.primal[var]

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


class FactorizationError(Exception):
    """Internal: augmented-system factorization failed at current delta."""


# ---------------------------------------------------------------------------
# preprocessing


@dataclass
class PreparedQP:
    """FlatQP normalized for the barrier: fixed variables and degenerate
    interval rows re-expressed as equalities, maps kept for dual recovery."""

    qp: FlatQP
    hessian: sp.csr_matrix
    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_in: sp.csr_matrix
    low: np.ndarray
    up: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray
    eq_src: list[tuple[str, int]]
    in_src: list[int]

    @property
    def num_vars(self) -> int:
        return self.qp.num_vars

    @property
    def num_eq(self) -> int:
        return self.a_eq.shape[0]

    @property
    def num_in(self) -> int:
        return self.a_in.shape[0]

    @property
    def total_dim(self) -> int:
        return self.num_vars + 2 * self.num_in + self.num_eq


def prepare(qp: FlatQP) -> PreparedQP:
    n = qp.num_vars
    lb = qp.lb.copy()
    ub = qp.ub.copy()
    if np.any(lb > ub):
        bad = int(np.argmax(lb > ub))
        raise BoundError(f"variable {bad} has lower bound above upper bound")
    x0 = qp.x0.copy()

    eq_parts = [qp.a_eq]
    beq_parts = [qp.b_eq]
    eq_src: list[tuple[str, int]] = [("eq", i) for i in range(qp.num_eq)]

    fixed = np.where(np.isfinite(lb) & (lb == ub))[0]
    if fixed.size:
        rows = sp.coo_matrix((np.ones(fixed.size), (np.arange(fixed.size), fixed)),
                             shape=(fixed.size, n)).tocsr()
        eq_parts.append(rows)
        beq_parts.append(lb[fixed])
        eq_src.extend(("fix", int(i)) for i in fixed)
        x0[fixed] = lb[fixed]
        lb[fixed] = -math.inf
        ub[fixed] = math.inf

    keep: list[int] = []
    degen: list[int] = []
    for i in range(qp.num_in):
        lo, hi = qp.b_in_low[i], qp.b_in_up[i]
        if math.isfinite(lo) and lo == hi:
            degen.append(i)
        else:
            keep.append(i)
    if degen:
        eq_parts.append(qp.a_in[degen, :])
        beq_parts.append(qp.b_in_low[degen])
        eq_src.extend(("din", i) for i in degen)

    a_eq = sp.vstack(eq_parts, format="csr") if eq_parts else sp.csr_matrix((0, n))
    b_eq = np.concatenate(beq_parts) if beq_parts else np.zeros(0)
    a_in = qp.a_in[keep, :].tocsr() if keep else sp.csr_matrix((0, n))
    return PreparedQP(qp=qp, hessian=qp.hessian, c=qp.c,
                      a_eq=a_eq, b_eq=b_eq, a_in=a_in,
                      low=qp.b_in_low[keep], up=qp.b_in_up[keep],
                      lb=lb, ub=ub, x0=x0, eq_src=eq_src, in_src=keep)


# ---------------------------------------------------------------------------
# monolithic KKT backend


class MonolithicKKT:
    """One sparse LU factorization of the full augmented system."""

    def __init__(self, prob: PreparedQP, options: SolverOptions):
        self.prob = prob
        m_in = prob.num_in
        self._neg_i = -sp.identity(m_in, format="csr") if m_in else sp.csr_matrix((0, 0))
        self._aeq = prob.a_eq
        self._ain = prob.a_in
        self.matrix: sp.csc_matrix | None = None
        self._lu = None
        self.diagnostics: dict = {}

    def factor(self, d_x: np.ndarray, d_s: np.ndarray, delta: float) -> None:
        prob = self.prob
        top = (prob.hessian + sp.diags(d_x + delta, format="csr")).tocsr()
        d_s_block = sp.diags(d_s + delta, format="csr") if d_s.size else sp.csr_matrix((0, 0))
        m = sp.bmat([
            [top, None, self._aeq.T, self._ain.T],
            [None, d_s_block, None, self._neg_i],
            [self._aeq, None, None, None],
            [self._ain, self._neg_i, None, None],
        ], format="csc")
        try:
            self._lu = spla.splu(m)
        except RuntimeError as exc:
            raise FactorizationError(str(exc)) from exc
        self.matrix = m

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(rhs)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


# ---------------------------------------------------------------------------
# the path-following driver


class _State:
    __slots__ = ("x", "s", "le", "li", "zxl", "zxu", "zsl", "zsu")

    def __init__(self, x, s, le, li, zxl, zxu, zsl, zsu):
        self.x, self.s, self.le, self.li = x, s, le, li
        self.zxl, self.zxu, self.zsl, self.zsu = zxl, zxu, zsl, zsu


def _interior_start(prob: PreparedQP) -> _State:
    lb, ub, low, up = prob.lb, prob.ub, prob.low, prob.up
    x = prob.x0.copy()
    both = np.isfinite(lb) & np.isfinite(ub)
    push = np.where(both, np.minimum(1.0, 0.25 * (ub - lb)), 1.0)
    x = np.where(np.isfinite(lb), np.maximum(x, lb + push), x)
    x = np.where(np.isfinite(ub), np.minimum(x, ub - push), x)
    s = prob.a_in @ x if prob.num_in else np.zeros(0)
    both_s = np.isfinite(low) & np.isfinite(up)
    push_s = np.where(both_s, np.minimum(1.0, 0.25 * (up - low)), 1.0)
    s = np.where(np.isfinite(low), np.maximum(s, low + push_s), s)
    s = np.where(np.isfinite(up), np.minimum(s, up - push_s), s)
    z = lambda mask: np.where(mask, 1.0, 0.0)
    return _State(x=x, s=s,
                  le=np.zeros(prob.num_eq), li=np.zeros(prob.num_in),
                  zxl=z(np.isfinite(lb)), zxu=z(np.isfinite(ub)),
                  zsl=z(np.isfinite(low)), zsu=z(np.isfinite(up)))


def _gaps(state: _State, prob: PreparedQP):
    """Distances to the finite bounds; +inf where no bound exists."""
    gxl = np.where(np.isfinite(prob.lb), state.x - prob.lb, np.inf)
    gxu = np.where(np.isfinite(prob.ub), prob.ub - state.x, np.inf)
    gsl = np.where(np.isfinite(prob.low), state.s - prob.low, np.inf)
    gsu = np.where(np.isfinite(prob.up), prob.up - state.s, np.inf)
    return gxl, gxu, gsl, gsu


def _max_step(values: np.ndarray, deltas: np.ndarray) -> float:
    """Largest alpha with values + alpha * deltas >= 0.

    Entries already at zero are pinned by their barrier diagonal and do
    not block the step; the caller clips the updated iterate back into
    the box to absorb their microscopic drift.
    """
    mask = (deltas < 0) & (values > 0)
    if not np.any(mask):
        return math.inf
    return float(np.min(-values[mask] / deltas[mask]))


def _ipm_loop(prob: PreparedQP, options: SolverOptions, backend) -> tuple[_State, Status, dict]:
    n, m_in, m_eq = prob.num_vars, prob.num_in, prob.num_eq
    info: dict = {"mu_history": [], "residual_history": [], "merit_history": [],
                  "solve_residuals": [], "message": ""}
    state = _interior_start(prob)
    if prob.total_dim == 0:
        info["iterations"] = 0
        return state, "optimal", info

    flb, fub = np.isfinite(prob.lb), np.isfinite(prob.ub)
    flo, fup = np.isfinite(prob.low), np.isfinite(prob.up)
    pairs = int(flb.sum() + fub.sum() + flo.sum() + fup.sum())
    tau = options.fraction_to_boundary
    h = prob.hessian

    # residual scales make the stopping test relative: Schwarz subproblems
    # carry dual penalties that inflate c by orders of magnitude
    def _finite_max(*arrays):
        best = 0.0
        for arr in arrays:
            finite = arr[np.isfinite(arr)]
            if finite.size:
                best = max(best, float(np.max(np.abs(finite))))
        return best

    scale_d = 1.0 + _inf_norm(prob.c) + (float(np.max(np.abs(h.data))) if h.nnz else 0.0)
    scale_p = 1.0 + _finite_max(prob.b_eq, prob.lb, prob.ub, prob.low, prob.up)
    info["scales"] = (scale_d, scale_p)

    status: Status = "iteration_limit"
    iteration = 0

    def _stalled_infeasible() -> bool:
        # infeasibility signature: mu diverges while the primal residual
        # never drops below its floor.  Only the finite prefix of the run
        # is trusted; entries after breakdown carry garbage values.
        feas_seq: list[float] = []
        mu_seq: list[float] = []
        for (st_r, fe, co), m in zip(info["residual_history"], info["mu_history"]):
            if not math.isfinite(st_r + fe + co + m):
                break
            feas_seq.append(fe)
            mu_seq.append(m)
        if len(feas_seq) < 2:
            return False
        return (min(feas_seq) > 1e3 * options.tol * scale_p
                and max(mu_seq) > 10.0 * max(mu_seq[0], options.tol))

    # overflow in diverging iterates is expected and caught by the
    # finiteness check below; silence the intermediate warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for iteration in range(options.max_iter):
            gxl, gxu, gsl, gsu = _gaps(state, prob)
            r_dx = (h @ state.x + prob.c + prob.a_eq.T @ state.le
                    + prob.a_in.T @ state.li
                    - np.where(flb, state.zxl, 0.0) + np.where(fub, state.zxu, 0.0))
            r_ds = (-state.li - np.where(flo, state.zsl, 0.0)
                    + np.where(fup, state.zsu, 0.0))
            r_eq = prob.a_eq @ state.x - prob.b_eq
            r_in = (prob.a_in @ state.x - state.s) if m_in else np.zeros(0)

            gxl_f = np.where(flb, gxl, 0.0)
            gxu_f = np.where(fub, gxu, 0.0)
            gsl_f = np.where(flo, gsl, 0.0)
            gsu_f = np.where(fup, gsu, 0.0)
            cxl = state.zxl * gxl_f
            cxu = state.zxu * gxu_f
            csl = state.zsl * gsl_f
            csu = state.zsu * gsu_f
            mu = float((cxl.sum() + cxu.sum() + csl.sum() + csu.sum()) / pairs) if pairs else 0.0

            stat = max(_inf_norm(r_dx), _inf_norm(r_ds))
            feas = max(_inf_norm(r_eq), _inf_norm(r_in))
            comp = max(_inf_norm(cxl), _inf_norm(cxu), _inf_norm(csl), _inf_norm(csu))
            info["mu_history"].append(mu)
            info["residual_history"].append((stat, feas, comp))
            info["merit_history"].append(prob.qp.objective_value(state.x))

            if (stat <= options.tol * scale_d and feas <= options.tol * scale_p
                    and comp <= options.tol * scale_d):
                status = "optimal"
                break
            if not (np.all(np.isfinite(state.x)) and math.isfinite(stat + feas + comp)):
                if _stalled_infeasible():
                    status = "infeasible"
                    info["message"] = ("primal residual stalled while multipliers "
                                       "diverged; constraints are inconsistent")
                else:
                    status = "numerical_error"
                    info["message"] = "iterates lost finiteness"
                break
            if iteration >= STAGNATION_WINDOW:
                old_stat, old_feas, _ = info["residual_history"][iteration - STAGNATION_WINDOW]
                if feas > 1e3 * options.tol * scale_p and feas >= 0.9 * old_feas:
                    status = "infeasible"
                    info["message"] = ("primal residual stagnated over "
                                       f"{STAGNATION_WINDOW} iterations at {feas:.3e}")
                    break

            # floored gaps guard the divisions; a gap ground to zero by many
            # near-unit steps otherwise turns the diagonal into inf/nan
            gxl_d = np.where(flb, np.maximum(gxl, GAP_FLOOR), 1.0)
            gxu_d = np.where(fub, np.maximum(gxu, GAP_FLOOR), 1.0)
            gsl_d = np.where(flo, np.maximum(gsl, GAP_FLOOR), 1.0)
            gsu_d = np.where(fup, np.maximum(gsu, GAP_FLOOR), 1.0)

            d_x = (np.where(flb, state.zxl / gxl_d, 0.0)
                   + np.where(fub, state.zxu / gxu_d, 0.0))
            d_s = (np.where(flo, state.zsl / gsl_d, 0.0)
                   + np.where(fup, state.zsu / gsu_d, 0.0))

            delta = options.regularization
            solved = False
            while True:
                try:
                    backend.factor(d_x, d_s, delta)
                    solved = True
                    break
                except FactorizationError:
                    if delta == 0.0:
                        delta = 1e-10
                    delta *= 10.0
                    if delta > REG_MAX:
                        break
            if not solved:
                status = "numerical_error"
                info["message"] = ("augmented system factorization failed at "
                                   f"regularization {REG_MAX:g}")
                break

            def build_rhs(target_l, target_u, target_sl, target_su):
                rhs_x = -r_dx.copy()
                rhs_x -= np.where(flb, target_l / gxl_d, 0.0)
                rhs_x += np.where(fub, target_u / gxu_d, 0.0)
                rhs_s = -r_ds.copy()
                rhs_s -= np.where(flo, target_sl / gsl_d, 0.0)
                rhs_s += np.where(fup, target_su / gsu_d, 0.0)
                return np.concatenate([rhs_x, rhs_s, -r_eq, -r_in])

            def solve_refined(rhs):
                delta_vec = backend.solve(rhs)
                res = rhs - backend.apply(delta_vec)
                rel = _inf_norm(res) / (1.0 + _inf_norm(rhs))
                if rel > 1e-11:
                    delta_vec = delta_vec + backend.solve(res)
                    res = rhs - backend.apply(delta_vec)
                    rel = _inf_norm(res) / (1.0 + _inf_norm(rhs))
                return delta_vec, rel

            # predictor (affine scaling) step
            rhs_aff = build_rhs(cxl, cxu, csl, csu)
            sol_aff, rel_aff = solve_refined(rhs_aff)
            dx_a = sol_aff[:n]
            ds_a = sol_aff[n:n + m_in]

            dzxl_a = np.where(flb, -(cxl + state.zxl * dx_a) / gxl_d, 0.0)
            dzxu_a = np.where(fub, (-cxu + state.zxu * dx_a) / gxu_d, 0.0)
            dzsl_a = np.where(flo, -(csl + state.zsl * ds_a) / gsl_d, 0.0)
            dzsu_a = np.where(fup, (-csu + state.zsu * ds_a) / gsu_d, 0.0)

            if pairs:
                ap = min(1.0, _max_step(gxl[flb], dx_a[flb]), _max_step(gxu[fub], -dx_a[fub]),
                         _max_step(gsl[flo], ds_a[flo]), _max_step(gsu[fup], -ds_a[fup]))
                ad = min(1.0, _max_step(state.zxl[flb], dzxl_a[flb]),
                         _max_step(state.zxu[fub], dzxu_a[fub]),
                         _max_step(state.zsl[flo], dzsl_a[flo]),
                         _max_step(state.zsu[fup], dzsu_a[fup]))
                mu_aff = ((np.where(flb, (state.zxl + ad * dzxl_a) * (gxl_f + ap * dx_a), 0.0).sum()
                           + np.where(fub, (state.zxu + ad * dzxu_a) * (gxu_f - ap * dx_a), 0.0).sum()
                           + np.where(flo, (state.zsl + ad * dzsl_a) * (gsl_f + ap * ds_a), 0.0).sum()
                           + np.where(fup, (state.zsu + ad * dzsu_a) * (gsu_f - ap * ds_a), 0.0).sum())
                          / pairs)
                ratio = min(1.0, max(0.0, mu_aff / mu)) if mu > 0 else 0.0
                sigma = min(SIGMA_MAX, max(SIGMA_MIN, ratio ** 3))
                target = sigma * mu
                # single centrality corrector: second-order terms from the predictor
                rhs_cor = build_rhs(cxl - target + np.where(flb, dx_a * dzxl_a, 0.0),
                                    cxu - target + np.where(fub, -dx_a * dzxu_a, 0.0),
                                    csl - target + np.where(flo, ds_a * dzsl_a, 0.0),
                                    csu - target + np.where(fup, -ds_a * dzsu_a, 0.0))
                sol, rel = solve_refined(rhs_cor)
                info["solve_residuals"].append(max(rel_aff, rel))
            else:
                sigma = 0.0
                target = 0.0
                sol, rel = sol_aff, rel_aff
                info["solve_residuals"].append(rel)

            dx = sol[:n]
            ds = sol[n:n + m_in]
            dle = sol[n + m_in:n + m_in + m_eq]
            dli = sol[n + m_in + m_eq:]

            if pairs:
                tl = cxl - target + np.where(flb, dx_a * dzxl_a, 0.0)
                tu = cxu - target + np.where(fub, -dx_a * dzxu_a, 0.0)
                tsl = csl - target + np.where(flo, ds_a * dzsl_a, 0.0)
                tsu = csu - target + np.where(fup, -ds_a * dzsu_a, 0.0)
            else:
                tl = tu = tsl = tsu = None
            dzxl = np.where(flb, -(tl + state.zxl * dx) / gxl_d, 0.0) if pairs else np.zeros(n)
            dzxu = np.where(fub, (-tu + state.zxu * dx) / gxu_d, 0.0) if pairs else np.zeros(n)
            dzsl = np.where(flo, -(tsl + state.zsl * ds) / gsl_d, 0.0) if pairs else np.zeros(m_in)
            dzsu = np.where(fup, (-tsu + state.zsu * ds) / gsu_d, 0.0) if pairs else np.zeros(m_in)

            if pairs:
                alpha_p = min(1.0, tau * min(_max_step(gxl[flb], dx[flb]),
                                             _max_step(gxu[fub], -dx[fub]),
                                             _max_step(gsl[flo], ds[flo]),
                                             _max_step(gsu[fup], -ds[fup])))
                alpha_d = min(1.0, tau * min(_max_step(state.zxl[flb], dzxl[flb]),
                                             _max_step(state.zxu[fub], dzxu[fub]),
                                             _max_step(state.zsl[flo], dzsl[flo]),
                                             _max_step(state.zsu[fup], dzsu[fup])))
            else:
                alpha_p = alpha_d = 1.0

            # clip absorbs the drift of pairs sitting exactly on their bound,
            # which _max_step no longer treats as blocking
            state.x = np.clip(state.x + alpha_p * dx, prob.lb, prob.ub)
            state.s = np.clip(state.s + alpha_p * ds, prob.low, prob.up)
            state.le = state.le + alpha_d * dle
            state.li = state.li + alpha_d * dli
            state.zxl = np.where(flb, np.maximum(state.zxl + alpha_d * dzxl, 0.0), state.zxl)
            state.zxu = np.where(fub, np.maximum(state.zxu + alpha_d * dzxu, 0.0), state.zxu)
            state.zsl = np.where(flo, np.maximum(state.zsl + alpha_d * dzsl, 0.0), state.zsl)
            state.zsu = np.where(fup, np.maximum(state.zsu + alpha_d * dzsu, 0.0), state.zsu)
        else:
            iteration = options.max_iter

    info["iterations"] = iteration if status != "iteration_limit" else options.max_iter
    if status == "iteration_limit":
        info["message"] = f"no convergence within {options.max_iter} iterations"
    info.update(getattr(backend, "diagnostics", {}))
    return state, status, info


def _inf_norm(arr: np.ndarray) -> float:
    return float(np.max(np.abs(arr))) if arr.size else 0.0


# ---------------------------------------------------------------------------
# public entry points


def solve_monolithic(problem: Graph | FlatQP, options: SolverOptions | None = None) -> Solution:
    """Solve the whole problem with one augmented-system factorization per
    iteration.  Accepts a graph (flattened internally) or a FlatQP."""
    options = options or SolverOptions()
    qp = problem if isinstance(problem, FlatQP) else flatten(problem)
    prob = prepare(qp)
    backend = MonolithicKKT(prob, options)
    state, status, info = _ipm_loop(prob, options, backend)
    return build_solution(prob, state, status, info)


def build_solution(prob: PreparedQP, state: _State, status: Status, info: dict) -> Solution:
    """Map a final iterate back onto model objects."""
    qp = prob.qp
    x = state.x
    primal = {var: float(x[i]) for i, (_, var) in enumerate(qp.var_map)}

    lam_eq = np.zeros(qp.num_eq)
    lam_in = np.zeros(qp.num_in)
    z_l = np.where(np.isfinite(prob.lb), state.zxl, 0.0).copy()
    z_u = np.where(np.isfinite(prob.ub), state.zxu, 0.0).copy()
    for value, (kind, idx) in zip(state.le, prob.eq_src):
        if kind == "eq":
            lam_eq[idx] = value
        elif kind == "din":
            lam_in[idx] = value
        else:  # fixed variable: equality dual is the negative reduced cost
            if value <= 0:
                z_l[idx] += -value
            else:
                z_u[idx] += value
    for value, idx in zip(state.li, prob.in_src):
        lam_in[idx] = value

    duals_node: dict[NodeConstraint, float] = {}
    duals_link: dict[LinkConstraint, float] = {}
    for i, ref in enumerate(qp.eq_rows):
        target = duals_node if ref.kind == "node" else duals_link
        target[ref.constraint] = float(lam_eq[i])
    for i, ref in enumerate(qp.in_rows):
        target = duals_node if ref.kind == "node" else duals_link
        target[ref.constraint] = float(lam_in[i])

    reduced = {var: float(z_l[i] - z_u[i]) for i, (_, var) in enumerate(qp.var_map)}
    sol = Solution(status=status, objective=qp.objective_value(x), primal=primal,
                   duals_node=duals_node, duals_link=duals_link,
                   reduced_costs=reduced, iterations=info.get("iterations", 0),
                   info=info)
    sol.info["x"] = x.copy()
    sol.info["lam_eq"] = lam_eq
    sol.info["lam_in"] = lam_in
    sol.info["z_lower"] = z_l
    sol.info["z_upper"] = z_u
    return sol


def kkt_residuals(qp: FlatQP, x, lam_eq=None, lam_in=None,
                  z_lower=None, z_upper=None) -> KKTResiduals:
    """Infinity norms of the first-order optimality residuals at a point.

    ``stationarity`` is grad f + J' lambda - z_lower + z_upper;
    ``primal_feasibility`` is the worst constraint or bound violation;
    ``complementarity`` pairs each multiplier with its bound gap.
    """
    x = np.asarray(x, dtype=float)
    lam_eq = np.zeros(qp.num_eq) if lam_eq is None else np.asarray(lam_eq, dtype=float)
    lam_in = np.zeros(qp.num_in) if lam_in is None else np.asarray(lam_in, dtype=float)
    z_l = np.zeros(qp.num_vars) if z_lower is None else np.asarray(z_lower, dtype=float)
    z_u = np.zeros(qp.num_vars) if z_upper is None else np.asarray(z_upper, dtype=float)

    stat_vec = qp.hessian @ x + qp.c + qp.a_eq.T @ lam_eq + qp.a_in.T @ lam_in - z_l + z_u
    stationarity = _inf_norm(stat_vec)

    feas = 0.0
    if qp.num_eq:
        feas = max(feas, _inf_norm(qp.a_eq @ x - qp.b_eq))
    if qp.num_in:
        t = qp.a_in @ x
        below = np.where(np.isfinite(qp.b_in_low), qp.b_in_low - t, 0.0)
        above = np.where(np.isfinite(qp.b_in_up), t - qp.b_in_up, 0.0)
        feas = max(feas, float(np.max(np.maximum(0.0, np.maximum(below, above)), initial=0.0)))
    below_b = np.where(np.isfinite(qp.lb), qp.lb - x, 0.0)
    above_b = np.where(np.isfinite(qp.ub), x - qp.ub, 0.0)
    feas = max(feas, float(np.max(np.maximum(0.0, np.maximum(below_b, above_b)), initial=0.0)))

    comp = 0.0
    gap_l = np.where(np.isfinite(qp.lb), x - qp.lb, 0.0)
    gap_u = np.where(np.isfinite(qp.ub), qp.ub - x, 0.0)
    comp = max(comp, _inf_norm(z_l * gap_l), _inf_norm(z_u * gap_u))
    if qp.num_in:
        t = qp.a_in @ x
        pos = np.maximum(lam_in, 0.0)
        neg = np.maximum(-lam_in, 0.0)
        gap_up = np.where(np.isfinite(qp.b_in_up), qp.b_in_up - t, 0.0)
        gap_lo = np.where(np.isfinite(qp.b_in_low), t - qp.b_in_low, 0.0)
        comp = max(comp, _inf_norm(pos * gap_up), _inf_norm(neg * gap_lo))
    return KKTResiduals(stationarity, feas, comp)


def solution_kkt_residuals(qp: FlatQP, solution: Solution) -> KKTResiduals:
    """KKT residuals of a Solution against the QP it came from."""
    return kkt_residuals(qp, solution.info["x"], solution.info.get("lam_eq"),
                         solution.info.get("lam_in"), solution.info.get("z_lower"),
                         solution.info.get("z_upper"))
