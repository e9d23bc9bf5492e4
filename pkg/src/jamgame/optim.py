"""Linear programs, matrix games and concave max-min problems on the simplex.

``lp_solve`` is a dense two-phase tableau simplex with Bland's rule. It is meant
for the small, often degenerate programs that appear in this package, where
determinism matters more than speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
from scipy import optimize

from .errors import ConvergenceError, InvalidInputError, SolverError

PIVOT_TOL = 1e-9
RANK_TOL = 1e-10
FEAS_TOL = 1e-8
SLACK_TOL = 1e-7


@dataclass
class LpProblem:
    """``min/max c.x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lower <= x <= upper``.

    ``lower`` defaults to 0 and ``upper`` to +inf; use ``-np.inf`` for free variables.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = self._rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = self._rows(self.A_eq, self.b_eq, n, "equality")
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise InvalidInputError("variable lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise InvalidInputError("infinite bound on the wrong side")
        if self.sense not in ("min", "max"):
            raise InvalidInputError(f"unknown sense {self.sense!r}")

    @staticmethod
    def _rows(A, b, n, what):
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] == 0:
            return np.zeros((0, n)), np.zeros(0)
        if A.shape[1] != n or A.shape[0] != b.size:
            raise InvalidInputError(f"{what} constraints have inconsistent dimensions")
        return A, b


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    fun: float | None = None
    ineq_duals: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    iterations: int = 0
    message: str = ""
    residuals: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class _StandardForm:
    """``min c.z`` s.t. ``A z = rhs``, ``z >= 0`` with ``x = offset + T z``."""

    def __init__(self, p: LpProblem):
        n = p.c.size
        cols, offset, ub_rows = [], np.zeros(n), []
        for j in range(n):
            lo, hi = p.lower[j], p.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    ub_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        T = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        m_ub, m_b, m_eq = p.A_ub.shape[0], len(ub_rows), p.A_eq.shape[0]
        n_slack = m_ub + m_b
        A = np.zeros((n_slack + m_eq, nz + n_slack))
        rhs = np.zeros(n_slack + m_eq)
        A[:m_ub, :nz] = p.A_ub @ T
        rhs[:m_ub] = p.b_ub - p.A_ub @ offset
        for r, (k, width) in enumerate(ub_rows):
            A[m_ub + r, k] = 1.0
            rhs[m_ub + r] = width
        A[:n_slack, nz:] = np.eye(n_slack)
        A[n_slack:, :nz] = p.A_eq @ T
        rhs[n_slack:] = p.b_eq - p.A_eq @ offset
        sign = p.c if p.sense == "min" else -p.c
        self.c = np.concatenate([sign @ T, np.zeros(n_slack)])
        self.const = float(sign @ offset)
        self.A, self.rhs, self.T, self.offset = A, rhs, T, offset
        self.m_ub, self.m_b, self.m_eq, self.nz, self.n_slack = m_ub, m_b, m_eq, nz, n_slack


def _pivot(tab, basis, r, j):
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])
    basis[r] = j


def _bland(tab, basis, cost, ncols, max_iter):
    """Run primal simplex on a canonical tableau. Returns (status, iterations)."""
    m = tab.shape[0]
    for it in range(max_iter):
        rc = cost[:ncols] - cost[basis] @ tab[:, :ncols]
        cand = np.flatnonzero(rc < -PIVOT_TOL)
        if cand.size == 0:
            return "optimal", it
        j = cand[0]
        col = tab[:, j]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        r = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(tab, basis, r, j)
    return "iteration_limit", max_iter


def _independent_rows(A, rhs):
    """Indices of a maximal independent row set, or None if the dropped rows contradict it."""
    m = A.shape[0]
    if m == 0:
        return np.arange(0)
    _, R, perm = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > RANK_TOL * max(d[0], 1.0))) if d.size else 0
    live = np.sort(perm[:rank])
    if rank < m:
        coef, *_ = np.linalg.lstsq(A[live].T, A.T, rcond=None)
        if np.abs(coef.T @ rhs[live] - rhs).max() > FEAS_TOL * max(1.0, np.abs(rhs).max()):
            return None
    return live


def lp_solve(problem: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve an LP exactly enough for certificate work; never fails silently."""
    sf = _StandardForm(problem)
    A, rhs = sf.A.copy(), sf.rhs.copy()
    m, nvar = A.shape
    flip = rhs < 0
    A[flip] *= -1
    rhs[flip] *= -1
    if max_iter is None:
        max_iter = 50 * (m + nvar) + 1000
    live = _independent_rows(A, rhs)
    if live is None:
        return LpSolution("infeasible", message="inconsistent equality constraints")
    A_full, rhs_full = A, rhs
    A, rhs = A[live], rhs[live]
    m = live.size

    # initial basis: slacks on unflipped inequality rows, artificials elsewhere
    basis = [-1] * m
    art_rows = []
    for r in range(m):
        if live[r] < sf.n_slack and not flip[live[r]]:
            basis[r] = sf.nz + r
        else:
            art_rows.append(r)
    n_art = len(art_rows)
    tab = np.zeros((m, nvar + n_art + 1))
    tab[:, :nvar] = A
    tab[:, -1] = rhs
    for k, r in enumerate(art_rows):
        tab[r, nvar + k] = 1.0
        basis[r] = nvar + k
    iters = 0
    if n_art:
        cost1 = np.zeros(nvar + n_art)
        cost1[nvar:] = 1.0
        status, it = _bland(tab, basis, cost1, nvar + n_art, max_iter)
        iters += it
        if status != "optimal":
            return LpSolution("failed", iterations=iters, message=f"phase 1 ended with {status}")
        infeas = float(cost1[basis] @ tab[:, -1])
        if infeas > FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
            return LpSolution("infeasible", iterations=iters, message=f"phase 1 residual {infeas:.3g}")
        keep = []
        for r in range(m):
            if basis[r] >= nvar:
                j = int(np.argmax(np.abs(tab[r, :nvar])))
                if abs(tab[r, j]) > PIVOT_TOL:
                    _pivot(tab, basis, r, j)
                    keep.append(r)
            else:
                keep.append(r)
        tab = np.hstack([tab[keep, :nvar], tab[keep, -1:]])
        basis = [basis[r] for r in keep]
        rows = np.array(keep, dtype=int)
    else:
        tab = np.hstack([tab[:, :nvar], tab[:, -1:]])
        rows = np.arange(m)

    cost = sf.c
    if rows.size == 0:
        if np.any(cost < -PIVOT_TOL):
            return LpSolution("unbounded", iterations=iters, message="objective unbounded")
        tab = np.zeros((0, 1))
        y_red = np.zeros(0)
        rc = cost.copy()
    settled = rows.size == 0
    for attempt in range(4 if rows.size else 0):
        status, it = _bland(tab, basis, cost, nvar, max_iter)
        iters += it
        if status == "unbounded":
            return LpSolution("unbounded", iterations=iters, message="objective unbounded")
        if status != "optimal":
            return LpSolution("failed", iterations=iters, message=f"phase 2 ended with {status}")
        # refactor from the original data to wash out accumulated rounding
        B = A[np.ix_(rows, basis)]
        try:
            fresh = np.linalg.solve(B, np.hstack([A[rows], rhs[rows, None]]))
        except np.linalg.LinAlgError:
            return LpSolution("failed", iterations=iters, message="singular basis")
        tab = fresh
        y_red = np.linalg.solve(B.T, cost[basis])
        rc = cost - A[rows].T @ y_red
        if rc.min() >= -PIVOT_TOL and tab[:, -1].min(initial=0.0) >= -FEAS_TOL:
            settled = True
            break
    if not settled:
        return LpSolution("failed", iterations=iters, message="basis refactorization did not settle")

    z = np.zeros(nvar)
    z[basis] = np.maximum(tab[:, -1], 0.0)
    x = sf.offset + sf.T @ z[: sf.nz]
    y = np.zeros(A_full.shape[0])
    y[live[rows]] = y_red
    y[flip] *= -1
    fun_min = float(cost @ z) + sf.const
    dual_obj = float(y @ sf.rhs) + sf.const
    sgn = 1.0 if problem.sense == "min" else -1.0
    fun = sgn * fun_min
    duals = sgn * y

    p = problem
    res = {}
    res["primal"] = max(
        np.max(p.A_ub @ x - p.b_ub, initial=0.0),
        np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0),
        np.max(p.lower - x, initial=0.0),
        np.max(x - p.upper, initial=0.0),
    )
    slack_ub = p.b_ub - p.A_ub @ x
    res["complementary"] = max(
        np.max(np.abs(y[: sf.m_ub] * slack_ub), initial=0.0),
        np.max(np.abs(rc * z), initial=0.0),
    )
    res["duality_gap"] = abs(fun_min - dual_obj)
    scale = max(1.0, abs(fun_min))
    sol = LpSolution(
        "optimal", x, fun, duals[: sf.m_ub], duals[sf.n_slack:], iters, "optimal", res
    )
    if res["primal"] > FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
        sol.status, sol.message = "failed", f"primal residual {res['primal']:.3g}"
    elif res["complementary"] > SLACK_TOL * scale or res["duality_gap"] > SLACK_TOL * scale:
        sol.status, sol.message = "failed", f"optimality residuals {res}"
    return sol


def solve_or_raise(problem: LpProblem) -> LpSolution:
    sol = lp_solve(problem)
    if not sol.success:
        raise SolverError(f"LP {sol.status}: {sol.message}")
    return sol


class MatrixGameSolution(NamedTuple):
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray


def _game_lp(A):
    """Row player minimizes ``p^T A r``: ``min v`` s.t. ``A^T p <= v``."""
    m, k = A.shape
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A.T, -np.ones((k, 1))])
    A_eq = np.concatenate([np.ones(m), [0.0]])[None, :]
    lower = np.concatenate([np.zeros(m), [-np.inf]])
    sol = solve_or_raise(LpProblem(c, A_ub, np.zeros(k), A_eq, [1.0], lower))
    p = np.clip(sol.x[:m], 0.0, None)
    return sol.fun, p / p.sum()


def matrix_game(payoff) -> MatrixGameSolution:
    """Value and optimal strategies; rows minimize, columns maximize."""
    A = np.atleast_2d(np.asarray(payoff, dtype=float))
    if A.size == 0:
        raise InvalidInputError("payoff matrix must be nonempty")
    v_row, p = _game_lp(A)
    v_col, r = _game_lp(-A.T)
    v_col = -v_col
    if abs(v_row - v_col) > 1e-8 * max(1.0, abs(v_row)):
        raise SolverError(f"matrix game values disagree: {v_row} vs {v_col}")
    return MatrixGameSolution(0.5 * (v_row + v_col), p, r)


@dataclass(frozen=True)
class MaximinResult:
    value: float
    argmax: np.ndarray
    upper_bound: float
    iterations: int

    @property
    def gap(self) -> float:
        return max(0.0, self.upper_bound - self.value)


def _interior(P, eta=1e-10):
    return (1 - eta) * P + eta / P.size


def _weighted_bound(f, G, P):
    """``min_w sum_t w_t f_t + max_a (w G)_a - (w G).P``: an upper bound on the max-min."""
    k, d = G.shape
    c = np.concatenate([f - G @ P, [1.0]])
    A_ub = np.hstack([G.T, -np.ones((d, 1))])
    A_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    lower = np.concatenate([np.zeros(k), [-np.inf]])
    sol = lp_solve(LpProblem(c, A_ub, np.zeros(d), A_eq, [1.0], lower))
    return sol.fun if sol.success else np.inf


def concave_maximin(
    evaluate: Callable[[np.ndarray], np.ndarray],
    gradients: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-6,
    max_cuts: int = 400,
    warm_steps: int = 60,
) -> MaximinResult:
    """Maximize ``min_t f_t(P)`` over the probability simplex.

    ``evaluate`` returns the vector of ``f_t(P)``; ``gradients`` returns the
    matrix of their (super)gradients, one row per ``t``. The returned value is
    achieved by the returned point and lies within ``tol`` of a certified upper
    bound; otherwise ``ConvergenceError`` is raised.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    points, fvals, grads = [], [], []

    def probe(P):
        P = _interior(np.clip(P, 0.0, None) / np.clip(P, 0.0, None).sum())
        f = np.asarray(evaluate(P), dtype=float)
        G = np.atleast_2d(np.asarray(gradients(P), dtype=float))
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(G))):
            raise InvalidInputError("objective or gradient is not finite")
        points.append(P)
        fvals.append(f)
        grads.append(G)
        return P, f, G

    P, f, G = probe(np.full(dim, 1.0 / dim))
    best = (f.min(), P)
    if dim == 1:
        return MaximinResult(float(f.min()), P, float(f.min()), 1)

    # exponentiated supergradient warm start with diminishing steps
    for k in range(warm_steps):
        g = G[int(np.argmin(f))]
        step = 1.0 / np.sqrt(k + 1) / max(1.0, np.ptp(g))
        P, f, G = probe(P * np.exp(step * (g - g.max())))
        if f.min() > best[0]:
            best = (f.min(), P)

    # local polish of the epigraph problem
    x0 = np.concatenate([best[1], [best[0]]])
    cons = [
        {"type": "ineq", "fun": lambda z: np.asarray(evaluate(_interior(np.clip(z[:-1], 0, None))), float) - z[-1],
         "jac": lambda z: np.hstack([np.atleast_2d(gradients(_interior(np.clip(z[:-1], 0, None)))),
                                     -np.ones((len(fvals[0]), 1))])},
        {"type": "eq", "fun": lambda z: np.array([z[:-1].sum() - 1.0]),
         "jac": lambda z: np.concatenate([np.ones(dim), [0.0]])[None, :]},
    ]
    try:
        res = optimize.minimize(
            lambda z: -z[-1], x0, jac=lambda z: np.concatenate([np.zeros(dim), [-1.0]]),
            method="SLSQP", bounds=[(0.0, 1.0)] * dim + [(None, None)], constraints=cons,
            options={"ftol": 1e-14, "maxiter": 500},
        )
        if np.all(np.isfinite(res.x)):
            P, f, G = probe(res.x[:-1])
            if f.min() > best[0]:
                best = (f.min(), P)
    except (ValueError, np.linalg.LinAlgError):
        pass

    bP = best[1]
    i_best = next(i for i, p in enumerate(points) if p is bP)
    upper = _weighted_bound(fvals[i_best], grads[i_best], bP)
    if upper - best[0] <= tol:
        return MaximinResult(float(best[0]), bP, float(upper), len(points))

    # Kelley cutting planes over every probed point
    for it in range(max_cuts):
        Ps = np.array(points)
        F = np.array(fvals)
        Gs = np.array(grads)
        nk, nt = F.shape
        # t <= f + g.(P - Pk)  <=>  t - g.P <= f - g.Pk
        Grows = Gs.reshape(nk * nt, dim)
        rhs = (F - np.einsum("ktd,kd->kt", Gs, Ps)).ravel()
        A_ub = np.hstack([-Grows, np.ones((nk * nt, 1))])
        c = np.concatenate([np.zeros(dim), [1.0]])
        A_eq = np.concatenate([np.ones(dim), [0.0]])[None, :]
        lower = np.concatenate([np.zeros(dim), [-np.inf]])
        sol = lp_solve(LpProblem(c, A_ub, rhs, A_eq, [1.0], lower, sense="max"))
        if not sol.success:
            raise SolverError(f"cutting-plane LP {sol.status}: {sol.message}")
        upper = min(upper, sol.fun)
        P, f, G = probe(sol.x[:-1])
        if f.min() > best[0]:
            best = (f.min(), P)
            upper = min(upper, _weighted_bound(f, G, P))
        if upper - best[0] <= tol:
            return MaximinResult(float(best[0]), best[1], float(upper), len(points))
    raise ConvergenceError(
        f"max-min solver stopped with gap {upper - best[0]:.3g} after {len(points)} evaluations"
    )
