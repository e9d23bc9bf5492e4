"""Exact game values at tiny blocklengths: enumeration, the relaxed-code LP and its dual certificates."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelFamily, as_prob
from .codes import DeterministicCode
from .errors import CapExceededError, InvalidInputError, SolverError
from .fbl import type_mixture_reference
from .optim import LpProblem, matrix_game, solve_or_raise

ENUM_CAP = 10**7
LP_VAR_CAP = 20_000
D3_TOL = 1e-10


def _setup(family: ChannelFamily, n: int, M: int):
    if n < 1 or M < 1:
        raise InvalidInputError("n and M must be positive")
    return family.block_matrices(n)  # (states, X, Y)


def _check_enum(X: int, Y: int, M: int, cap: int = ENUM_CAP):
    count = X**M * M**Y
    if count > cap:
        raise CapExceededError(f"{count} deterministic codes exceed the enumeration cap {cap}")
    return count


def _code_errors(Wn: np.ndarray, enc: tuple, dec: np.ndarray) -> np.ndarray:
    C = Wn[:, list(enc), :]  # (states, M, Y)
    correct = C[:, dec, np.arange(Wn.shape[2])].sum(axis=1)
    return 1.0 - correct / len(enc)


def _map_best_response(Wn: np.ndarray, q: np.ndarray, M: int):
    """Best deterministic code against the q-mixed channel (MAP decoding, lowest index on ties)."""
    Wq = np.tensordot(q, Wn, axes=1)  # (X, Y)
    best = (math.inf, None, None)
    for enc in itertools.product(range(Wn.shape[1]), repeat=M):
        rows = Wq[list(enc)]  # (M, Y)
        err = 1.0 - rows.max(axis=0).sum() / M
        if err < best[0] - 1e-15:
            best = (err, enc, np.argmax(rows, axis=0))
    return best


def brute_lower_value(family: ChannelFamily, n: int, M: int, cap: int = ENUM_CAP):
    """Max-min value over deterministic codes, by constraint generation on the jammer LP.

    Returns ``(value, optimal_q)``.
    """
    Wn = _setup(family, n, M)
    _check_enum(Wn.shape[1], Wn.shape[2], M, cap)
    k = family.num_states
    q = np.full(k, 1.0 / k)
    _, enc, dec = _map_best_response(Wn, q, M)
    rows = [_code_errors(Wn, enc, dec)]
    for _ in range(10_000):
        sol = matrix_game(np.array(rows))
        q = np.clip(sol.col_strategy, 0.0, None)
        q = q / q.sum()
        br, enc, dec = _map_best_response(Wn, q, M)
        if br >= sol.value - 1e-12:
            return float(sol.value), q
        rows.append(_code_errors(Wn, enc, dec))
    raise SolverError("constraint generation did not terminate")


def brute_det_upper_value(family: ChannelFamily, n: int, M: int, cap: int = ENUM_CAP):
    """Min over deterministic codes of the worst-state average error. Returns ``(value, code)``."""
    Wn = _setup(family, n, M)
    X, Y = Wn.shape[1], Wn.shape[2]
    _check_enum(X, Y, M, cap)
    decoders = np.array(list(itertools.product(range(M), repeat=Y)), dtype=np.int64)  # (D, Y)
    best = (math.inf, None, None)
    for enc in itertools.product(range(X), repeat=M):
        C = Wn[:, list(enc), :]  # (states, M, Y)
        correct = np.zeros((Wn.shape[0], decoders.shape[0]))
        for y in range(Y):
            correct += C[:, decoders[:, y], y]
        worst = (1.0 - correct / M).max(axis=0)
        j = int(np.argmin(worst))
        if worst[j] < best[0] - 1e-15:
            best = (float(worst[j]), enc, decoders[j])
    value, enc, dec = best
    code = DeterministicCode(n, family.input_size, family.output_size, np.array(enc), dec)
    return value, code


def inner_stochastic_value(family: ChannelFamily, n: int, M: int, q) -> float:
    """``min`` over stochastic codes of the q-mixed error: per deterministic encoder, an LP in the decoder."""
    Wn = _setup(family, n, M)
    q = np.asarray(as_prob(q), dtype=float)
    Wq = np.tensordot(q, Wn, axes=1)
    X, Y = Wq.shape
    best = math.inf
    for enc in itertools.product(range(X), repeat=M):
        rows = Wq[list(enc)]  # (M, Y); variable Q_dec(s|y) laid out y-major
        c = -(rows.T.reshape(-1)) / M
        A_eq = np.kron(np.eye(Y), np.ones((1, M)))
        sol = solve_or_raise(LpProblem(c=c, A_eq=A_eq, b_eq=np.ones(Y)))
        best = min(best, 1.0 + sol.fun)
    return float(best)


# ---------------------------------------------------------------- heuristic stochastic upper value


def _errors_stochastic(Wn, Qe, Qd):
    """Per-state average error of a stochastic code; Qe (M, X), Qd (Y, M)."""
    M = Qe.shape[0]
    correct = np.einsum("sx,txy,ys->t", Qe, Wn, Qd)
    return 1.0 - correct / M


def _minmax_lp(G: np.ndarray, rows: int, cols: int):
    """``min t`` s.t. ``1 - G_t . v <= t``, ``v`` row-stochastic (rows x cols)."""
    k = G.shape[0]
    nv = rows * cols
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-G, -np.ones((k, 1))])
    b_ub = -np.ones(k)
    A_eq = np.hstack([np.kron(np.eye(rows), np.ones((1, cols))), np.zeros((rows, 1))])
    lower = np.zeros(nv + 1)
    lower[-1] = -np.inf
    sol = solve_or_raise(LpProblem(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(rows), lower=lower))
    v = np.clip(sol.x[:nv], 0, None).reshape(rows, cols)
    return v / v.sum(axis=1, keepdims=True), sol.fun


def heuristic_stochastic_upper(family: ChannelFamily, n: int, M: int, restarts: int = 8, seed: int = 0,
                               start_code: DeterministicCode | None = None, max_rounds: int = 100) -> float:
    """Alternating LP descent on the stochastic-code min-max error; a heuristic, never certified."""
    Wn = _setup(family, n, M)
    k, X, Y = Wn.shape
    rng = np.random.default_rng(seed)
    starts = []
    if start_code is not None:
        Qd = np.zeros((Y, M))
        Qd[np.arange(Y), start_code.decoder] = 1.0
        starts.append(Qd)
    starts += [rng.dirichlet(np.ones(M), size=Y) for _ in range(restarts)]
    best = math.inf
    for Qd in starts:
        prev = math.inf
        for _ in range(max_rounds):
            # encoder step: coefficient of Qe(x|s) in the correct-decoding mass
            Ge = np.einsum("txy,ys->tsx", Wn, Qd).reshape(k, -1) / M
            Qe, _ = _minmax_lp(Ge, M, X)
            Gd = np.einsum("sx,txy->tys", Qe, Wn).reshape(k, -1) / M
            Qd, val = _minmax_lp(Gd, Y, M)
            val = float(_errors_stochastic(Wn, Qe, Qd).max())
            if val > prev - 1e-12:
                break
            prev = val
        best = min(best, prev if prev < math.inf else val)
    return float(best)


# ---------------------------------------------------------------- relaxed codes


@dataclass
class RelaxedCode:
    Q_enc: np.ndarray  # (M, X)
    Q_dec: np.ndarray  # (Y, M)
    W: np.ndarray  # (M, X, Y, M)

    def constraint_residual(self) -> float:
        r1 = np.abs(self.W.sum(axis=1) - self.Q_dec[None, :, :]).max()
        r2 = np.abs(self.W.sum(axis=3) - self.Q_enc[:, :, None]).max()
        return float(max(r1, r2))


class _RelaxedLayout:
    """Variable layout and constraints of the relaxed-code polytope."""

    def __init__(self, Wn: np.ndarray, M: int):
        k, X, Y = Wn.shape
        self.k, self.X, self.Y, self.M = k, X, Y, M
        self.ne, self.nd, self.nw = M * X, Y * M, M * X * Y * M
        if self.ne + self.nd + self.nw > LP_VAR_CAP:
            raise CapExceededError(
                f"{self.ne + self.nd + self.nw} relaxed-code variables exceed the dense LP cap {LP_VAR_CAP}")
        self.nv = self.ne + self.nd + self.nw
        w_idx = np.arange(self.nw).reshape(M, X, Y, M) + self.ne + self.nd
        e_idx = np.arange(self.ne).reshape(M, X)
        d_idx = np.arange(self.nd).reshape(Y, M) + self.ne
        rows = []
        # sum_x W(s,x,y,s^) = Q_dec(s^|y)
        for s, y, sh in itertools.product(range(M), range(Y), range(M)):
            r = np.zeros(self.nv)
            r[w_idx[s, :, y, sh]] = 1.0
            r[d_idx[y, sh]] = -1.0
            rows.append(r)
        # sum_s^ W(s,x,y,s^) = Q_enc(x|s)
        for s, x, y in itertools.product(range(M), range(X), range(Y)):
            r = np.zeros(self.nv)
            r[w_idx[s, x, y, :]] = 1.0
            r[e_idx[s, x]] = -1.0
            rows.append(r)
        b = [0.0] * len(rows)
        for s in range(M):
            r = np.zeros(self.nv)
            r[e_idx[s]] = 1.0
            rows.append(r)
            b.append(1.0)
        for y in range(Y):
            r = np.zeros(self.nv)
            r[d_idx[y]] = 1.0
            rows.append(r)
            b.append(1.0)
        self.A_eq, self.b_eq = np.array(rows), np.array(b)
        # err_t(W) = sum_z W(z) 1{s != s^} P_t(y|x) / M
        off = 1.0 - np.eye(M)
        self.err = np.zeros((k, self.nv))
        for t in range(k):
            coef = Wn[t][None, :, :, None] * off[:, None, None, :] / M
            self.err[t, self.ne + self.nd:] = coef.reshape(-1)

    def unpack(self, x) -> RelaxedCode:
        M, X, Y = self.M, self.X, self.Y
        return RelaxedCode(
            x[: self.ne].reshape(M, X), x[self.ne: self.ne + self.nd].reshape(Y, M),
            x[self.ne + self.nd: self.nv].reshape(M, X, Y, M),
        )


def inner_relaxed_value(family: ChannelFamily, n: int, M: int, q, layout: _RelaxedLayout | None = None):
    """Min over relaxed codes of the q-mixed error; returns ``(value, RelaxedCode)``."""
    layout = layout or _RelaxedLayout(_setup(family, n, M), M)
    q = np.asarray(as_prob(q), dtype=float)
    sol = solve_or_raise(LpProblem(c=q @ layout.err, A_eq=layout.A_eq, b_eq=layout.b_eq))
    return float(sol.fun), layout.unpack(sol.x)


def lp_relax_value(family: ChannelFamily, n: int, M: int, grid_step: float = 0.05, check: bool = True):
    """Optimal value of the relaxed min-max, solved directly as one epigraph LP.

    The jammer's optimal q is read from the epigraph duals. With ``check`` the
    inner LP at that q must reproduce the value and no q on a grid may exceed it.
    Returns ``(value, RelaxedCode, optimal_q)``.
    """
    Wn = _setup(family, n, M)
    lay = _RelaxedLayout(Wn, M)
    k = lay.k
    c = np.zeros(lay.nv + 1)
    c[-1] = 1.0
    A_ub = np.hstack([lay.err, -np.ones((k, 1))])
    A_eq = np.hstack([lay.A_eq, np.zeros((lay.A_eq.shape[0], 1))])
    lower = np.zeros(lay.nv + 1)
    lower[-1] = -np.inf
    sol = solve_or_raise(LpProblem(c=c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=lay.b_eq, lower=lower))
    value = float(sol.fun)
    q = np.abs(np.asarray(sol.ineq_duals, dtype=float))
    q = q / q.sum() if q.sum() > 0 else np.full(k, 1.0 / k)
    code = lay.unpack(sol.x[: lay.nv])
    if check:
        inner, _ = inner_relaxed_value(family, n, M, q, lay)
        if abs(inner - value) > 1e-6:
            raise SolverError(f"direct relaxed value {value:.10g} differs from the inner value {inner:.10g} at q*")
        if k <= 3:
            for qg in _simplex_grid(k, grid_step):
                g, _ = inner_relaxed_value(family, n, M, qg, lay)
                if g > value + 1e-6:
                    raise SolverError(f"inner value {g:.10g} at q={qg} exceeds the min-max value {value:.10g}")
    return value, code, q


def _simplex_grid(k: int, step: float):
    r = int(round(1 / step))
    for c in itertools.product(range(r + 1), repeat=k - 1):
        if sum(c) <= r:
            yield np.array(list(c) + [r - sum(c)], dtype=float) / r


def dual_program_value(family: ChannelFamily, n: int, M: int, q) -> float:
    """Optimal value of the dual program at q, solved as its own LP (free multipliers)."""
    Wn = _setup(family, n, M)
    q = np.asarray(as_prob(q), dtype=float)
    k, X, Y = Wn.shape
    nc, ns = M * X * Y, M * M * Y
    ga, gb = M, Y
    nv = nc + ns + ga + gb
    ic = np.arange(nc).reshape(M, X, Y)
    is_ = np.arange(ns).reshape(M, M, Y) + nc
    ia = np.arange(ga) + nc + ns
    ib = np.arange(gb) + nc + ns + ga
    Wq = np.tensordot(q, Wn, axes=1)
    rows, b = [], []
    for s, x in itertools.product(range(M), range(X)):  # (D1)
        r = np.zeros(nv)
        r[ia[s]] = 1.0
        r[ic[s, x, :]] = -1.0
        rows.append(r)
        b.append(0.0)
    for sh, y in itertools.product(range(M), range(Y)):  # (D2)
        r = np.zeros(nv)
        r[ib[y]] = 1.0
        r[is_[:, sh, y]] = -1.0
        rows.append(r)
        b.append(0.0)
    for s, x, y, sh in itertools.product(range(M), range(X), range(Y), range(M)):  # (D3)
        r = np.zeros(nv)
        r[is_[s, sh, y]] = 1.0
        r[ic[s, x, y]] = 1.0
        rows.append(r)
        b.append(Wq[x, y] / M if s != sh else 0.0)
    c = np.zeros(nv)
    c[ia] = 1.0
    c[ib] = 1.0
    sol = solve_or_raise(LpProblem(c=c, A_ub=np.array(rows), b_ub=np.array(b), lower=np.full(nv, -np.inf),
                                   sense="max"))
    return float(sol.fun)


@dataclass
class DualCertificate:
    lambda_c: np.ndarray  # (s, x, y)
    lambda_s: np.ndarray  # (s, s^, y)
    gamma_a: np.ndarray
    gamma_b: np.ndarray
    q: np.ndarray
    max_violation: dict = field(default_factory=dict)


def verify_dual_certificate(family: ChannelFamily, q, gamma: float, reference=None, n: int = 1, M: int = 2,
                            check_primal: bool = True):
    """Materialize the closed-form multipliers, check feasibility pointwise, return ``(dual_value, cert)``.

    ``reference`` is a per-state output law on B^n, shape (states, |B|^n); the
    type-mixture law is used when omitted.
    """
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    Wn = _setup(family, n, M)
    q = np.asarray(as_prob(q), dtype=float)
    k, X, Y = Wn.shape
    ref = type_mixture_reference(family, n) if reference is None else np.asarray(reference, dtype=float)
    if ref.shape != (k, Y):
        raise InvalidInputError(f"reference must have shape {(k, Y)}")
    scale = M * math.exp(-gamma)
    lc_x = np.einsum("t,txy->xy", q, np.minimum(Wn, ref[:, None, :] * scale)) / M  # (X, Y)
    lambda_c = np.broadcast_to(lc_x, (M, X, Y)).copy()
    ls_y = -(q @ ref) * math.exp(-gamma)  # sum_t q_t Pbar_t(y) M e^-gamma / M
    lambda_s = np.einsum("ab,y->aby", np.eye(M), ls_y)
    gamma_a = lambda_c.sum(axis=2).min(axis=1)
    gamma_b = lambda_s.sum(axis=0).min(axis=0)
    Wq = np.tensordot(q, Wn, axes=1)
    Lam = (Wq[None, :, :, None] / M) * (1.0 - np.eye(M))[:, None, None, :]  # (s, x, y, s^)
    lhs = lambda_s.transpose(0, 2, 1)[:, None, :, :] + lambda_c[:, :, :, None]
    viol = {
        "D1": float((gamma_a[:, None] - lambda_c.sum(axis=2)).max()),
        "D2": float((gamma_b[None, :] - lambda_s.sum(axis=0)).max()),
        "D3": float((lhs - Lam).max()),
    }
    for name, v in viol.items():
        if v > D3_TOL:
            raise SolverError(f"multipliers violate ({name}) by {v:.3g}")
    dual_value = float(gamma_a.sum() + gamma_b.sum())
    cert = DualCertificate(lambda_c, lambda_s, gamma_a, gamma_b, q, viol)
    if check_primal:
        inner, _ = inner_relaxed_value(family, n, M, q)
        if dual_value > inner + 1e-9:
            raise SolverError(f"dual value {dual_value:.10g} exceeds the inner relaxed minimum {inner:.10g}")
    return dual_value, cert


# ---------------------------------------------------------------- bundle


@dataclass
class GameValues:
    n: int
    M: int
    lp_lower: float
    exact_lower: float
    det_upper: float
    heuristic_upper: float
    optimal_q: np.ndarray
    lp_q: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def stochastic_gain(self) -> bool:
        """Whether randomized coding beat every deterministic code by a visible margin."""
        return self.heuristic_upper < self.det_upper - 1e-4

    def sandwich_slack(self) -> tuple:
        return (self.exact_lower - self.lp_lower, self.det_upper - self.exact_lower)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "M": self.M,
            "lp_lower": self.lp_lower,
            "exact_lower": self.exact_lower,
            "det_upper": self.det_upper,
            "heuristic_upper": self.heuristic_upper,
            "upper_bracket": [self.exact_lower, min(self.det_upper, self.heuristic_upper)],
            "optimal_q": self.optimal_q.tolist(),
            "lp_optimal_q": self.lp_q.tolist(),
            "stochastic_gain": self.stochastic_gain,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def game_values(family: ChannelFamily, n: int, M: int, restarts: int = 4, seed: int = 0,
                cap: int = ENUM_CAP) -> GameValues:
    """All exact and relaxed values for one tiny instance; the sandwich is checked."""
    Wn = _setup(family, n, M)
    codes = _check_enum(Wn.shape[1], Wn.shape[2], M, cap)
    lp, _, lp_q = lp_relax_value(family, n, M)
    lower, q = brute_lower_value(family, n, M, cap)
    upper, code = brute_det_upper_value(family, n, M, cap)
    heur = heuristic_stochastic_upper(family, n, M, restarts=restarts, seed=seed, start_code=code)
    if not (lp <= lower + 1e-8 and lower <= upper + 1e-8 and heur <= upper + 1e-8):
        raise SolverError(f"value sandwich broken: lp={lp}, lower={lower}, det_upper={upper}, heuristic={heur}")
    prov = {"deterministic_codes": codes, "restarts": restarts, "seed": seed, "lp_solver": "dense two-phase simplex"}
    return GameValues(n, M, lp, lower, upper, heur, q, lp_q, prov)
