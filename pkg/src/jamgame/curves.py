"""Limiting game values as step functions of the rate.

For a rate R the upper curve uses the subsets S with ``R < C(S)`` and the lower
curve those with ``R <= C(S)``; each curve value is the value of the jammer's
LP ``max_q min_S (1 - q(S))`` (1 when no subset qualifies).
"""
from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import DEFAULT_TOL, CapacityResult, subset_capacities
from .channels import ChannelFamily
from .errors import InvalidInputError, SolverError
from .optim import LpProblem, matrix_game, solve_or_raise

CSV_SCHEMA = "# schema: jamgame.curve/1 columns=R_left,R_right,L,U,is_breakpoint"
GAME_TOL = 1e-7


def _cap_value(c) -> float:
    return c.value if isinstance(c, CapacityResult) else float(c)


def subsets_at_rate(capacities: dict, R: float, strict: bool, slack: float = 0.0) -> list:
    """Subsets with ``R < C(S)`` (strict) or ``R <= C(S)``; ``slack`` widens the doubtful band.

    In strict mode a subset counts only if ``C(S) - R > slack``; otherwise if
    ``C(S) - R >= -slack``.
    """
    out = []
    for s, c in capacities.items():
        d = _cap_value(c) - R
        if (d > slack) if strict else (d >= -slack):
            out.append(s)
    return sorted(out, key=lambda s: (len(s), sorted(s)))


def jammer_value(subsets: list, num_states: int):
    """``max_q min_S (1 - q(S))`` over the given subsets, with an optimal q."""
    if not subsets:
        return 1.0, np.full(num_states, 1.0 / num_states)
    k = num_states
    # variables (q_1..q_k, t): max t s.t. t + q(S) <= 1
    A_ub = np.zeros((len(subsets), k + 1))
    for r, s in enumerate(subsets):
        A_ub[r, list(s)] = 1.0
        A_ub[r, -1] = 1.0
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    lower = np.concatenate([np.zeros(k), [-np.inf]])
    sol = solve_or_raise(LpProblem(c, A_ub, np.ones(len(subsets)), A_eq, [1.0], lower, sense="max"))
    q = np.clip(sol.x[:k], 0.0, None)
    return float(min(max(sol.fun, 0.0), 1.0)) + 0.0, q / q.sum()


def _resolve_caps(family, capacities, tol):
    if capacities is None:
        capacities = subset_capacities(family, tol)
    return capacities


def U_of_R(family: ChannelFamily, R: float, tol: float = DEFAULT_TOL, capacities=None, slack=None) -> float:
    if R < 0:
        raise InvalidInputError("rate must be nonnegative")
    caps = _resolve_caps(family, capacities, tol)
    slack = 2 * tol if slack is None else slack
    return jammer_value(subsets_at_rate(caps, R, True, slack), family.num_states)[0]


def L_of_R(family: ChannelFamily, R: float, tol: float = DEFAULT_TOL, capacities=None, slack=None) -> float:
    if R < 0:
        raise InvalidInputError("rate must be nonnegative")
    caps = _resolve_caps(family, capacities, tol)
    slack = 2 * tol if slack is None else slack
    return jammer_value(subsets_at_rate(caps, R, False, slack), family.num_states)[0]


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function of the rate.

    ``values[i]`` holds on the open interval between ``breakpoints[i-1]`` and
    ``breakpoints[i]`` (unbounded at the ends). At a breakpoint the function
    takes its right-interval value when ``continuity`` is ``"right"`` and its
    left-interval value when ``"left"``.
    """

    breakpoints: tuple
    values: tuple
    continuity: str

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise InvalidInputError("need one value per interval")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise InvalidInputError("breakpoints must be strictly ascending")
        if self.continuity not in ("left", "right"):
            raise InvalidInputError("continuity must be 'left' or 'right'")

    def __call__(self, R: float) -> float:
        if self.continuity == "right":
            i = bisect.bisect_right(self.breakpoints, R)
        else:
            i = bisect.bisect_left(self.breakpoints, R)
        return self.values[i]

    def at_breakpoint(self, i: int) -> float:
        return self.values[i + 1] if self.continuity == "right" else self.values[i]

    @property
    def jumps(self) -> tuple:
        return tuple(
            b for i, b in enumerate(self.breakpoints) if abs(self.values[i + 1] - self.values[i]) > 1e-9
        )

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values), "continuity": self.continuity}


@dataclass
class CurvePair:
    L: StepFunction
    U: StepFunction
    capacities: dict
    canonical: dict
    jammer_q: list
    pv: list
    tol: float
    labels: tuple = field(default_factory=tuple)

    @property
    def breakpoints(self) -> tuple:
        return self.U.breakpoints

    @property
    def discontinuities(self) -> tuple:
        return self.U.jumps

    @property
    def lower_capacity(self) -> float:
        return _cap_value(self.capacities[max(self.capacities, key=len)])

    @property
    def upper_capacity(self) -> float:
        return min(_cap_value(c) for s, c in self.capacities.items() if len(s) == 1)

    def near_breakpoint(self, R: float) -> bool:
        band = 2 * self.tol
        return any(abs(R - _cap_value(c)) <= band for c in self.capacities.values())

    def rows(self):
        """(R_left, R_right, L, U, is_breakpoint) in ascending rate order."""
        bps = self.breakpoints
        edges = [-math.inf] + list(bps) + [math.inf]
        for i in range(len(bps) + 1):
            yield (edges[i], edges[i + 1], self.L.values[i], self.U.values[i], False)
            if i < len(bps):
                yield (bps[i], bps[i], self.L.at_breakpoint(i), self.U.at_breakpoint(i), True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_SCHEMA + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R_left", "R_right", "L", "U", "is_breakpoint"])
        for r in self.rows():
            w.writerow([repr(float(r[0])), repr(float(r[1])), repr(r[2]), repr(r[3]), int(r[4])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        def name(s):
            return [self.labels[i] for i in sorted(s)] if self.labels else sorted(s)

        return {
            "L": self.L.to_dict(),
            "U": self.U.to_dict(),
            "discontinuities": list(self.discontinuities),
            "lower_capacity": self.lower_capacity,
            "upper_capacity": self.upper_capacity,
            "capacities": [
                {"subset": name(s), "capacity": _cap_value(c), "merged": self.canonical[s]}
                for s, c in sorted(self.capacities.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
            ],
            "intervals": [
                {
                    "interval": i,
                    "jammer_q": list(map(float, self.jammer_q[i])),
                    "P_V": [{"subset": name(s), "prob": float(p)} for s, p in self.pv[i].items()],
                }
                for i in range(len(self.jammer_q))
            ],
            "tol": self.tol,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _merge_capacities(capacities: dict, tol: float):
    """Cluster capacities closer than 4*tol; returns (breakpoints, canonical map)."""
    items = sorted(((_cap_value(c), s) for s, c in capacities.items()), key=lambda t: t[0])
    clusters = []
    for v, s in items:
        if clusters and v - clusters[-1][-1][0] <= 4 * tol:
            clusters[-1].append((v, s))
        else:
            clusters.append([(v, s)])
    canonical, bps = {}, []
    for cl in clusters:
        rep = float(np.mean([v for v, _ in cl]))
        bps.append(rep)
        for _, s in cl:
            canonical[s] = rep
    return tuple(bps), canonical


def build_curves(family: ChannelFamily, tol: float = DEFAULT_TOL, capacities=None) -> CurvePair:
    caps = _resolve_caps(family, capacities, tol)
    bps, canon = _merge_capacities(caps, tol)
    k = family.num_states
    probes = []
    for i in range(len(bps) + 1):
        if i == 0:
            probes.append(bps[0] / 2 if bps[0] > 0 else bps[0] - 1.0)
        elif i == len(bps):
            probes.append(bps[-1] + max(1.0, bps[-1]))
        else:
            probes.append(0.5 * (bps[i - 1] + bps[i]))
    U_vals, L_vals, qs, pvs = [], [], [], []
    for R in probes:
        up = subsets_at_rate(canon, R, True)
        lo = subsets_at_rate(canon, R, False)
        u, q = jammer_value(up, k)
        l, _ = jammer_value(lo, k)
        U_vals.append(u)
        L_vals.append(l)
        qs.append(q)
        pvs.append(_pv_from_subsets(up, k, u) if up else {})
    U = StepFunction(bps, tuple(U_vals), "right")
    L = StepFunction(bps, tuple(L_vals), "left")
    pair = CurvePair(L, U, caps, canon, qs, pvs, tol, family.labels)
    # values at breakpoints straight from the LP, compared with the one-sided readoff
    for i, b in enumerate(bps):
        u_at = jammer_value(subsets_at_rate(canon, b, True), k)[0]
        l_at = jammer_value(subsets_at_rate(canon, b, False), k)[0]
        if abs(u_at - U.at_breakpoint(i)) > 1e-8 or abs(l_at - L.at_breakpoint(i)) > 1e-8:
            raise SolverError(f"one-sided continuity check failed at breakpoint {b}")
    validate_curves(pair)
    return pair


def validate_curves(pair: CurvePair) -> None:
    L, U = pair.L, pair.U
    for vals in (L.values, U.values):
        if any(v < -1e-12 or v > 1 + 1e-12 for v in vals):
            raise SolverError("curve value outside [0, 1]")
        if any(b < a - 1e-9 for a, b in zip(vals, vals[1:])):
            raise SolverError("curve is not non-decreasing")
    if any(abs(a - b) > 1e-8 for a, b in zip(L.values, U.values)):
        raise SolverError("lower and upper curves differ off the breakpoints")
    for i in range(len(U.breakpoints)):
        if L.at_breakpoint(i) > U.at_breakpoint(i) + 1e-9:
            raise SolverError("lower curve exceeds upper curve at a breakpoint")
    if L.jumps != U.jumps:
        raise SolverError("discontinuity sets differ")


def _pv_from_subsets(subsets: list, num_states: int, expected: float) -> dict:
    payoff = np.array([[0.0 if t in s else 1.0 for t in range(num_states)] for s in subsets])
    sol = matrix_game(payoff)
    if abs(sol.value - expected) > GAME_TOL:
        raise SolverError(f"subset game value {sol.value} differs from curve value {expected}")
    return {s: float(p) for s, p in zip(subsets, sol.row_strategy) if p > 1e-12}


@dataclass(frozen=True)
class OptimalPV:
    distribution: dict
    game_value: float
    jammer: np.ndarray

    def __iter__(self):
        return iter((self.distribution, self.game_value))


def optimal_PV(family: ChannelFamily, R: float, tol: float = DEFAULT_TOL, capacities=None, slack=None) -> OptimalPV:
    """Minimizing subset distribution of the misclassification game at rate R."""
    caps = _resolve_caps(family, capacities, tol)
    slack = 2 * tol if slack is None else slack
    subsets = subsets_at_rate(caps, R, True, slack)
    if not subsets:
        raise InvalidInputError(f"no subset has capacity above R={R}: rate exceeds the upper capacity")
    k = family.num_states
    payoff = np.array([[0.0 if t in s else 1.0 for t in range(k)] for s in subsets])
    sol = matrix_game(payoff)
    u = jammer_value(subsets, k)[0]
    if abs(sol.value - u) > GAME_TOL:
        raise SolverError(f"game value {sol.value} differs from U(R)={u}")
    dist = {s: float(p) for s, p in zip(subsets, sol.row_strategy) if p > 1e-12}
    return OptimalPV(dist, float(sol.value), sol.col_strategy)


def eps_capacity_compound(curves: CurvePair, eps: float) -> float:
    """``sup{R : L(R) <= eps}``, cross-checked against the same readoff from U."""
    if not 0 <= eps < 1:
        raise InvalidInputError("eps must lie in [0, 1)")

    def readoff(f: StepFunction) -> float:
        bps = f.breakpoints
        if f.values[0] > eps:
            return 0.0
        for j in range(1, len(bps) + 1):
            if f.values[j] > eps:
                return max(bps[j - 1], 0.0)
        return math.inf

    from_L, from_U = readoff(curves.L), readoff(curves.U)
    if from_L != from_U:
        raise SolverError(f"eps-capacity readoffs disagree: {from_L} vs {from_U}")
    return from_L
