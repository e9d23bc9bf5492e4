"""Finite-blocklength bounds on the jamming game value.

Internally every log is natural (densities, thresholds, exponents); rates
passed in or reported are bits per channel use.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .capacity import DEFAULT_TOL, CapacityResult, compound_capacity, divergences, subset_capacities
from .channels import ChannelFamily, as_prob, message_count, round_distribution, uniform
from .curves import optimal_PV, subsets_at_rate
from .errors import CapExceededError, InvalidInputError
from .spectrum import ProductDensityLaw, sum_tail, type_density_law

LN2 = math.log(2.0)
TYPE_CAP = 10**7
VARIANCE_MARGIN = 1.05


@dataclass(frozen=True)
class TypeClass:
    counts: tuple

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def distribution(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.n


def type_count(alphabet: int, n: int) -> int:
    return math.comb(n + alphabet - 1, alphabet - 1)


def _compositions(n, k):
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def enumerate_types(alphabet: int, n: int, cap: int = TYPE_CAP) -> list:
    if n < 1 or alphabet < 1:
        raise InvalidInputError("need n >= 1 and a nonempty alphabet")
    count = type_count(alphabet, n)
    if count > cap:
        raise CapExceededError(f"{count} types exceed the cap {cap}")
    return [TypeClass(c) for c in _compositions(n, alphabet)]


def type_matrix(alphabet: int, n: int, cap: int = TYPE_CAP) -> np.ndarray:
    """All type distributions as rows of an array."""
    return np.array([t.counts for t in enumerate_types(alphabet, n, cap)], dtype=float) / n


@dataclass(frozen=True)
class BoundParams:
    """Free parameters of the bounds (nats). ``None`` means optimized or defaulted."""

    alpha: float | None = None
    delta: float | None = None
    gamma: float | None = None
    xi: float | None = None
    Delta: float | None = None
    beta: float | None = None
    rho: float | None = None
    reference_choice: str = "product"


# ---------------------------------------------------------------- achievability


@dataclass(frozen=True)
class AchievabilityTerms:
    value: float
    tail: float
    exp_neg_delta: float
    codebook: float
    alpha: float
    delta: float
    per_state_tail: tuple

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "max_theta P[i <= alpha+delta]": self.tail,
            "exp(-delta)": self.exp_neg_delta,
            "M|Theta|^2 exp(-alpha)": self.codebook,
            "alpha": self.alpha,
            "delta": self.delta,
        }


def _log_m(M) -> float:
    return math.log(M)


class _Laws:
    """Caches density laws keyed by (state, input, blocklength)."""

    def __init__(self, family: ChannelFamily):
        self.family = family
        self.cache = {}

    def get(self, state: int, px: np.ndarray, n: int) -> ProductDensityLaw:
        key = (state, px.tobytes(), n)
        if key not in self.cache:
            ch = self.family.channels[state]
            self.cache[key] = ProductDensityLaw(ch, px, ch.output_distribution(px), n)
        return self.cache[key]


def achievability_bound(
    family: ChannelFamily, px, n: int, M, alpha: float | None = None, delta: float | None = None,
    Delta: float | None = None, log_M: float | None = None, laws: _Laws | None = None,
) -> AchievabilityTerms:
    """Threshold-decoding bound for an i.i.d. input ``px``; clipped to 1.

    Either ``alpha`` and ``delta`` are given, or ``Delta`` selects
    ``alpha = log M + n Delta/2`` and ``delta = n Delta/2``, or the split of a
    threshold grid is optimized.
    """
    px = np.asarray(as_prob(px), dtype=float)
    lm = _log_m(M) if log_M is None else log_M
    k = family.num_states
    laws = laws or _Laws(family)
    log_K = lm + 2 * math.log(k)
    if alpha is None or delta is None:
        if Delta is not None:
            alpha, delta = lm + n * Delta / 2, n * Delta / 2
        else:
            return optimized_achievability(family, px, n, lm, laws)
    if alpha <= 0 or delta <= 0:
        raise InvalidInputError("alpha and delta must be positive")
    tails = tuple(float(laws.get(t, px, n).cdf(alpha + delta)[0]) for t in range(k))
    tail = max(tails)
    codebook = math.exp(min(log_K - alpha, 700.0))
    e_delta = math.exp(-delta)
    return AchievabilityTerms(min(1.0, tail + e_delta + codebook), tail, e_delta, codebook, alpha, delta, tails)


def optimized_achievability(family, px, n, log_M, laws=None, span: float = 80.0, points: int = 801):
    """Best threshold for the split ``alpha = (t + log K)/2``, ``delta = (t - log K)/2``."""
    laws = laws or _Laws(family)
    k = family.num_states
    log_K = log_M + 2 * math.log(k)
    t = log_K + np.linspace(span / (points - 1), span, points)
    tails = np.array([laws.get(s, px, n).cdf(t) for s in range(k)])
    worst = tails.max(axis=0)
    total = worst + 2.0 * np.exp(-(t - log_K) / 2)
    i = int(np.argmin(total))
    alpha, delta = (t[i] + log_K) / 2, (t[i] - log_K) / 2
    per = tuple(float(x) for x in tails[:, i])
    e = math.exp(-delta)
    return AchievabilityTerms(min(1.0, float(total[i])), float(worst[i]), e, e, alpha, delta, per)


def input_candidates(family: ChannelFamily, subset=None, tol: float = DEFAULT_TOL,
                     resolutions=(2, 4, 8, 16, 64)) -> list:
    """Inputs near the compound-capacity optimum, rounded to coarse grids, plus uniform."""
    cap = compound_capacity(family, subset, tol)
    cands = [np.asarray(uniform(family.input_size))]
    for r in resolutions:
        cands.append(round_distribution(cap.optimal_input, r))
    out = []
    for c in cands:
        if not any(np.array_equal(c, o) for o in out):
            out.append(c)
    return out


def best_achievability(family, n, log_M, candidates, laws=None):
    """Smallest optimized bound over candidate inputs whose laws are computable."""
    best = None
    for px in candidates:
        try:
            res = optimized_achievability(family, px, n, log_M, laws)
        except CapExceededError:
            continue
        if best is None or res.value < best[0].value:
            best = (res, px)
    if best is None:
        raise CapExceededError(f"no candidate input admits exact density tails at n={n}")
    return best


@dataclass
class SplitBound:
    value: float
    misclassification: float
    lam: float
    err_prefix: float
    err_message: dict
    n1: int
    pv: dict
    prefix_input: np.ndarray | None = None
    message_inputs: dict = field(default_factory=dict)
    prefix_terms: AchievabilityTerms | None = None
    message_terms: dict = field(default_factory=dict)

    def to_dict(self, labels=None) -> dict:
        name = (lambda s: [labels[i] for i in sorted(s)]) if labels else sorted
        return {
            "value": self.value,
            "U(R)": self.misclassification,
            "2*lambda": 2 * self.lam,
            "lambda": self.lam,
            "err_V": self.err_prefix,
            "err_S": [{"subset": name(v), "err": e} for v, e in self.err_message.items()],
            "n1": self.n1,
            "P_V": [{"subset": name(v), "prob": p} for v, p in self.pv.items()],
        }


def _n1_candidates(n: int) -> list:
    base = {max(1, math.ceil(math.sqrt(n)))}
    x = 1
    while x < n:
        base.add(x)
        x *= 2
    for f in (1.5, 3.0):
        base.add(max(1, int(f * math.sqrt(n))))
    return sorted(v for v in base if 0 < v < n)


def split_achievability_bound(
    family: ChannelFamily, n: int, R: float, n1: int | None = None, tol: float = DEFAULT_TOL,
    capacities: dict | None = None,
) -> SplitBound:
    """Bound ``U(R) + 2 lambda`` for the prefix-randomized subset code.

    The prefix of length ``n1`` tells the decoder which subset codebook is in
    use; the rest carries the message at rate R over the chosen subset.
    """
    if n < 2:
        raise InvalidInputError("the split scheme needs n >= 2")
    caps = capacities or subset_capacities(family, tol)
    try:
        pv = optimal_PV(family, R, tol, capacities=caps)
    except InvalidInputError:
        return SplitBound(1.0, 1.0, 0.0, 0.0, {}, n1 or 0, {})
    dist = pv.distribution
    log_M = math.log(message_count(n, R))
    laws = _Laws(family)
    cand_full = input_candidates(family, None, tol)
    cand_v = {v: input_candidates(family, v, tol) for v in dist}
    sub_laws = {v: _Laws(family.subfamily(v)) for v in dist}
    log_V = math.log(len(dist)) if len(dist) > 1 else 0.0

    def evaluate(m1):
        if len(dist) > 1:
            pre, pre_px = best_achievability(family, m1, log_V, cand_full, laws)
        else:
            pre, pre_px = None, None
        errs, terms, inputs = {}, {}, {}
        for v in dist:
            sub = family.subfamily(v)
            res, px = best_achievability(sub, n - m1, log_M, cand_v[v], sub_laws[v])
            errs[v], terms[v], inputs[v] = res.value, res, px
        e_pre = pre.value if pre is not None else 0.0
        lam = max([e_pre] + list(errs.values()))
        return SplitBound(min(1.0, pv.game_value + 2 * lam), pv.game_value, lam, e_pre, errs, m1,
                          dict(dist), pre_px, inputs, pre, terms)

    if len(dist) == 1:
        # a single subset needs no prefix; n1 only shortens the message block
        return evaluate(n1 or 1)
    options = [n1] if n1 else _n1_candidates(n)
    best = None
    for m1 in options:
        try:
            res = evaluate(m1)
        except CapExceededError:
            continue
        if best is None or res.value < best.value:
            best = res
    if best is None:
        raise CapExceededError(f"split bound needs exact tails that are not computable at n={n}")
    return best


# ---------------------------------------------------------------- converse


@dataclass(frozen=True)
class ChebyshevConstants:
    A_of_xi: float
    F_of_beta: float
    variance_bound: float
    conditional_variance: float
    unconditional_variance: float
    xi: float | None = None
    beta: float | None = None


def _density_variances(P: np.ndarray, W: np.ndarray):
    """Conditional (given input) and unconditional variance of the density, nats^2, per row of P."""
    out = P @ W
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(W[None] > 0, np.log(np.where(W[None] > 0, W[None], 1.0)) -
                        np.log(np.where(out[:, None, :] > 0, out[:, None, :], 1.0)), 0.0)
    m1 = (W[None] * logr).sum(axis=2)
    m2 = (W[None] * logr**2).sum(axis=2)
    cond = (P * (m2 - m1**2)).sum(axis=1)
    mean = (P * m1).sum(axis=1)
    uncond = (P * m2).sum(axis=1) - mean**2
    return np.maximum(cond, 0.0), np.maximum(uncond, 0.0)


def _simplex_grid(k: int, r: int) -> np.ndarray:
    return np.array(list(_compositions(r, k)), dtype=float) / r


def max_density_variances(family: ChannelFamily, max_points: int = 400_000):
    """Sup over the input simplex and states of both variances, grid refined until stable to 1%."""
    k = family.input_size
    prev = None
    r = 4
    while True:
        P = _simplex_grid(k, r)
        vals = np.array([[v.max() for v in _density_variances(P, ch.matrix)] for ch in family.channels])
        cur = vals.max(axis=0)
        if prev is not None and np.all(np.abs(cur - prev) <= 0.01 * np.maximum(cur, 1e-12)):
            return tuple(float(x) * VARIANCE_MARGIN for x in cur)
        nxt = r * 2
        if math.comb(nxt + k - 1, k - 1) > max_points:
            return tuple(float(x) * VARIANCE_MARGIN for x in cur)
        prev, r = cur, nxt


def chebyshev_constants(family: ChannelFamily, xi: float | None = None, beta: float | None = None,
                        variances=None) -> ChebyshevConstants:
    """Chebyshev surrogates ``A(xi) = V_cond/xi^2`` and ``F(beta) = V/beta^2``."""
    for name, val in (("xi", xi), ("beta", beta)):
        if val is not None and val <= 0:
            raise InvalidInputError(f"{name} must be positive")
    v_cond, v_all = variances or max_density_variances(family)
    A = v_cond / xi**2 if xi else math.nan
    F = v_all / beta**2 if beta else math.nan
    return ChebyshevConstants(A, F, max(v_cond, v_all), v_cond, v_all, xi, beta)


@dataclass(frozen=True)
class ConverseTerms:
    value: float
    indicator_mass: float
    A_over_n: float
    exp_neg_n_xi: float
    threshold_bits: float
    xi: float
    method: str
    witness: tuple = ()

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "sum_theta q 1{I <= R - 2xi - log|T|/n}": self.indicator_mass,
            "A(xi)/n": self.A_over_n,
            "exp(-n xi)": self.exp_neg_n_xi,
            "threshold_bits": self.threshold_bits,
            "xi": self.xi,
            "method": self.method,
        }


def _mi_nats(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.array([p @ divergences(p, W) for p in P]) * LN2


def _type_mi_table(family, n, cap):
    P = type_matrix(family.input_size, n, cap)
    out = P @ family.matrices  # (states, types, outputs)
    W = family.matrices
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(W[:, None] > 0, W[:, None] * (np.log(np.where(W[:, None] > 0, W[:, None], 1.0))
                         - np.log(np.where(out[:, :, None, :] > 0, out[:, :, None, :], 1.0))), 0.0)
    I = np.einsum("ta,sta->ts", P, terms.sum(axis=3))
    return P, I  # I: (types, states) in nats


def converse_threshold(n: int, R: float, xi: float, alphabet: int) -> float:
    """``R - 2 xi - log|T|/n`` in nats."""
    return R * LN2 - 2 * xi - math.log(type_count(alphabet, n)) / n


def type_converse(
    family: ChannelFamily, q, n: int, R: float, xi: float, constants: ChebyshevConstants | None = None,
    method: str = "auto", type_cap: int = 200_000, capacities: dict | None = None, tol: float = DEFAULT_TOL,
) -> ConverseTerms:
    """Type-based lower bound on the lower value for jammer strategy q, clipped to [0, 1].

    ``method="types"`` minimizes the indicator mass over all input types;
    ``method="subsets"`` minimizes over subsets whose compound capacity (upper
    bracket) clears the threshold, which is never larger and needs no type
    enumeration.
    """
    q = np.asarray(as_prob(q), dtype=float)
    if q.size != family.num_states:
        raise InvalidInputError("q must have one entry per state")
    if xi <= 0:
        raise InvalidInputError("xi must be positive")
    if constants is None:
        constants = chebyshev_constants(family, xi=xi)
    A = constants.A_of_xi if constants.xi == xi else constants.conditional_variance / xi**2
    thr = converse_threshold(n, R, xi, family.input_size)
    if method == "auto":
        method = "types" if type_count(family.input_size, n) <= type_cap else "subsets"
    if method == "types":
        P, I = _type_mi_table(family, n, type_cap)
        masses = (I <= thr + 1e-12).astype(float) @ q
        j = int(np.argmin(masses))
        mass, witness = float(masses[j]), tuple(P[j])
    elif method == "subsets":
        caps = capacities or subset_capacities(family, tol)
        mass, witness = 1.0, ()
        for s, c in caps.items():
            up = c.upper if isinstance(c, CapacityResult) else float(c)
            if up * LN2 > thr:
                m = float(sum(q[i] for i in range(q.size) if i not in s))
                if m < mass:
                    mass, witness = m, tuple(sorted(s))
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    a_n = A / n
    e = math.exp(-n * xi)
    val = min(1.0, max(0.0, mass - a_n - e))
    return ConverseTerms(val, mass, a_n, e, thr / LN2, xi, method, witness)


def _q_grid(k: int, step: float) -> np.ndarray:
    r = int(round(1 / step))
    return _simplex_grid(k, r)


def best_type_converse(family, n, R, xis=None, q_step=None, method="auto", type_cap=200_000,
                       capacities=None, tol=DEFAULT_TOL, variances=None):
    """Max over a q-grid (with local refinement) and an xi-grid of the type converse."""
    k = family.num_states
    if q_step is None:
        q_step = 0.01 if k <= 3 else (0.05 if k == 4 else 0.1)
    if xis is None:
        xis = np.geomspace(1e-4, 1.0, 41)
    variances = variances or max_density_variances(family)
    if method == "auto":
        method = "types" if type_count(family.input_size, n) <= type_cap else "subsets"
    if method == "types":
        P, I = _type_mi_table(family, n, type_cap)
    else:
        caps = capacities or subset_capacities(family, tol)
        subsets = list(caps)
        uppers = np.array([caps[s].upper if isinstance(caps[s], CapacityResult) else float(caps[s])
                           for s in subsets]) * LN2
        comp = np.array([[0.0 if i in s else 1.0 for i in range(k)] for s in subsets])

    def masses_for(thr, Q):
        if method == "types":
            return ((I <= thr + 1e-12).astype(float) @ Q.T).min(axis=0)
        ok = uppers > thr
        if not ok.any():
            return np.ones(Q.shape[0])
        return (comp[ok] @ Q.T).min(axis=0)

    best = None
    Q = _q_grid(k, q_step)
    for xi in xis:
        thr = converse_threshold(n, R, xi, family.input_size)
        pen = variances[0] / xi**2 / n + math.exp(-n * xi)
        m = masses_for(thr, Q)
        j = int(np.argmax(m))
        val = m[j] - pen
        if best is None or val > best[0]:
            best = (val, Q[j], xi, m[j])
    # local refinement around the best q
    val, q0, xi, _ = best
    fine = np.clip(q0[None, :] + q_step * (_q_grid(k, 0.1) - 1.0 / k), 0.0, None)
    fine = fine[np.abs(fine.sum(axis=1) - 1.0) < 1e-9]
    if fine.size:
        thr = converse_threshold(n, R, xi, family.input_size)
        m = masses_for(thr, fine)
        j = int(np.argmax(m))
        pen = variances[0] / xi**2 / n + math.exp(-n * xi)
        if m[j] - pen > val:
            best = (m[j] - pen, fine[j], xi, m[j])
    val, q, xi, mass = best
    consts = ChebyshevConstants(variances[0] / xi**2, math.nan, max(variances), variances[0], variances[1], xi)
    terms = type_converse(family, q / q.sum(), n, R, xi, consts, method, type_cap, capacities, tol)
    return terms, q / q.sum()


def type_mixture_reference(family: ChannelFamily, n: int) -> np.ndarray:
    """``(1/|T|) sum_P prod_i (P W_t)(y_i)`` over all types, shape (states, |B|^n)."""
    P = type_matrix(family.input_size, n)
    refs = []
    for ch in family.channels:
        acc = np.zeros(family.output_size**n)
        for p in P:
            row = np.ones(1)
            o = p @ ch.matrix
            for _ in range(n):
                row = np.kron(row, o)
            acc += row
        refs.append(acc / P.shape[0])
    return np.array(refs)


def dual_converse(
    family: ChannelFamily, q, n: int, M, gamma: float, reference=None, exact_cap: int = 10**6,
    clip: bool = True,
) -> float:
    """Lower bound ``min_x sum_y sum_t q_t min{P_t(y|x), Pbar_t(y) M e^-gamma} - e^-gamma``.

    Exact by enumeration when small (``reference`` defaults to the type mixture);
    otherwise the tail weakening over types with per-type product references and
    the ``log|T|`` shift.
    """
    q = np.asarray(as_prob(q), dtype=float)
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    A, B, k = family.input_size, family.output_size, family.num_states
    log_M = math.log(M)
    size = (A**n) * (B**n) * k
    if size <= exact_cap:
        Wn = family.block_matrices(n)
        ref = type_mixture_reference(family, n) if reference is None else np.asarray(reference, float)
        if ref.shape == (k, B):
            ref = np.array([_kron_power(r, n) for r in ref])
        c = math.exp(log_M - gamma)
        inner = np.minimum(Wn, ref[:, None, :] * c).sum(axis=2)  # (states, |X|)
        val = float((q @ inner).min()) - math.exp(-gamma)
    else:
        if reference is not None:
            raise CapExceededError("a custom reference needs exact enumeration, which exceeds the cap")
        types = enumerate_types(A, n, cap=5000)
        shift = math.log(type_count(A, n))
        t = log_M - gamma - shift
        best = math.inf
        for tc in types:
            p = tc.distribution
            s = 0.0
            for i, ch in enumerate(family.channels):
                if q[i] == 0:
                    continue
                parts = type_density_law(ch, tc.counts, ch.output_distribution(p))
                s += q[i] * float(sum_tail(parts, [t])[0])
            best = min(best, s)
        val = best - math.exp(-gamma)
    return max(0.0, val) if clip else val


def _kron_power(v, n):
    out = np.ones(1)
    for _ in range(n):
        out = np.kron(out, v)
    return out


# ---------------------------------------------------------------- gap report


@dataclass
class BoundReport:
    n: int
    R: float
    achievability_upper: float
    converse_lower: float
    components: dict
    params: dict

    @property
    def gap(self) -> float:
        return self.achievability_upper - self.converse_lower

    def below(self, threshold: float) -> bool:
        return self.gap <= threshold

    def to_dict(self) -> dict:
        return {"n": self.n, "R": self.R, "achievability_upper": self.achievability_upper,
                "converse_lower": self.converse_lower, "gap": self.gap,
                "components": self.components, "params": self.params}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, frozenset):
        return sorted(o)
    raise TypeError(type(o))


def lemma_indicator_upper(family, px, n, R, Delta, beta, rho, variances):
    """``max_t 1{I_px(t) <= R + Delta + rho + beta} + F(beta)/n + exp(-n Delta/2)(|T|^2 + 1)`` (nats inside)."""
    I = np.array([px @ divergences(px, ch.matrix) for ch in family.channels]) * LN2
    ind = float(np.max(I <= R * LN2 + Delta + rho + beta))
    f_n = variances[1] / beta**2 / n
    e = math.exp(-n * Delta / 2) * (family.num_states**2 + 1)
    return {"max_theta 1{I_Px <= R+Delta+rho+beta}": ind, "F(beta)/n": f_n,
            "exp(-n Delta/2)(|Theta|^2+1)": e, "value": min(1.0, ind + f_n + e)}


def gap_report(
    family: ChannelFamily, n: int, R: float, params: BoundParams | None = None, tol: float = DEFAULT_TOL,
    capacities: dict | None = None, use_split: bool = True, n1: int | None = None,
) -> BoundReport:
    """Achievability upper bound minus best type converse, with every term itemized."""
    params = params or BoundParams()
    caps = capacities or subset_capacities(family, tol)
    log_M = math.log(message_count(n, R))
    variances = max_density_variances(family)
    comps: dict = {}

    uppers = []
    try:
        cands = input_candidates(family, None, tol)
        if params.alpha is not None and params.delta is not None:
            res = min((achievability_bound(family, px, n, None, params.alpha, params.delta, log_M=log_M)
                       for px in cands), key=lambda r: r.value)
        else:
            res, _ = best_achievability(family, n, log_M, cands)
        comps["threshold_decoding"] = res.to_dict()
        uppers.append(res.value)
    except CapExceededError as exc:
        comps["threshold_decoding"] = {"unavailable": str(exc)}
    if use_split and n >= 2:
        try:
            sb = split_achievability_bound(family, n, R, n1, tol, caps)
            comps["split"] = sb.to_dict(family.labels)
            uppers.append(sb.value)
        except CapExceededError as exc:
            comps["split"] = {"unavailable": str(exc)}
    upper = min(uppers) if uppers else 1.0

    xis = [params.xi] if params.xi else None
    conv, q = best_type_converse(family, n, R, xis=xis, capacities=caps, tol=tol, variances=variances)
    comps["converse"] = conv.to_dict()
    comps["converse"]["q"] = q.tolist()

    c_low = caps[max(caps, key=len)].value
    Delta = params.Delta if params.Delta is not None else max(abs(R - c_low) * LN2 / 4, 1e-3)
    beta = params.beta if params.beta is not None else Delta
    rho = params.rho if params.rho is not None else max(log_M / n - R * LN2, 0.0)
    px = input_candidates(family, None, tol)[-1]
    comps["lemma_indicator_form"] = lemma_indicator_upper(family, px, n, R, Delta, beta, rho, variances)
    comps["chebyshev"] = {"V_conditional": variances[0], "V_unconditional": variances[1]}
    used = asdict(params)
    used.update({"Delta": Delta, "beta": beta, "rho": rho, "xi": conv.xi, "tol": tol})
    return BoundReport(n, R, upper, conv.value, comps, used)
