"""Explicit codes: greedy threshold-decoding construction, prefix-split codes, exact evaluation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import DEFAULT_TOL, compound_capacity, subset_capacities
from .channels import ChannelFamily, as_prob, index_string, message_count, round_distribution
from .curves import optimal_PV
from .errors import CapExceededError, InvalidInputError, SolverError
from .fbl import optimized_achievability

ENUM_CAP = 10**6
EVAL_CAP = 10**7


def _kron_rows(W: np.ndarray, x: tuple) -> np.ndarray:
    row = np.ones(1)
    for a in x:
        row = np.kron(row, W[a])
    return row


@dataclass(frozen=True, eq=False)
class DeterministicCode:
    """Encoder: message -> input-string index. Decoder: output-string index -> message."""

    n: int
    input_size: int
    output_size: int
    encoder: np.ndarray
    decoder: np.ndarray

    def __post_init__(self):
        enc = np.asarray(self.encoder, dtype=np.int64)
        dec = np.asarray(self.decoder, dtype=np.int64)
        if enc.ndim != 1 or enc.size < 1:
            raise InvalidInputError("encoder must list at least one codeword")
        if np.any(enc < 0) or np.any(enc >= self.input_size**self.n):
            raise InvalidInputError("codeword index outside the input block alphabet")
        if dec.shape != (self.output_size**self.n,):
            raise InvalidInputError("decoder must be total on all output strings")
        if np.any(dec < 0) or np.any(dec >= enc.size):
            raise InvalidInputError("decoder maps to an unknown message")
        enc.setflags(write=False)
        dec.setflags(write=False)
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    @property
    def M(self) -> int:
        return self.encoder.size

    def codeword(self, s: int) -> tuple:
        return index_string(int(self.encoder[s]), self.input_size, self.n)

    def to_dict(self) -> dict:
        return {
            "kind": "deterministic",
            "n": self.n,
            "M": self.M,
            "input_alphabet": self.input_size,
            "output_alphabet": self.output_size,
            "encoder": [list(self.codeword(s)) for s in range(self.M)],
            "decoder": [
                {"y": list(index_string(i, self.output_size, self.n)), "s": int(s)}
                for i, s in enumerate(self.decoder)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeterministicCode":
        n, a, b = d["n"], d["input_alphabet"], d["output_alphabet"]
        enc = [sum(v * a ** (n - 1 - i) for i, v in enumerate(x)) for x in d["encoder"]]
        dec = np.zeros(b**n, dtype=np.int64)
        for item in d["decoder"]:
            dec[sum(v * b ** (n - 1 - i) for i, v in enumerate(item["y"]))] = item["s"]
        return cls(n, a, b, np.array(enc), dec)


@dataclass(frozen=True, eq=False)
class SplitCode:
    """Random prefix selects a subset codebook; the prefix decoder picks the message decoder."""

    n: int
    n1: int
    subsets: tuple
    pv: np.ndarray
    prefix_code: DeterministicCode
    message_codes: tuple

    def __post_init__(self):
        if not 0 < self.n1 < self.n:
            raise InvalidInputError("prefix length must satisfy 0 < n1 < n")
        pv = as_prob(self.pv, tol=1e-9)
        object.__setattr__(self, "pv", pv)
        if len(self.subsets) != pv.size or len(self.message_codes) != pv.size:
            raise InvalidInputError("one subset, probability and message code per prefix symbol")
        if self.prefix_code.M != pv.size or self.prefix_code.n != self.n1:
            raise InvalidInputError("prefix code must carry one message per subset on n1 letters")
        Ms = {c.M for c in self.message_codes}
        if len(Ms) != 1 or any(c.n != self.n - self.n1 for c in self.message_codes):
            raise InvalidInputError("message codes must share M and have blocklength n - n1")

    @property
    def M(self) -> int:
        return self.message_codes[0].M

    def to_dict(self, labels=None) -> dict:
        name = (lambda s: [labels[i] for i in sorted(s)]) if labels else sorted
        return {
            "kind": "split",
            "n": self.n,
            "n1": self.n1,
            "subsets": [name(s) for s in self.subsets],
            "P_V": self.pv.tolist(),
            "prefix_code": self.prefix_code.to_dict(),
            "message_codes": [c.to_dict() for c in self.message_codes],
        }


@dataclass
class CodeErrorReport:
    per_state_per_message: np.ndarray
    per_state_avg: np.ndarray
    worst_state_avg: float
    avg_under_q: float | None = None
    exact: bool = True
    half_width: float = 0.0

    def to_dict(self) -> dict:
        return {
            "per_state_per_message": self.per_state_per_message.tolist(),
            "per_state_avg": self.per_state_avg.tolist(),
            "worst_state_avg": self.worst_state_avg,
            "avg_under_q": self.avg_under_q,
            "exact": self.exact,
            "half_width": self.half_width,
        }

    def to_csv(self) -> str:
        lines = ["# schema: jamgame.code_errors/1 columns=state,message,error", "state,message,error"]
        for t, row in enumerate(self.per_state_per_message):
            lines += [f"{t},{s},{e!r}" for s, e in enumerate(row)]
        return "\n".join(lines) + "\n"


def _check_alphabets(code, family):
    c = code.prefix_code if isinstance(code, SplitCode) else code
    if (c.input_size, c.output_size) != (family.input_size, family.output_size):
        raise InvalidInputError("code alphabets do not match the channel family")


def _correct_probs(code: DeterministicCode, W: np.ndarray) -> np.ndarray:
    """``P[g(Y) = s' | f(s)]`` as an (M, M) matrix for one state."""
    rows = np.array([_kron_rows(W, code.codeword(s)) for s in range(code.M)])
    out = np.zeros((code.M, code.M))
    for sp in range(code.M):
        out[:, sp] = rows[:, code.decoder == sp].sum(axis=1)
    return out


def _decoding_matrix(code: DeterministicCode, W: np.ndarray) -> np.ndarray:
    if code.M * code.M * code.output_size**code.n > 4 * EVAL_CAP:
        # only the diagonal is needed by most callers
        rows = np.array([_kron_rows(W, code.codeword(s)) for s in range(code.M)])
        return np.diag([rows[s, code.decoder == s].sum() for s in range(code.M)])
    return _correct_probs(code, W)


def _mc_errors(code: DeterministicCode, W: np.ndarray, samples: int, rng) -> np.ndarray:
    b = code.output_size
    weights = b ** np.arange(code.n - 1, -1, -1)
    errs = np.zeros(code.M)
    for s in range(code.M):
        x = code.codeword(s)
        ys = np.stack([rng.choice(b, size=samples, p=W[a]) for a in x], axis=1)
        errs[s] = np.mean(code.decoder[ys @ weights] != s)
    return errs


def evaluate_code(code, family: ChannelFamily, q=None, mc_samples: int | None = None, seed: int = 0,
                  cap: int = EVAL_CAP) -> CodeErrorReport:
    """Per-state, per-message error probabilities, exact whenever the sums fit under ``cap``."""
    _check_alphabets(code, family)
    Ws = family.matrices
    if isinstance(code, SplitCode):
        errs = np.array([_split_errors(code, W) for W in Ws])
        exact, hw = True, 0.0
    else:
        work = code.M * code.output_size**code.n
        if work <= cap and mc_samples is None:
            errs = np.array([[1.0 - _kron_rows(W, code.codeword(s))[code.decoder == s].sum()
                              for s in range(code.M)] for W in Ws])
            exact, hw = True, 0.0
        else:
            rng = np.random.default_rng(seed)
            samples = mc_samples or 10_000
            errs = np.array([_mc_errors(code, W, samples, rng) for W in Ws])
            exact = False
            hw = float(1.96 * np.sqrt(np.maximum(errs * (1 - errs), 0.25 / samples) / samples).max())
    errs = np.clip(errs, 0.0, 1.0)
    avg = errs.mean(axis=1)
    under_q = None
    if q is not None:
        q = np.asarray(as_prob(q), dtype=float)
        if q.size != family.num_states:
            raise InvalidInputError("q must have one entry per state")
        under_q = float(q @ avg)
    return CodeErrorReport(errs, avg, float(avg.max()), under_q, exact, hw)


def _split_errors(code: SplitCode, W: np.ndarray) -> np.ndarray:
    """Per-message error of the split code for one state, averaged over the prefix symbol."""
    pre = _correct_probs(code.prefix_code, W)  # pre[v, v'] = P[prefix decodes v' | v sent]
    k = len(code.subsets)
    n2 = code.n - code.n1
    rows = {}
    for v in range(k):
        mc = code.message_codes[v]
        rows[v] = np.array([_kron_rows(W, mc.codeword(s)) for s in range(mc.M)])
    err = np.zeros(code.M)
    for v in range(k):
        for vp in range(k):
            if pre[v, vp] == 0:
                continue
            dec = code.message_codes[vp].decoder
            # P[g_vp(Y) = s | f_v(s)] for each s
            hit = np.array([rows[v][s, dec == s].sum() for s in range(code.M)])
            err += code.pv[v] * pre[v, vp] * (1.0 - hit)
        err += code.pv[v] * (1.0 - pre[v].sum())
    return err


def split_decomposition(code: SplitCode, family: ChannelFamily) -> dict:
    """Per state: misclassification mass and conditional error terms of the split code."""
    out = {"misclassification": [], "prefix_error": [], "message_error": [], "bound": []}
    for t, W in enumerate(family.matrices):
        pre = _correct_probs(code.prefix_code, W)
        mis, pe, me, bound = 0.0, [], [], 0.0
        for v, s in enumerate(code.subsets):
            p_err = 1.0 - pre[v, v]
            mc = code.message_codes[v]
            m_err = float(np.mean([1.0 - _kron_rows(W, mc.codeword(j))[mc.decoder == j].sum()
                                   for j in range(mc.M)]))
            pe.append(p_err)
            me.append(m_err)
            if t in s:
                bound += code.pv[v] * min(1.0, p_err + m_err)
            else:
                mis += code.pv[v]
                bound += code.pv[v]
        out["misclassification"].append(mis)
        out["prefix_error"].append(pe)
        out["message_error"].append(me)
        out["bound"].append(bound)
    return out


def ml_decoder(family: ChannelFamily, n: int, encoder, q=None) -> np.ndarray:
    """Maximum-likelihood decoder table under the q-mixture (uniform q by default)."""
    k = family.num_states
    q = np.full(k, 1.0 / k) if q is None else np.asarray(as_prob(q), dtype=float)
    b = family.output_size
    lik = np.zeros((len(encoder), b**n))
    for t, W in enumerate(family.matrices):
        if q[t] == 0:
            continue
        for s, xi in enumerate(encoder):
            lik[s] += q[t] * _kron_rows(W, index_string(int(xi), family.input_size, n))
    return np.argmax(lik, axis=0)


# ---------------------------------------------------------------- greedy construction


@dataclass
class FeinsteinResult:
    code: DeterministicCode
    lambda_bound: float
    lambda_achieved: float
    K: int
    alpha: float
    decoding_sets: list
    codewords: list
    stop_check: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.code, self.lambda_achieved))


def _density_tables(family: ChannelFamily, n: int, px: np.ndarray):
    A, B = family.input_size, family.output_size
    if A**n > ENUM_CAP:
        raise CapExceededError(f"{A**n} input strings exceed the enumeration cap {ENUM_CAP}")
    if family.num_states * A**n * B**n > 50 * ENUM_CAP:
        raise CapExceededError("block transition tables exceed the memory cap")
    Wn = family.block_matrices(n)  # (states, X, Y)
    pxn = np.ones(1)
    for _ in range(n):
        pxn = np.kron(pxn, px)
    py = (pxn @ Wn).mean(axis=0)
    with np.errstate(divide="ignore"):
        dens = np.where(Wn > 0, np.log(np.where(Wn > 0, Wn, 1.0)) - np.log(np.where(py > 0, py, 1e-300)), -np.inf)
    return Wn, pxn, py, dens


def _lambda_formula(Wn, pxn, dens, alpha, M):
    k = Wn.shape[0]
    tails = np.array([(pxn[:, None] * Wn[t] * (dens[t] <= alpha)).sum() for t in range(k)])
    return float(tails.max() + M * k * k * math.exp(-alpha)), tails


def best_alpha(Wn, pxn, dens, M) -> float:
    """Threshold minimizing the greedy-construction error level over density atom values."""
    k = Wn.shape[0]
    mask = (pxn[None, :, None] > 0) & np.isfinite(dens) & (Wn > 0)
    vals = np.unique(dens[mask])
    cands = vals - 1e-9 * np.maximum(1.0, np.abs(vals))
    cands = np.concatenate([cands, vals[-1:] + 1.0]) if vals.size else np.array([1.0])
    cands = cands[cands > 0]
    if cands.size == 0:
        return 1e-9
    mass = (pxn[None, :, None] * Wn)
    best = (math.inf, cands[0])
    for a in cands:
        tails = max(float(mass[t][dens[t] <= a].sum()) for t in range(k))
        lam = tails + M * k * k * math.exp(-a)
        if lam < best[0]:
            best = (lam, a)
    return float(best[1])


def feinstein_build(family: ChannelFamily, n: int, M_target: int, alpha: float | None = None,
                    px=None) -> FeinsteinResult:
    """Greedy maximal code with threshold decoding sets valid for every state at once."""
    if M_target < 1:
        raise InvalidInputError("M_target must be positive")
    A, B, k = family.input_size, family.output_size, family.num_states
    px = np.full(A, 1.0 / A) if px is None else np.asarray(as_prob(px), dtype=float)
    Wn, pxn, py, dens = _density_tables(family, n, px)
    if alpha is None:
        alpha = best_alpha(Wn, pxn, dens, M_target)
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    lam, tails = _lambda_formula(Wn, pxn, dens, alpha, M_target)
    Bsets = dens >= alpha  # (states, X, Y)
    used = np.zeros(B**n, dtype=bool)
    chosen, sets = [], []
    for x in range(A**n):
        free = Bsets[:, x, :] & ~used[None, :]
        mass = (Wn[:, x, :] * free).sum(axis=1)
        if mass.min() >= 1.0 - lam - 1e-12:
            D = free.any(axis=0)
            chosen.append(x)
            sets.append(np.flatnonzero(D))
            used |= D
    K = len(chosen)
    if lam < 1.0 and K < M_target:
        raise SolverError(f"greedy construction stopped at K={K} < M={M_target} although lambda={lam:.6g} < 1")

    # stop-rule sandwich: for every x some state fails the selection test
    stop = {}
    if K < A**n:
        rem = np.zeros((k, A**n))
        for t in range(k):
            free = Bsets[t] & ~used[None, :]
            rem[t] = (Wn[t] * free).sum(axis=1)
        theta0 = np.argmin(rem, axis=0)
        covered = np.array([[Wn[t, x, used].sum() for x in range(A**n)] for t in range(k)])
        inB = np.array([[(Wn[t, x] * Bsets[t, x]).sum() for x in range(A**n)] for t in range(k)])
        cols = np.arange(A**n)
        avg = float(pxn @ (1 - inB[theta0, cols] + covered[theta0, cols]))
        stop = {
            "lambda": lam,
            "averaged_stop_bound": avg,
            "sum_state_bound": float(tails.sum() + K * k * k * math.exp(-alpha)),
            "max_state_bound": float(tails.max() + K * k * k * math.exp(-alpha)),
        }

    take = chosen[:M_target]
    pad = M_target - len(take)
    enc = take + [take[-1] if take else 0] * pad
    dec = np.zeros(B**n, dtype=np.int64)
    for j, D in enumerate(sets[:M_target]):
        dec[D] = j
    code = DeterministicCode(n, A, B, np.array(enc), dec)
    # measured error with the decoding sets (outside every set counts as an error)
    errs = np.zeros((k, M_target))
    for j in range(M_target):
        D = sets[j] if j < len(sets) else np.array([], dtype=int)
        for t in range(k):
            errs[t, j] = 1.0 - Wn[t, enc[j], D].sum()
    achieved = float(errs.max())
    return FeinsteinResult(code, lam, achieved, K, float(alpha), sets[:M_target], take, stop)


@dataclass
class SplitBuildResult:
    code: SplitCode
    misclassification: float
    lambda_bound: float
    prefix: FeinsteinResult
    message: dict

    def __iter__(self):
        return iter((self.code, self.lambda_bound))


def _rounded_input(family, subset, tol, resolution=16):
    return round_distribution(compound_capacity(family, subset, tol).optimal_input, resolution)


def split_build(family: ChannelFamily, n: int, n1: int | None, R: float, tol: float = DEFAULT_TOL,
                capacities: dict | None = None) -> SplitBuildResult:
    """Assemble the prefix-randomized subset code at rate R (bits/use)."""
    n1 = n1 or max(1, math.ceil(math.sqrt(n)))
    if not 0 < n1 < n:
        raise InvalidInputError("need 0 < n1 < n")
    caps = capacities or subset_capacities(family, tol)
    pv = optimal_PV(family, R, tol, capacities=caps)
    subsets = tuple(pv.distribution)
    probs = np.array([pv.distribution[s] for s in subsets])
    probs = probs / probs.sum()
    M = message_count(n, R)
    n2 = n - n1
    px_full = _rounded_input(family, None, tol)
    prefix = feinstein_build(family, n1, len(subsets), px=px_full)
    lam_terms = []
    if len(subsets) > 1:
        lam_terms.append(optimized_achievability(family, px_full, n1, math.log(len(subsets))).value)
    message = {}
    for v in subsets:
        sub = family.subfamily(v)
        px_v = _rounded_input(family, v, tol)
        try:
            res = feinstein_build(sub, n2, M, px=px_v)
        except CapExceededError as exc:
            raise CapExceededError(f"message code for subset {sorted(v)}: {exc}") from exc
        message[v] = res
        lam_terms.append(optimized_achievability(sub, px_v, n2, math.log(M)).value)
    code = SplitCode(n, n1, subsets, probs, prefix.code, tuple(message[v].code for v in subsets))
    return SplitBuildResult(code, pv.game_value, max(lam_terms), prefix, message)


def code_to_json(code, labels=None) -> str:
    d = code.to_dict(labels) if isinstance(code, SplitCode) else code.to_dict()
    return json.dumps(d, indent=2)
