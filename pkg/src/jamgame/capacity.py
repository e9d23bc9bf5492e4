"""Mutual information, channel capacity, compound capacity and mixed-channel eps-capacity.

All values are in bits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelFamily, Dmc, as_prob
from .errors import CapExceededError, ConvergenceError, InvalidInputError
from .optim import concave_maximin

DEFAULT_TOL = 1e-6
MAX_STATES = 16
LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class CapacityResult:
    """``value`` is achieved by ``optimal_input``; ``value + achieved_gap`` bounds the truth."""

    value: float
    optimal_input: np.ndarray
    achieved_gap: float
    iterations: int

    @property
    def upper(self) -> float:
        return self.value + self.achieved_gap


def _xlogy_ratio(W, out):
    """Elementwise ``W * log2(W / out)`` with ``0 log 0 = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(W > 0, W * np.log2(np.where(W > 0, W, 1.0) / np.where(out > 0, out, 1.0)), 0.0)
    return r


def divergences(px, W: np.ndarray) -> np.ndarray:
    """``D(W(.|a) || Px W)`` in bits for every input a."""
    out = np.asarray(px, dtype=float) @ W
    return _xlogy_ratio(W, out[None, :]).sum(axis=1)


def mutual_information(px, channel) -> float:
    W = channel.matrix if isinstance(channel, Dmc) else np.asarray(channel, dtype=float)
    px = np.asarray(px, dtype=float)
    val = float(px @ divergences(px, W))
    return min(max(val, 0.0), math.log2(min(W.shape)))


def channel_capacity(channel, tol: float = DEFAULT_TOL, max_iter: int = 200_000) -> CapacityResult:
    """Blahut-Arimoto with the usual ``log sum P c <= C <= log max c`` bracket."""
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    W = channel.matrix if isinstance(channel, Dmc) else np.asarray(channel, dtype=float)
    k = W.shape[0]
    p = np.full(k, 1.0 / k)
    for it in range(1, max_iter + 1):
        d = divergences(p, W)
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower <= tol:
            return CapacityResult(max(lower, 0.0), p, upper - lower, it)
        w = p * np.exp2(d - upper)
        p = w / w.sum()
    raise ConvergenceError(f"Blahut-Arimoto bracket still {upper - lower:.3g} after {max_iter} iterations")


def _mi_values(P, Ws):
    return np.array([float(P @ divergences(P, W)) for W in Ws])


def _mi_gradients(P, Ws):
    return np.stack([divergences(P, W) - LOG2E for W in Ws])


def compound_capacity(family: ChannelFamily, subset=None, tol: float = DEFAULT_TOL) -> CapacityResult:
    """``max_P min_{t in subset} I(P; t)``; the whole family when ``subset`` is None."""
    idx = sorted(range(family.num_states) if subset is None else subset)
    if not idx:
        raise InvalidInputError("subset must be nonempty")
    Ws = [family.channels[i].matrix for i in idx]
    # drop duplicate states: they do not change the max-min
    uniq = []
    for W in Ws:
        if not any(np.array_equal(W, U) for U in uniq):
            uniq.append(W)
    if len(uniq) == 1:
        return channel_capacity(uniq[0], tol)
    res = concave_maximin(
        lambda P: _mi_values(P, uniq), lambda P: _mi_gradients(P, uniq), family.input_size, tol
    )
    cap = math.log2(min(family.input_size, family.output_size))
    return CapacityResult(min(max(res.value, 0.0), cap), res.argmax, res.gap, res.iterations)


def nonempty_subsets(k: int):
    """Nonempty subsets of ``range(k)`` as frozensets, ordered by size then lexicographically."""
    if k > MAX_STATES:
        raise CapExceededError(f"subset enumeration is capped at {MAX_STATES} states")
    for r in range(1, k + 1):
        for c in itertools.combinations(range(k), r):
            yield frozenset(c)


def subset_capacities(family: ChannelFamily, tol: float = DEFAULT_TOL) -> dict:
    return {s: compound_capacity(family, s, tol) for s in nonempty_subsets(family.num_states)}


def mixed_eps_capacity(
    family: ChannelFamily, q, eps: float, tol: float = DEFAULT_TOL, capacities: dict | None = None,
    strict: bool = False,
) -> float:
    """eps-capacity of the q-mixed channel via subset enumeration.

    The maximum of ``C(S)`` over nonempty subsets whose complement carries q-mass
    ``<= eps`` (``< eps`` when ``strict``, the left limit at jumps).
    """
    q = as_prob(q)
    if q.size != family.num_states:
        raise InvalidInputError("q must have one entry per state")
    if not 0 <= eps < 1:
        raise InvalidInputError("eps must lie in [0, 1)")
    best = -math.inf
    for s in nonempty_subsets(family.num_states):
        dropped = float(sum(q[i] for i in range(q.size) if i not in s))
        ok = dropped < eps - 1e-12 if strict else dropped <= eps + 1e-12
        if ok:
            c = capacities[s] if capacities is not None else compound_capacity(family, s, tol)
            best = max(best, c.value if isinstance(c, CapacityResult) else float(c))
    if best == -math.inf:
        raise InvalidInputError("no subset satisfies the mass constraint (strict with eps=0?)")
    return best


def mixed_eps_capacity_grid(family: ChannelFamily, q, eps: float, resolution: int = 1000) -> float:
    """Direct evaluation on an input-simplex grid: ``max_P sup{R : sum q 1{I_t(P) <= R} <= eps}``."""
    q = as_prob(q)
    k = family.input_size
    best = 0.0
    for counts in _compositions(resolution, k):
        P = np.array(counts, dtype=float) / resolution
        I = np.array([mutual_information(P, c) for c in family.channels])
        order = np.argsort(I)
        # the sup over R is the largest I value whose strictly-lower states carry mass <= eps
        mass_below = 0.0
        val = I[order[0]]
        for j, t in enumerate(order):
            if mass_below <= eps + 1e-12:
                val = I[t]
            mass_below += q[t]
        best = max(best, val)
    return best


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest
