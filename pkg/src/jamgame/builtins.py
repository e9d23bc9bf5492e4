"""Small channel families used by the CLI (``builtin:<name>``) and the tests."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .channels import ChannelFamily
from .errors import InvalidInputError


def _h(p):
    return -p * np.log2(p) - (1 - p) * np.log2(1 - p)


def bsc_matrix(p: float) -> np.ndarray:
    return np.array([[1 - p, p], [p, 1 - p]])


def crossover_for_capacity(c: float) -> float:
    """BSC crossover in [0, 1/2] whose capacity is c bits."""
    if c <= 0:
        return 0.5
    if c >= 1:
        return 0.0
    return brentq(lambda e: 1 - _h(e) - c, 1e-15, 0.5)


def identity_flip() -> ChannelFamily:
    """Noiseless bit pipe and its bit-flipped twin."""
    return ChannelFamily.from_matrices([np.eye(2), np.eye(2)[::-1]], labels=["identity", "flip"])


def two_bsc(p1: float = 0.1, p2: float = 0.2) -> ChannelFamily:
    return ChannelFamily.from_matrices([bsc_matrix(p1), bsc_matrix(p2)], labels=[f"bsc{p1}", f"bsc{p2}"])


def swapped_pairs() -> ChannelFamily:
    """Two states that each see a clean bit on one input pair and noise on the other.

    Each state alone carries 1 bit per use; together only 1/2 bit, with
    different capacity-achieving inputs.
    """
    clean = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.5]])
    return ChannelFamily.from_matrices([clean, clean[[2, 3, 0, 1]]], labels=["a", "b"])


THREE_STATE_CAPS = np.array([[1.0, 0.0, 0.2], [0.0, 1.0, 0.2], [0.1, 0.4, 1.0]])


def pair_family(caps) -> ChannelFamily:
    """Each state uses one BSC per input pair; ``caps[t, i]`` is the capacity of pair i under state t."""
    caps = np.asarray(caps, dtype=float)
    if caps.ndim != 2 or np.any(caps < 0) or np.any(caps > 1):
        raise InvalidInputError("pair capacities must be a matrix with entries in [0, 1]")
    mats = [np.vstack([bsc_matrix(crossover_for_capacity(c)) for c in row]) for row in caps]
    return ChannelFamily.from_matrices(mats)


def three_state() -> ChannelFamily:
    """Subset capacities ordered C(all) < C({1,2}) < C({1,3}) < C({2,3}) < min singleton."""
    return pair_family(THREE_STATE_CAPS)


BUILTINS = {
    "identity-flip": identity_flip,
    "two-bsc": two_bsc,
    "swapped-pairs": swapped_pairs,
    "three-state": three_state,
}


def builtin_family(name: str) -> ChannelFamily:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InvalidInputError(f"unknown builtin family {name!r}; choose from {sorted(BUILTINS)}") from None
