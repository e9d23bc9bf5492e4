"""Distributions, discrete memoryless channels, channel families and block extensions.

Symbols are integers ``0..k-1``. Strings over an alphabet are tuples of such
integers; when whole blocks are materialized they are indexed lexicographically
with the first letter most significant, which matches ``np.kron`` ordering.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapExceededError, InvalidInputError

PROB_TOL = 1e-12
INGEST_TOL = 1e-9
BLOCK_CAP = 10**7


def as_prob(weights, tol: float = PROB_TOL) -> np.ndarray:
    """Validate a probability vector and return it as a read-only float array."""
    p = np.array(weights, dtype=float).ravel()
    if p.size == 0:
        raise InvalidInputError("probability vector must be nonempty")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probability vector has non-finite entries")
    if np.any(p < 0):
        raise InvalidInputError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise InvalidInputError(f"probabilities sum to {p.sum():.15g}, not 1")
    p.setflags(write=False)
    return p


def uniform(k: int) -> np.ndarray:
    p = np.full(k, 1.0 / k)
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class Dmc:
    """A single-letter channel given by its row-stochastic matrix ``P(b|a)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise InvalidInputError("channel matrix must be a nonempty 2-D array")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise InvalidInputError("channel matrix entries must be finite and nonnegative")
        dev = np.abs(m.sum(axis=1) - 1.0).max()
        if dev > PROB_TOL:
            raise InvalidInputError(f"channel rows deviate from stochastic by {dev:.3g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_rows(cls, rows, tol: float = INGEST_TOL) -> "Dmc":
        """Accept rows stochastic within ``tol`` and renormalize them exactly."""
        m = np.array(rows, dtype=float)
        if m.ndim != 2:
            raise InvalidInputError("channel matrix must be 2-D")
        if np.any(m < 0):
            raise InvalidInputError("channel matrix has negative entries")
        sums = m.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > tol):
            raise InvalidInputError("channel rows are not stochastic within tolerance")
        return cls(m / sums[:, None])

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    def output_distribution(self, px) -> np.ndarray:
        return np.asarray(px, dtype=float) @ self.matrix

    def block_matrix(self, n: int) -> np.ndarray:
        """The n-letter transition matrix, rows and columns in lexicographic order."""
        check_block_size(self.input_size**n * self.output_size**n)
        out = np.ones((1, 1))
        for _ in range(n):
            out = np.kron(out, self.matrix)
        return out

    def block_row(self, x: Sequence[int]) -> np.ndarray:
        """``P(.|x)`` over all output strings for one input string."""
        check_block_size(self.output_size ** len(x))
        row = np.ones(1)
        for a in x:
            row = np.kron(row, self.matrix[a])
        return row


def bsc(p: float) -> Dmc:
    return Dmc(np.array([[1 - p, p], [p, 1 - p]]))


def bec(e: float) -> Dmc:
    return Dmc(np.array([[1 - e, e, 0.0], [0.0, e, 1 - e]]))


def noiseless(k: int) -> Dmc:
    return Dmc(np.eye(k))


def check_block_size(size: int, cap: int = BLOCK_CAP) -> None:
    if size > cap:
        raise CapExceededError(f"block enumeration of size {size} exceeds cap {cap}")


def strings(alphabet: int, n: int) -> list[tuple[int, ...]]:
    """All strings of length n in lexicographic order."""
    check_block_size(alphabet**n)
    return list(itertools.product(range(alphabet), repeat=n))


def string_index(s: Sequence[int], alphabet: int) -> int:
    idx = 0
    for a in s:
        idx = idx * alphabet + int(a)
    return idx


def index_string(idx: int, alphabet: int, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        idx, r = divmod(idx, alphabet)
        out.append(r)
    return tuple(reversed(out))


@dataclass(frozen=True, eq=False)
class ChannelFamily:
    """Channels indexed by jammer states, all on the same alphabets."""

    labels: tuple
    channels: tuple

    def __post_init__(self):
        chans = tuple(c if isinstance(c, Dmc) else Dmc(c) for c in self.channels)
        labels = tuple(str(l) for l in self.labels)
        if len(chans) < 1:
            raise InvalidInputError("a channel family needs at least one state")
        if len(labels) != len(chans):
            raise InvalidInputError("one label per channel is required")
        if len(set(labels)) != len(labels):
            raise InvalidInputError("state labels must be unique")
        shape = chans[0].matrix.shape
        if any(c.matrix.shape != shape for c in chans):
            raise InvalidInputError("all states must share input and output alphabets")
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_matrices(cls, matrices, labels=None) -> "ChannelFamily":
        matrices = list(matrices)
        if labels is None:
            labels = [str(i + 1) for i in range(len(matrices))]
        return cls(tuple(labels), tuple(Dmc(np.asarray(m, dtype=float)) for m in matrices))

    @property
    def num_states(self) -> int:
        return len(self.channels)

    @property
    def input_size(self) -> int:
        return self.channels[0].input_size

    @property
    def output_size(self) -> int:
        return self.channels[0].output_size

    @property
    def matrices(self) -> np.ndarray:
        """Stacked matrices with shape (states, inputs, outputs)."""
        return np.stack([c.matrix for c in self.channels])

    def subfamily(self, indices) -> "ChannelFamily":
        idx = sorted(indices)
        if not idx:
            raise InvalidInputError("subfamily must be nonempty")
        return ChannelFamily(tuple(self.labels[i] for i in idx), tuple(self.channels[i] for i in idx))

    def block_matrices(self, n: int) -> np.ndarray:
        return np.stack([c.block_matrix(n) for c in self.channels])

    def to_dict(self) -> dict:
        return {
            "input_alphabet": self.input_size,
            "output_alphabet": self.output_size,
            "states": [
                {"label": l, "matrix": c.matrix.tolist()} for l, c in zip(self.labels, self.channels)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelFamily":
        try:
            a = int(data["input_alphabet"])
            b = int(data["output_alphabet"])
            states = data["states"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed channel family: {exc}") from exc
        if not isinstance(states, list) or not states:
            raise InvalidInputError("'states' must be a nonempty list")
        labels, chans = [], []
        for i, st in enumerate(states):
            try:
                m = np.array(st["matrix"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"state {i}: bad matrix ({exc})") from exc
            if m.shape != (a, b):
                raise InvalidInputError(f"state {i}: matrix shape {m.shape} != ({a}, {b})")
            labels.append(st.get("label", str(i + 1)))
            chans.append(Dmc.from_rows(m))
        return cls(tuple(labels), tuple(chans))


def load_family(path) -> ChannelFamily:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read channel family from {path}: {exc}") from exc
    return ChannelFamily.from_dict(data)


def save_family(family: ChannelFamily, path) -> None:
    Path(path).write_text(json.dumps(family.to_dict(), indent=2))


def message_count(n: int, rate_bits: float) -> int:
    """``ceil(2**(n*R))`` computed without float overflow."""
    if n < 1 or rate_bits < 0:
        raise InvalidInputError("need n >= 1 and R >= 0")
    x = Fraction(n) * Fraction(rate_bits)
    k = math.floor(x)
    if x == k:
        return 2**k
    return math.ceil(Fraction(2.0 ** float(x - k)) * 2**k)


@dataclass(frozen=True, eq=False)
class GameInstance:
    family: ChannelFamily
    n: int
    R: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("blocklength must be positive")
        if self.R < 0:
            raise InvalidInputError("rate must be nonnegative")

    @property
    def M(self) -> int:
        return message_count(self.n, self.R)

    @property
    def log_M(self) -> float:
        return math.log(self.M)


def _check_string(s, alphabet: int, what: str):
    s = tuple(int(v) for v in s)
    if any(v < 0 or v >= alphabet for v in s):
        raise InvalidInputError(f"{what} contains a symbol outside 0..{alphabet - 1}")
    return s


def product_log_prob(channel: Dmc, x, y) -> float:
    """``log prod_i P(y_i|x_i)`` in nats; ``-inf`` for impossible pairs."""
    x = _check_string(x, channel.input_size, "x")
    y = _check_string(y, channel.output_size, "y")
    if len(x) != len(y):
        raise InvalidInputError("x and y must have equal length")
    if not x:
        return 0.0
    vals = channel.matrix[list(x), list(y)]
    if np.any(vals == 0):
        return -math.inf
    return float(np.log(vals).sum())


def product_prob(channel: Dmc, x, y) -> float:
    return math.exp(product_log_prob(channel, x, y))


class MixedChannel:
    """The q-average of a family's n-letter channels."""

    def __init__(self, family: ChannelFamily, q, n: int):
        q = as_prob(q)
        if q.size != family.num_states:
            raise InvalidInputError(f"q has {q.size} entries but the family has {family.num_states} states")
        if n < 1:
            raise InvalidInputError("blocklength must be positive")
        self.family, self.q, self.n = family, q, n

    def __call__(self, x, y) -> float:
        if len(x) != self.n or len(y) != self.n:
            raise InvalidInputError(f"strings must have length {self.n}")
        return float(sum(w * product_prob(c, x, y) for w, c in zip(self.q, self.family.channels)))

    def matrix(self) -> np.ndarray:
        return np.tensordot(self.q, self.family.block_matrices(self.n), axes=1)


def mixed_channel(family: ChannelFamily, q, n: int = 1) -> MixedChannel:
    return MixedChannel(family, q, n)


def round_distribution(p, resolution: int) -> np.ndarray:
    """Nearest distribution with entries in multiples of 1/resolution (largest remainder)."""
    p = np.asarray(p, dtype=float)
    scaled = p * resolution
    base = np.floor(scaled).astype(int)
    short = resolution - base.sum()
    order = np.argsort(-(scaled - base), kind="stable")
    base[order[:short]] += 1
    return base / resolution
