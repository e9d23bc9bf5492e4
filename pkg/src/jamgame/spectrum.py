"""Information-density spectra and exact tail probabilities of their n-fold sums.

A spectrum is a finite discrete law of a per-letter log-likelihood ratio. Sums of
independent copies are computed exactly (up to float rounding and the merge of
values closer than ``MERGE_TOL``), with three engines:

* two-atom spectra use the binomial closed form;
* spectra supported on an arithmetic lattice are convolved on the integer grid;
* anything else is convolved by repeated squaring with merging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy import signal, stats

from .channels import Dmc
from .errors import CapExceededError, InvalidInputError

MERGE_TOL = 1e-12
TAIL_TOL = 1e-12
PAIR_CAP = 2 * 10**7
LATTICE_CAP = 10**7
NEGLIGIBLE = 1e-30
LN2 = math.log(2.0)


def _merge(values: np.ndarray, probs: np.ndarray, tol: float = MERGE_TOL):
    order = np.argsort(values, kind="stable")
    v, p = values[order], probs[order]
    if v.size <= 1:
        return v, p
    scale = np.maximum(1.0, np.abs(v[:-1]))
    starts = np.concatenate(([True], np.diff(v) > tol * scale))
    idx = np.cumsum(starts) - 1
    merged_p = np.bincount(idx, weights=p)
    return v[starts], merged_p


@dataclass(frozen=True, eq=False)
class InfoDensitySpectrum:
    """Sorted, merged atoms of a discrete law; ``unit`` is ``"nats"`` or ``"bits"``."""

    values: np.ndarray
    probs: np.ndarray
    unit: str = "nats"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        p = np.asarray(self.probs, dtype=float).ravel()
        if v.shape != p.shape or v.size == 0:
            raise InvalidInputError("spectrum needs matching nonempty value/prob arrays")
        if np.any(p < 0) or not np.all(np.isfinite(v)):
            raise InvalidInputError("spectrum atoms must be finite with nonnegative mass")
        if self.unit not in ("nats", "bits"):
            raise InvalidInputError(f"unknown unit {self.unit!r}")
        v, p = _merge(v, p)
        if abs(p.sum() - 1.0) > 1e-10:
            raise InvalidInputError(f"spectrum mass {p.sum():.15g} differs from 1")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point(cls, value: float, unit: str = "nats") -> "InfoDensitySpectrum":
        return cls(np.array([value]), np.array([1.0]), unit)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def variance(self) -> float:
        return float(((self.values - self.mean) ** 2) @ self.probs)

    def to_unit(self, unit: str) -> "InfoDensitySpectrum":
        if unit == self.unit:
            return self
        factor = 1 / LN2 if unit == "bits" else LN2
        return InfoDensitySpectrum(self.values * factor, self.probs, unit)

    def cdf(self, thresholds, strict: bool = False) -> np.ndarray:
        return tail_prob(self, thresholds, strict)


def _shift_threshold(t, strict):
    t = np.asarray(t, dtype=float)
    slack = TAIL_TOL * np.maximum(1.0, np.abs(t))
    return t - slack if strict else t + slack


def tail_prob(spectrum: InfoDensitySpectrum, threshold, strict: bool = False):
    """``P[value <= threshold]`` (``<`` when strict); vectorized over thresholds."""
    cum = np.concatenate(([0.0], np.cumsum(spectrum.probs)))
    t = _shift_threshold(threshold, strict)
    side = "left" if strict else "right"
    k = np.searchsorted(spectrum.values, t, side=side)
    out = np.clip(cum[k], 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def info_density_spectrum(channel: Dmc, px, reference, unit: str = "nats") -> InfoDensitySpectrum:
    """Law of ``log P(b|a)/reference(b)`` under ``Px(a) P(b|a)``."""
    px = np.asarray(px, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if px.size != channel.input_size or ref.size != channel.output_size:
        raise InvalidInputError("input or reference distribution has the wrong size")
    joint = px[:, None] * channel.matrix
    mask = joint > 0
    if np.any(mask & (ref[None, :] <= 0)):
        raise InvalidInputError("reference assigns zero mass where the joint law is positive")
    a_idx, b_idx = np.nonzero(mask)
    vals = np.log(channel.matrix[a_idx, b_idx]) - np.log(ref[b_idx])
    spec = InfoDensitySpectrum(vals, joint[mask], "nats")
    return spec.to_unit(unit)


def conditional_spectra(channel: Dmc, reference) -> list:
    """Per-input spectra of the density under ``P(.|a)``; ``None`` where undefined."""
    out = []
    for a in range(channel.input_size):
        px = np.zeros(channel.input_size)
        px[a] = 1.0
        try:
            out.append(info_density_spectrum(channel, px, reference))
        except InvalidInputError:
            out.append(None)
    return out


def convolve(s1: InfoDensitySpectrum, s2: InfoDensitySpectrum) -> InfoDensitySpectrum:
    if s1.unit != s2.unit:
        raise InvalidInputError("cannot convolve spectra in different units")
    if s1.size * s2.size > PAIR_CAP:
        raise CapExceededError(f"convolution of {s1.size}x{s2.size} atoms exceeds cap {PAIR_CAP}")
    v = (s1.values[:, None] + s2.values[None, :]).ravel()
    p = (s1.probs[:, None] * s2.probs[None, :]).ravel()
    return _build(v, p, s1.unit)


def _build(values, probs, unit):
    keep = probs > 0
    values, probs = values[keep], probs[keep]
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise InvalidInputError(f"convolution lost mass ({total:.12g})")
    probs = probs / total
    return InfoDensitySpectrum(values, probs, unit)


def _float_gcd(a: float, b: float, tol: float) -> float:
    a, b = max(a, b), min(a, b)
    while b > tol:
        a, b = b, math.fmod(a, b)
        if a - b < tol:
            b = 0.0
    return a


def _lattice(values: np.ndarray, rel: float = 1e-9):
    """Return ``(origin, step, integer offsets)`` if the values sit on a lattice."""
    if values.size < 3:
        return None
    span = values[-1] - values[0]
    tol = rel * max(1.0, span)
    step = reduce(lambda g, d: _float_gcd(g, d, tol), np.diff(values))
    if step <= tol or span / step > LATTICE_CAP:
        return None
    k = np.rint((values - values[0]) / step)
    if np.any(np.abs(values[0] + k * step - values) > tol):
        return None
    return values[0], span / k[-1], k.astype(np.int64)


def _lattice_power(pmf: np.ndarray, n: int) -> np.ndarray:
    result = np.ones(1)
    base = pmf
    while n:
        if n & 1:
            result = _fft_conv(result, base)
        n >>= 1
        if n:
            base = _fft_conv(base, base)
    return result


def _fft_conv(a, b):
    if a.size + b.size - 1 > LATTICE_CAP:
        raise CapExceededError("lattice convolution exceeds size cap")
    if min(a.size, b.size) < 64:
        out = np.convolve(a, b)
    else:
        out = signal.fftconvolve(a, b)
    out[out < 0] = 0.0
    return out


def convolve_n(spectrum: InfoDensitySpectrum, n: int) -> InfoDensitySpectrum:
    """Law of the sum of n independent copies."""
    if n < 1:
        raise InvalidInputError("n must be positive")
    s = spectrum
    if n == 1:
        return s
    if s.size == 1:
        return InfoDensitySpectrum(s.values * n, s.probs, s.unit)
    if s.size == 2:
        k = np.arange(n + 1)
        p = stats.binom.pmf(k, n, s.probs[1])
        vals = n * s.values[0] + k * (s.values[1] - s.values[0])
        return _build(vals, p, s.unit)
    lat = _lattice(s.values)
    if lat is not None:
        origin, step, k = lat
        pmf = np.zeros(int(k[-1]) + 1)
        np.add.at(pmf, k, s.probs)
        out = _lattice_power(pmf, n)
        grid = n * origin + step * np.arange(out.size)
        return _build(grid, out, s.unit)
    result = None
    base = s
    m = n
    while m:
        if m & 1:
            result = base if result is None else convolve(result, base)
        m >>= 1
        if m:
            base = convolve(base, base)
    return result


def sum_tail(spectra: Sequence[InfoDensitySpectrum], thresholds, strict: bool = False) -> np.ndarray:
    """``P[sum of independent terms <= t]`` for each threshold."""
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    spectra = list(spectra)
    if not spectra:
        return np.atleast_1d(tail_prob(InfoDensitySpectrum.point(0.0), t, strict))
    if len(spectra) == 1:
        return np.atleast_1d(tail_prob(spectra[0], t, strict))
    spectra.sort(key=lambda s: s.size)
    last = spectra.pop()
    head = reduce(convolve, spectra)
    out = np.empty(t.size)
    for i, ti in enumerate(t):
        out[i] = head.probs @ np.atleast_1d(tail_prob(last, ti - head.values, strict))
    return np.clip(out, 0.0, 1.0)


class ProductDensityLaw:
    """Law of the n-letter density ``log P^n(Y|X)/ref^n(Y)`` for i.i.d. ``X ~ Px^n``.

    Represented as a mixture of components, each a list of independent spectra.
    """

    def __init__(self, channel: Dmc, px, reference, n: int):
        self.n = n
        px = np.asarray(px, dtype=float)
        self.components: list[tuple[float, list]] = []
        joint = info_density_spectrum(channel, px, reference)
        try:
            self.components = [(1.0, [convolve_n(joint, n)])]
            return
        except CapExceededError:
            pass
        support = np.flatnonzero(px > 0)
        if support.size != 2:
            raise CapExceededError(
                f"exact density law for n={n} needs lattice values or a binary input support"
            )
        cond = conditional_spectra(channel, reference)
        a0, a1 = support
        p1 = px[a1] / (px[a0] + px[a1])
        weights = stats.binom.pmf(np.arange(n + 1), n, p1)
        for k1, w in enumerate(weights):
            if w < NEGLIGIBLE:
                continue
            parts = []
            if n - k1:
                parts.append(convolve_n(cond[a0], n - k1))
            if k1:
                parts.append(convolve_n(cond[a1], k1))
            self.components.append((float(w), parts))

    def cdf(self, thresholds, strict: bool = False) -> np.ndarray:
        t = np.atleast_1d(np.asarray(thresholds, dtype=float))
        out = np.zeros(t.size)
        for w, parts in self.components:
            out += w * sum_tail(parts, t, strict)
        return np.clip(out, 0.0, 1.0)


def type_density_law(channel: Dmc, counts: Sequence[int], reference) -> list:
    """Independent spectra whose sum is the density for a fixed input string of given type."""
    cond = conditional_spectra(channel, reference)
    parts = []
    for a, k in enumerate(counts):
        if k:
            if cond[a] is None:
                raise InvalidInputError("reference assigns zero mass where the channel is positive")
            parts.append(convolve_n(cond[a], int(k)))
    return parts
