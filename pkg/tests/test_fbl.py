import itertools
import math

import numpy as np
import pytest

from jamgame.capacity import subset_capacities
from jamgame.channels import ChannelFamily, bsc
from jamgame.curves import L_of_R
from jamgame.errors import CapExceededError, InvalidInputError
from jamgame.exact import brute_det_upper_value, brute_lower_value
from jamgame.fbl import (
    BoundParams, _density_variances, achievability_bound, best_type_converse, chebyshev_constants,
    dual_converse, enumerate_types, gap_report, split_achievability_bound, type_converse, type_count,
)

from conftest import random_family

LN2 = math.log(2)


@pytest.mark.parametrize("a,n,count", [(2, 2, 3), (1, 7, 1), (3, 4, 15), (4, 10, 286)])
def test_type_counts(a, n, count):
    types = enumerate_types(a, n)
    assert len(types) == count == type_count(a, n)
    assert len(types) <= (n + 1) ** a
    assert all(sum(t.counts) == n for t in types)


def test_type_cap():
    with pytest.raises(CapExceededError):
        enumerate_types(10, 200, cap=1000)


def test_achievability_noiseless_arithmetic():
    fam = ChannelFamily.from_matrices([np.eye(2)])
    alpha, delta = math.log(2) + 0.5, 0.5
    t = achievability_bound(fam, [0.5, 0.5], 4, 2, alpha=alpha, delta=delta)
    assert t.tail == 0.0
    assert t.exp_neg_delta == pytest.approx(math.exp(-0.5))
    assert t.codebook == pytest.approx(2 * math.exp(-alpha))
    assert t.value == min(1.0, t.tail + t.exp_neg_delta + t.codebook)


def test_achievability_clips_to_one(swapped):
    t = achievability_bound(swapped, [0.25] * 4, 4, 10**6, alpha=1.0, delta=1.0)
    assert t.value == 1.0


def test_achievability_tail_matches_enumeration():
    fam = ChannelFamily.from_matrices([bsc(0.2).matrix])
    W = bsc(0.2).matrix
    alpha, delta = 0.7, 0.3
    t = achievability_bound(fam, [0.5, 0.5], 3, 2, alpha=alpha, delta=delta)
    tail = 0.0
    for x in itertools.product(range(2), repeat=3):
        for y in itertools.product(range(2), repeat=3):
            dens = sum(math.log(W[a, b] / 0.5) for a, b in zip(x, y))
            if dens <= alpha + delta + 1e-12:
                tail += 0.125 * math.prod(W[a, b] for a, b in zip(x, y))
    assert t.tail == pytest.approx(tail, abs=1e-14)


def test_codebook_term_log_linear(bscs):
    a = [achievability_bound(bscs, [0.5, 0.5], 4, 3, alpha=al, delta=0.2).codebook for al in (2.0, 3.0, 4.0)]
    assert math.log(a[0]) - math.log(a[1]) == pytest.approx(1.0)
    assert math.log(a[1]) - math.log(a[2]) == pytest.approx(1.0)


def test_achievability_rejects_bad_params(bscs):
    with pytest.raises(InvalidInputError):
        achievability_bound(bscs, [0.5, 0.5], 4, 3, alpha=-1.0, delta=0.2)


def test_dual_converse_vanishes_for_large_gamma(idflip):
    vals = [dual_converse(idflip, [0.5, 0.5], 1, 2, gamma=g, clip=False) for g in (5.0, 20.0, 60.0)]
    assert abs(vals[-1]) < 1e-20
    assert all(abs(b) <= abs(a) for a, b in zip(vals, vals[1:]))


def test_dual_converse_identity_enumeration():
    fam = ChannelFamily.from_matrices([np.eye(2)])
    ref = np.array([[0.5, 0.5]])
    g = math.log(2)
    got = dual_converse(fam, [1.0], 1, 2, g, reference=ref, clip=False)
    c = 2 * math.exp(-g)
    want = min(sum(min(np.eye(2)[x, y], 0.5 * c) for y in range(2)) for x in range(2)) - math.exp(-g)
    assert got == pytest.approx(want)


def test_dual_converse_identity_flip_is_vacuous(idflip):
    # for any references the x-average of the min-sum is at most e^-gamma, so the bound is 0
    rng = np.random.default_rng(3)
    for g in np.linspace(0.05, 5, 50):
        ref = rng.dirichlet([1, 1], size=2)
        val = dual_converse(idflip, [0.5, 0.5], 1, 2, g, reference=ref, clip=False)
        assert val <= 1e-12
    assert dual_converse(idflip, [0.5, 0.5], 1, 2, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_type_converse_zero_rate(bscs):
    assert type_converse(bscs, [0.5, 0.5], 64, 0.0, 0.01).value == 0.0


def test_type_converse_above_capacity():
    fam = ChannelFamily.from_matrices([bsc(0.1).matrix])
    n, xi = 4096, 0.05
    t = type_converse(fam, [1.0], n, 0.8, xi, method="types")
    assert t.indicator_mass == 1.0
    assert t.value == pytest.approx(1 - t.A_over_n - math.exp(-n * xi))


def test_type_converse_point_mass_mechanism(swapped):
    n, xi = 2048, 0.02
    R = 1.0 + 2 * xi / LN2 + math.log(type_count(4, n)) / n / LN2 + 0.01
    consts = chebyshev_constants(swapped, xi=xi)
    t = type_converse(swapped, [1.0, 0.0], n, R, xi, consts)
    assert t.value >= 1 - consts.A_of_xi / n - math.exp(-n * xi) - 1e-12


def test_type_and_subset_methods_agree_on_mass(swapped):
    for R in (0.3, 0.75, 1.2):
        a = type_converse(swapped, [0.5, 0.5], 64, R, 0.01, method="types")
        b = type_converse(swapped, [0.5, 0.5], 64, R, 0.01, method="subsets")
        # the subset route is never larger than the type route
        assert b.indicator_mass <= a.indicator_mass + 1e-12


def test_chebyshev_constants():
    noiseless = ChannelFamily.from_matrices([np.eye(2)])
    c = chebyshev_constants(noiseless, xi=0.1, beta=0.1)
    assert c.conditional_variance == 0.0 and c.A_of_xi == 0.0
    fam = ChannelFamily.from_matrices([bsc(0.1).matrix])
    c1, c2 = chebyshev_constants(fam, xi=0.2), chebyshev_constants(fam, xi=0.1)
    assert c2.A_of_xi == pytest.approx(4 * c1.A_of_xi)
    corners = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    direct = _density_variances(corners, bsc(0.1).matrix)[0].max()
    assert c1.conditional_variance >= direct
    assert c1.conditional_variance <= 1.06 * direct + 1e-12
    with pytest.raises(InvalidInputError):
        chebyshev_constants(fam, xi=-1.0)


def test_converse_tracks_lower_curve(swapped):
    caps = subset_capacities(swapped)
    R = 0.75
    terms, q = best_type_converse(swapped, 4096, R, capacities=caps)
    assert abs(terms.value - L_of_R(swapped, R, capacities=caps)) <= 0.05
    assert q == pytest.approx([0.5, 0.5], abs=0.02)


def test_split_bound_structure(swapped):
    sb = split_achievability_bound(swapped, 1024, 0.75)
    assert sb.misclassification == pytest.approx(0.5)
    assert sb.value == pytest.approx(min(1.0, 0.5 + 2 * sb.lam))
    assert 0 < sb.n1 < 1024


def test_split_bound_above_every_capacity(swapped):
    assert split_achievability_bound(swapped, 64, 1.5).value == 1.0


@pytest.mark.parametrize("seed", range(6))
def test_bounds_bracket_exact_values(seed):
    fam = random_family(np.random.default_rng(seed), 2, concentration=0.5)
    M, n = 2, 2
    R = math.log2(M) / n
    lower, _ = brute_lower_value(fam, n, M)
    upper, _ = brute_det_upper_value(fam, n, M)
    for px in ([0.5, 0.5], [0.3, 0.7]):
        for a, d in ((0.5, 0.5), (1.0, 0.2), (2.0, 1.0)):
            assert achievability_bound(fam, px, n, M, alpha=a, delta=d).value >= upper - 1e-12
    for q in ([0.5, 0.5], [1.0, 0.0], [0.2, 0.8]):
        for g in (0.1, 0.7, 2.0):
            assert dual_converse(fam, q, n, M, g) <= lower + 1e-12
        for xi in (0.01, 0.1, 0.5):
            assert type_converse(fam, q, n, R, xi).value <= lower + 1e-12


def test_gap_report_consistency(swapped):
    rep = gap_report(swapped, 256, 0.75)
    d = rep.to_dict()
    assert rep.converse_lower <= rep.achievability_upper
    assert set(d["components"]) >= {"split", "converse", "lemma_indicator_form", "chebyshev"}
    assert d["params"]["rho"] >= 0
    assert rep.below(1.0)
    fixed = gap_report(swapped, 256, 0.75, params=BoundParams(xi=0.05, Delta=0.1))
    assert fixed.params["xi"] == 0.05 and fixed.params["Delta"] == 0.1


@pytest.mark.parametrize("R,expect", [(0.3, "low"), (1.1, "high")])
def test_gap_report_trends(swapped, R, expect):
    rep = gap_report(swapped, 4096, R)
    if expect == "low":
        assert rep.achievability_upper <= 0.1 and rep.converse_lower <= 0.1
    else:
        assert rep.achievability_upper >= 0.9 and rep.converse_lower >= 0.9
