import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jamgame.builtins import pair_family
from jamgame.capacity import (
    channel_capacity, compound_capacity, mixed_eps_capacity, mixed_eps_capacity_grid, mutual_information,
    nonempty_subsets, subset_capacities,
)
from jamgame.channels import ChannelFamily, Dmc, bec, bsc, noiseless
from jamgame.errors import CapExceededError, InvalidInputError

from conftest import random_family


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_mutual_information_simple_cases():
    assert mutual_information([0.5, 0.5], noiseless(2)) == pytest.approx(1.0)
    assert mutual_information([0.3, 0.7], Dmc(np.array([[0.4, 0.6], [0.4, 0.6]]))) == pytest.approx(0.0, abs=1e-15)
    assert mutual_information([0.5, 0.5], bsc(0.1)) == pytest.approx(1 - h2(0.1))


@pytest.mark.parametrize("k", [2, 3, 5])
def test_noiseless_capacity(k):
    assert channel_capacity(noiseless(k)).value == pytest.approx(math.log2(k), abs=1e-6)


@pytest.mark.parametrize("p", [0.01, 0.11, 0.3])
def test_bsc_closed_form(p):
    res = channel_capacity(bsc(p), tol=1e-9)
    assert res.value == pytest.approx(1 - h2(p), abs=1e-6)
    assert res.value <= 1 - h2(p) + 1e-12 <= res.upper + 1e-12


@pytest.mark.parametrize("e", [0.0, 0.3, 0.9])
def test_bec_closed_form(e):
    assert channel_capacity(bec(e), tol=1e-9).value == pytest.approx(1 - e, abs=1e-6)


def test_z_channel_closed_form():
    # Z channel: 1 -> 0 with probability p; C = log2(1 + (1-p) p^(p/(1-p)))
    p = 0.25
    W = np.array([[1.0, 0.0], [p, 1 - p]])
    expected = math.log2(1 + (1 - p) * p ** (p / (1 - p)))
    assert channel_capacity(Dmc(W), tol=1e-10).value == pytest.approx(expected, abs=1e-7)


def test_constant_channel_has_zero_capacity():
    assert channel_capacity(Dmc(np.array([[0.2, 0.8]] * 3))).value == pytest.approx(0.0, abs=1e-9)


def test_compound_of_two_bsc(bscs):
    assert compound_capacity(bscs).value == pytest.approx(1 - h2(0.2), abs=1e-6)


def test_compound_identity_flip_against_grid(idflip):
    grid = max(
        min(mutual_information([p, 1 - p], c) for c in idflip.channels) for p in np.linspace(0, 1, 10001)
    )
    assert compound_capacity(idflip).value == pytest.approx(grid, abs=1e-6)
    assert grid == pytest.approx(1.0)


def test_swapped_pairs_compound(swapped):
    res = compound_capacity(swapped)
    assert res.value == pytest.approx(0.5, abs=1e-6)
    assert compound_capacity(swapped, [0]).value == pytest.approx(1.0, abs=1e-6)


def test_singleton_subset_matches_channel_capacity(three):
    for i, ch in enumerate(three.channels):
        assert compound_capacity(three, [i]).value == pytest.approx(channel_capacity(ch).value, abs=1e-9)


def test_three_state_subset_capacities(three):
    caps = {tuple(sorted(s)): c.value for s, c in subset_capacities(three).items()}
    # pair capacities c[t, i]; the best split across pairs is a small LP
    assert caps[(0, 1, 2)] == pytest.approx(3 / 7, abs=1e-6)
    assert caps[(0, 1)] == pytest.approx(0.5, abs=1e-6)
    assert caps[(0, 1)] < caps[(0, 2)] < caps[(1, 2)] < min(caps[(0,)], caps[(1,)], caps[(2,)])


def test_compound_capacity_errors(three):
    with pytest.raises(InvalidInputError):
        compound_capacity(three, [])
    with pytest.raises(CapExceededError):
        list(nonempty_subsets(17))


@pytest.mark.parametrize("seed", range(5))
def test_compound_against_grid_oracle(seed):
    fam = random_family(np.random.default_rng(seed), 3)
    grid = max(min(mutual_information([p, 1 - p], c) for c in fam.channels) for p in np.linspace(0, 1, 20001))
    assert compound_capacity(fam).value == pytest.approx(grid, abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_subset_monotonicity(seed):
    fam = random_family(np.random.default_rng(100 + seed), 3, inputs=3, outputs=3)
    caps = subset_capacities(fam)
    for s, c in caps.items():
        for t, d in caps.items():
            if s <= t:
                assert d.value <= c.value + 2e-6


def test_mixed_eps_capacity_examples(bscs, three):
    caps = subset_capacities(three)
    assert mixed_eps_capacity(three, [1 / 3] * 3, 0.0, capacities=caps) == pytest.approx(caps[frozenset({0, 1, 2})].value)
    assert mixed_eps_capacity(three, [1, 0, 0], 0.3, capacities=caps) == pytest.approx(caps[frozenset({0})].value)
    best = max(channel_capacity(c).value for c in bscs.channels)
    assert mixed_eps_capacity(bscs, [0.5, 0.5], 0.5) == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_mixed_eps_capacity_against_grid(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, 3, inputs=3, outputs=2)
    q = rng.dirichlet([1, 1, 1])
    caps = subset_capacities(fam)
    for eps in (0.0, 0.2, 0.5, 0.8):
        direct = mixed_eps_capacity_grid(fam, q, eps, resolution=200)
        enum = mixed_eps_capacity(fam, q, eps, capacities=caps)
        # the grid only undershoots; its resolution costs at most a few 1e-3 bits here
        assert direct <= enum + 1e-6
        assert enum - direct <= 5e-3


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.99), st.floats(0, 0.99), st.integers(0, 1000))
def test_mixed_eps_capacity_monotone_in_eps(e1, e2, seed):
    rng = np.random.default_rng(seed)
    fam = pair_family(rng.random((3, 2)))
    q = rng.dirichlet([1, 1, 1])
    caps = subset_capacities(fam, tol=1e-5)
    lo, hi = sorted((e1, e2))
    assert mixed_eps_capacity(fam, q, lo, capacities=caps) <= mixed_eps_capacity(fam, q, hi, capacities=caps) + 1e-12
