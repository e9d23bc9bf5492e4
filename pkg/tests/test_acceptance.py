"""End-to-end acceptance checks, one test per criterion; each prints a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from jamgame.builtins import identity_flip, pair_family, swapped_pairs, three_state
from jamgame.capacity import channel_capacity, subset_capacities
from jamgame.channels import ChannelFamily, Dmc, save_family
from jamgame.cli import main
from jamgame.codes import feinstein_build
from jamgame.curves import build_curves, eps_capacity_compound, jammer_value, optimal_PV
from jamgame.exact import brute_det_upper_value, brute_lower_value, game_values, verify_dual_certificate
from jamgame.fbl import achievability_bound, dual_converse, gap_report, type_converse
from jamgame.spectrum import InfoDensitySpectrum, ProductDensityLaw, convolve_n

from conftest import random_family
from test_spectrum import brute_cdf, brute_density_law


def verdict(capsys, k, ok, detail, elapsed, limit=None):
    in_time = limit is None or elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    with capsys.disabled():
        print(f"\n[criterion {k:2d}] {status}: {detail}; {elapsed:.2f} s{budget}")
    assert ok, detail
    assert in_time, f"criterion {k} took {elapsed:.1f} s, limit {limit} s"


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# ------------------------------------------------------------ shared families


@pytest.fixture(scope="module")
def random_curves():
    """50 seeded families with 2 to 4 states; built once, timed by the first user."""
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    out = []
    for _ in range(50):
        k = int(rng.integers(2, 5))
        fam = random_family(rng, k, int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        caps = subset_capacities(fam)
        out.append((fam, caps, build_curves(fam, capacities=caps)))
    return out, time.perf_counter() - t0


def midinterval_rates(pair, count=5):
    bps = pair.breakpoints
    mids = [bps[0] / 2] + [0.5 * (a + b) for a, b in zip(bps, bps[1:])]
    mids = [r for r in mids if r > 0 and not pair.near_breakpoint(r)]
    return [mids[i % len(mids)] for i in range(count)]


# ------------------------------------------------------------ criteria


def test_criterion_01_two_state_steps(capsys, tmp_path):
    t0 = time.perf_counter()
    fams = {
        "swapped-pairs": swapped_pairs(),
        "pairs-a": pair_family([[1.0, 0.3], [0.3, 1.0]]),
        "pairs-b": pair_family([[0.9, 0.2], [0.1, 0.7]]),
    }
    problems = []
    for name, fam in fams.items():
        path = tmp_path / f"{name}.json"
        save_family(fam, path)
        out = tmp_path / f"{name}.out.json"
        if main(["curve", "--family", str(path), "--out", str(out)]) != 0:
            problems.append(f"{name}: nonzero exit")
            continue
        curve = json.loads(out.read_text())["curve"]
        if not curve["lower_capacity"] < curve["upper_capacity"]:
            problems.append(f"{name}: capacities not ordered")
        for key in ("L", "U"):
            vals = curve[key]["values"]
            # open intervals beyond C-upper collapse when several capacities coincide there
            steps = sorted(set(round(v, 8) for v in vals))
            if steps != [0.0, 0.5, 1.0] or any(abs(v - round(v * 2) / 2) > 1e-8 for v in vals):
                problems.append(f"{name}: {key} values {vals}")
        mid = 0.5 * (curve["lower_capacity"] + curve["upper_capacity"])
        pair = build_curves(fam)
        v_mid, _ = jammer_value([s for s, c in pair.canonical.items() if c > mid], fam.num_states)
        if abs(v_mid - 0.5) > 1e-8:
            problems.append(f"{name}: LP value {v_mid} at midinterval")
    verdict(capsys, 1, not problems, "two-state steps {0, 1/2, 1} on 3 families" + (f" {problems}" if problems else ""),
            time.perf_counter() - t0, 10)


def test_criterion_02_three_state_example(capsys):
    t0 = time.perf_counter()
    fam = three_state()
    caps = subset_capacities(fam, 1e-6)
    pair = build_curves(fam, 1e-6, caps)
    c = {s: v.value for s, v in caps.items()}
    order = [c[frozenset(s)] for s in ((0, 1, 2), (0, 1), (0, 2), (1, 2))] + [min(c[frozenset({i})] for i in range(3))]
    problems = []
    if not all(a < b for a, b in zip(order, order[1:])):
        problems.append(f"capacity ordering {order}")
    expected = [0, 1 / 3, 0.5, 0.5, 2 / 3, 1]
    inner_vals = [v for v in pair.U.values]
    if len(inner_vals) != 6 or max(abs(a - b) for a, b in zip(inner_vals, expected)) > 1e-8:
        problems.append(f"U values {inner_vals}")
    if max(abs(a - b) for a, b in zip(pair.L.values, pair.U.values)) > 1e-8:
        problems.append("L and U differ off breakpoints")
    gaps = []
    for i, b in enumerate(pair.breakpoints):
        u, l = pair.U(b), pair.L(b)
        if abs(u - pair.U.values[i + 1]) > 1e-8 or abs(l - pair.L.values[i]) > 1e-8:
            problems.append(f"one-sided continuity at {b}")
        gaps.append(u - l)
        # strict gap exactly where U jumps; C({1,3}) separates two 1/2 steps and carries none
        if (u - l > 1e-8) != (b in pair.discontinuities):
            problems.append(f"gap {u - l} at {b} does not match the jump set")
    if len(pair.discontinuities) != 4:
        problems.append(f"expected 4 jumps, got {pair.discontinuities}")
    mids = [0.5 * (a + b) for a, b in zip(pair.breakpoints, pair.breakpoints[1:])]
    if any(abs(pair.U(r) - pair.L(r)) > 1e-12 for r in mids):
        problems.append("gap away from breakpoints")
    at_23 = (pair.U(order[3]), pair.L(order[3]))
    if abs(at_23[0] - 2 / 3) > 1e-8 or abs(at_23[1] - 0.5) > 1e-8:
        problems.append(f"(U, L) at C(2,3) is {at_23}")
    detail = f"values {[round(v, 6) for v in inner_vals]}, breakpoint gaps {[round(g, 4) for g in gaps]}"
    verdict(capsys, 2, not problems, detail + (f" {problems}" if problems else ""), time.perf_counter() - t0, 60)


def test_criterion_03_minimax_chain(capsys, random_curves):
    data, build_time = random_curves
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for fam, caps, pair in data:
        k = fam.num_states
        for R in midinterval_rates(pair):
            u = pair.U(R)
            res = optimal_PV(fam, R, capacities=caps)
            # P_V guarantees at most this against any pure jammer state
            pv_guarantee = max(sum(p for s, p in res.distribution.items() if t not in s) for t in range(k))
            # the jammer strategy forces at least this against any subset
            subsets = [s for s, cv in pair.canonical.items() if cv > R]
            q_guarantee = min(sum(res.jammer[t] for t in range(k) if t not in s) for s in subsets)
            worst = max(worst, abs(res.game_value - u), abs(pv_guarantee - u), abs(q_guarantee - u))
            checked += 1
    verdict(capsys, 3, worst <= 1e-7 and checked == 250,
            f"{checked} rates, max |value - U| = {worst:.2e}", build_time + time.perf_counter() - t0, 120)


def test_criterion_04_curve_properties(capsys, random_curves):
    data, _ = random_curves
    t0 = time.perf_counter()
    violations = []
    for idx, (fam, caps, pair) in enumerate(data):
        bps = pair.breakpoints
        rates = sorted(set(bps) | {r for a, b in zip((-0.5,) + bps, bps + (bps[-1] + 1,))
                                    for r in np.linspace(a, b, 7)})
        Ls, Us = [pair.L(r) for r in rates], [pair.U(r) for r in rates]
        if any(l > u + 1e-12 for l, u in zip(Ls, Us)):
            violations.append((idx, "L > U"))
        for name, vals in (("L", Ls), ("U", Us)):
            if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
                violations.append((idx, f"{name} decreasing"))
        if pair.L.jumps != pair.U.jumps:
            violations.append((idx, "jump sets differ"))
        raw = [v.value for v in caps.values()]
        for j in pair.U.jumps:
            if j not in bps or min(abs(j - v) for v in raw) > 4 * pair.tol:
                violations.append((idx, f"jump {j} not at a capacity"))
        # a jump in the value is exactly where L and U disagree
        for i, b in enumerate(bps):
            jump = abs(pair.U.values[i + 1] - pair.U.values[i]) > 1e-9
            if jump != (pair.U(b) - pair.L(b) > 1e-9):
                violations.append((idx, f"gap/jump mismatch at {b}"))
    verdict(capsys, 4, not violations, f"50 families, {len(violations)} violations {violations[:3]}",
            time.perf_counter() - t0)


def test_criterion_05_exact_sandwich(capsys):
    t0 = time.perf_counter()
    worst_slack, worst_d3, count = math.inf, -math.inf, 0
    cases = [(seed, 1) for seed in range(50)] + [(100 + seed, 2) for seed in range(10)]
    for seed, n in cases:
        rng = np.random.default_rng(seed)
        fam = random_family(rng, 2)
        gv = game_values(fam, n, 2, restarts=2, seed=seed)
        worst_slack = min(worst_slack, *gv.sandwich_slack())
        for q in (gv.optimal_q, gv.lp_q, rng.dirichlet([1, 1])):
            for gamma in (0.1, 1.0, 3.0):
                _, cert = verify_dual_certificate(fam, q, gamma, n=n, M=2)
                worst_d3 = max(worst_d3, cert.max_violation["D3"])
        count += 1
    ok = worst_slack >= -1e-8 and worst_d3 <= 1e-10
    verdict(capsys, 5, ok, f"{count} instances, min sandwich slack {worst_slack:.2e}, max D3 excess {worst_d3:.2e}",
            time.perf_counter() - t0, 300)


def test_criterion_06_identity_flip(capsys):
    t0 = time.perf_counter()
    fam = identity_flip()
    lower, q = brute_lower_value(fam, 1, 2)
    upper, _ = brute_det_upper_value(fam, 1, 2)
    ok = abs(lower - 0.5) <= 1e-8 and abs(upper - 0.5) <= 1e-8 and np.allclose(q, [0.5, 0.5], atol=1e-8)
    verdict(capsys, 6, ok, f"lower {lower}, det upper {upper}, q {np.round(q, 10).tolist()}",
            time.perf_counter() - t0, 1)


GRID = [  # (gamma, alpha, delta, xi)
    (0.1, 0.5, 0.5, 0.01),
    (0.5, 1.0, 0.2, 0.05),
    (1.0, 2.0, 1.0, 0.1),
    (2.0, 0.3, 2.0, 0.3),
    (4.0, 3.0, 0.1, 0.5),
]


def test_criterion_07_bound_validity(capsys):
    t0 = time.perf_counter()
    violations, checks = [], 0
    for seed in range(8):
        rng = np.random.default_rng(300 + seed)
        fam = random_family(rng, 2, concentration=0.5)
        for n, M in ((1, 2), (2, 2), (2, 3)):
            R = math.log2(M) / n
            lower, _ = brute_lower_value(fam, n, M)
            upper, _ = brute_det_upper_value(fam, n, M)
            for gamma, alpha, delta, xi in GRID:
                for px in ([0.5, 0.5], rng.dirichlet([1, 1])):
                    a = achievability_bound(fam, px, n, M, alpha=alpha, delta=delta).value
                    checks += 1
                    if a < upper - 1e-12:
                        violations.append(("achievability", seed, n, M, a, upper))
                for q in ([0.5, 0.5], [1.0, 0.0], rng.dirichlet([1, 1])):
                    d = dual_converse(fam, q, n, M, gamma)
                    t = type_converse(fam, q, n, R, xi).value
                    checks += 2
                    if d > lower + 1e-12:
                        violations.append(("dual", seed, n, M, d, lower))
                    if t > lower + 1e-12:
                        violations.append(("type", seed, n, M, t, lower))
    verdict(capsys, 7, not violations, f"{checks} bound evaluations, {len(violations)} violations {violations[:2]}",
            time.perf_counter() - t0)


def test_criterion_08_convergence_trend(capsys):
    t0 = time.perf_counter()
    fam = swapped_pairs()
    caps = subset_capacities(fam)
    c_low = caps[frozenset({0, 1})].value
    c_up = min(caps[frozenset({0})].value, caps[frozenset({1})].value)
    R = 0.5 * (c_low + c_up)
    reports = [gap_report(fam, n, R, capacities=caps) for n in (256, 1024, 4096)]
    gaps = [r.gap for r in reports]
    last = reports[-1]
    ok = (last.achievability_upper <= 0.6 and last.converse_lower >= 0.4
          and abs(last.achievability_upper - 0.5) <= 0.1 and abs(last.converse_lower - 0.5) <= 0.1
          and all(b < a for a, b in zip(gaps, gaps[1:])))
    rows = ", ".join(f"n={r.n}: [{r.converse_lower:.4f}, {r.achievability_upper:.4f}]" for r in reports)
    verdict(capsys, 8, ok, f"R={R:.4f} {rows}", time.perf_counter() - t0, 600)


def test_criterion_09_eps_capacity(capsys):
    t0 = time.perf_counter()
    pair = build_curves(swapped_pairs())
    got = {eps: eps_capacity_compound(pair, eps) for eps in (0.1, 0.4, 0.5, 0.9)}
    tol = 4 * pair.tol
    ok = (all(abs(got[e] - pair.lower_capacity) <= tol for e in (0.1, 0.4))
          and all(abs(got[e] - pair.upper_capacity) <= tol for e in (0.5, 0.9)))
    detail = ", ".join(f"C_{e} = {v:.6f}" for e, v in got.items())
    verdict(capsys, 9, ok, f"{detail} (lower {pair.lower_capacity:.6f}, upper {pair.upper_capacity:.6f})",
            time.perf_counter() - t0, 10)


def test_criterion_10_numeric_kernels(capsys):
    t0 = time.perf_counter()
    problems = []
    # density tails vs enumeration
    for seed in range(5):
        rng = np.random.default_rng(500 + seed)
        W, px, ref = rng.dirichlet([1, 1], size=2), rng.dirichlet([1, 1]), rng.dirichlet([2, 2])
        for n in (1, 2, 3):
            vals, probs = brute_density_law(W, px, ref, n)
            t = np.concatenate([np.unique(vals), np.unique(vals) - 1e-6])
            if not np.allclose(ProductDensityLaw(Dmc(W), px, ref, n).cdf(t), brute_cdf(vals, probs, t), atol=1e-12):
                problems.append(f"product law seed {seed} n {n}")
            single = brute_density_law(W, px, ref, 1)
            conv = convolve_n(InfoDensitySpectrum(*single), n)
            if not np.allclose(conv.cdf(t), brute_cdf(vals, probs, t), atol=1e-12):
                problems.append(f"convolution seed {seed} n {n}")
    # capacities vs closed forms
    cap_err = 0.0
    for p in (0.01, 0.11, 0.3, 0.45):
        cap_err = max(cap_err, abs(channel_capacity(np.array([[1 - p, p], [p, 1 - p]])).value - (1 - h2(p))))
    for e in (0.0, 0.2, 0.5, 0.9):
        cap_err = max(cap_err, abs(channel_capacity(np.array([[1 - e, e, 0], [0, e, 1 - e]])).value - (1 - e)))
    if cap_err > 1e-4:
        problems.append(f"capacity error {cap_err}")
    # greedy builder meets its own guarantee
    active = 0
    for seed in range(20):
        rng = np.random.default_rng(700 + seed)
        e = rng.uniform(0, 0.1, size=(2, 2))
        mats = [np.array([[1 - a, a], [b, 1 - b]]) for a, b in e]
        fam = ChannelFamily.from_matrices(mats)
        n, M = int(rng.integers(4, 8)), int(rng.integers(2, 5))
        res = feinstein_build(fam, n, M)
        if res.lambda_bound < 1:
            active += 1
            if res.K < M:
                problems.append(f"builder seed {seed}: K={res.K} < M={M}")
    if active == 0:
        problems.append("no instance had lambda < 1")
    verdict(capsys, 10, not problems,
            f"tails exact, capacity error {cap_err:.1e}, builder K >= M on {active}/20 active instances"
            + (f" {problems}" if problems else ""), time.perf_counter() - t0)
