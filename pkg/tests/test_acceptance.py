"""End-to-end acceptance checks.

Every test prints a ``PASS/FAIL criterion N`` line with the measured quantity
next to its tolerance; the lines are repeated in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from shapfair.cli import main
from shapfair.estimators import GaeConfig, run_estimator, simulate_allocation
from shapfair.exact import exact_moments, exact_shapley_permutations, exact_shapley_subsets
from shapfair.fairness import budget_bound, chebyshev_check, check_a2, delta_bound, nl_nsw, rank_metrics
from shapfair.game import additive, make_synthetic, majority, random_game
from shapfair.proposal import map_theta, oracle_theta, proposal_variance, uniform_theta
from shapfair.verify import GLOVE, HETEROGENEOUS_GAME, build

RTOL = 1e-12
ATOL = 1e-15


def seeded(seed, **kw):
    cfg = GaeConfig(**kw)
    cfg.seed = seed
    return cfg


def test_oracle_equivalence(record):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        g = random_game(int(rng.integers(3, 9)), seed=k)
        a, b = exact_shapley_permutations(g), exact_shapley_subsets(g)
        worst = max(worst, float(np.max(np.abs(a - b) / (RTOL * np.maximum(np.abs(a), np.abs(b)) + ATOL))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and elapsed < 30
    record(1, ok, f"worst error/tolerance {worst:.3g} (<= 1), runtime {elapsed:.1f}s (< 30s)")
    assert ok


def test_closed_forms(record, glove):
    dyadic = [0.5, 2.0, -3.25, 1.0, 0.125]
    exact_additive = np.array_equal(exact_shapley_subsets(additive(dyadic)), dyadic)
    w = np.random.default_rng(5).normal(size=6)
    add_err = float(np.max(np.abs(exact_shapley_subsets(additive(w)) - w) / (RTOL * np.abs(w) + ATOL)))
    glove_err = float(np.max(np.abs(exact_shapley_permutations(glove) - [1 / 6, 1 / 6, 2 / 3])))
    maj_err = float(np.max(np.abs(exact_shapley_subsets(majority(3)) - 1 / 3)))
    ok = exact_additive and add_err <= 1 and glove_err <= 1e-12 and maj_err <= 1e-12
    record(
        2, ok,
        f"additive bitwise on dyadic weights {exact_additive}, general additive error/tol {add_err:.3g} (<= 1), "
        f"glove {glove_err:.2g}, majority {maj_err:.2g} (<= 1e-12)",
    )
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize(
    "kind,alpha", [("mc", 2.0), ("greedy", 2.0), ("gae", 0.0), ("gae", 2.0), ("gae", 100.0)]
)
def test_unbiasedness(record, kind, alpha):
    game = build(GLOVE)
    phi = exact_shapley_subsets(game)
    seeds = 1000
    start = time.perf_counter()
    est = np.array(
        [run_estimator(kind, game, seeded(s, m_bootstrap=5, m_budget=60, alpha=alpha)).phi_hat for s in range(seeds)]
    )
    elapsed = time.perf_counter() - start
    se = est.std(axis=0, ddof=1) / math.sqrt(seeds)
    z = np.abs(est.mean(axis=0) - phi) / se
    ok = bool(np.all(z <= 4.0)) and elapsed < 120
    record(3, ok, f"{kind}(alpha={alpha:g}) per-player |z| {np.round(z, 2).tolist()} (<= 4), {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_fidelity_ordering(record):
    game = build(HETEROGENEOUS_GAME)
    v = exact_moments(game).variance_uniform
    ratio = float(v.max() / v[v > 0].min())
    start = time.perf_counter()
    means = {
        kind: float(np.mean([run_estimator(kind, game, seeded(s, m_budget=2000)).min_fs for s in range(30)]))
        for kind in ("mc", "greedy", "gae")
    }
    elapsed = time.perf_counter() - start
    gain = means["gae"] / means["mc"]
    ok = ratio >= 10 and means["gae"] >= means["greedy"] >= means["mc"] and gain > 1.5 and elapsed < 120
    record(
        4, ok,
        f"variance ratio {ratio:.0f} (>= 10), mean min-FS MC {means['mc']:.4g} <= greedy {means['greedy']:.4g} "
        f"<= GAE {means['gae']:.4g}, GAE/MC {gain:.3g} (> 1.5), {elapsed:.1f}s",
    )
    assert ok


def test_water_filling(record):
    r = np.array([1.0, 2.0, 4.0, 8.0])
    _, fs = simulate_allocation(r, 10_000)
    target = 10_000 / np.sum(1 / r)
    gap = abs(float(fs.min()) - target)
    ok = gap <= r.max()
    record(5, ok, f"|min FS - {target:.2f}| = {gap:.3g} (<= {r.max():g})")
    assert ok


def test_optimal_proposal(record):
    rng = np.random.default_rng(6)
    worst, strict_cases, strict_ok = -math.inf, 0, True
    for k in range(50):
        g = random_game(int(rng.integers(2, 7)), seed=500 + k)
        prof = exact_moments(g)
        for i in range(g.n):
            opt = proposal_variance(oracle_theta(prof, i), prof, i)
            uni = proposal_variance(uniform_theta(g.n), prof, i)
            worst = max(worst, opt - uni)
            sq = prof.mean_sq_by_cardinality[i]
            if sq.min() > 0 and sq.max() > 1.1 * sq.min():
                strict_cases += 1
                strict_ok &= opt < uni
    ok = worst <= 1e-9 and strict_ok and strict_cases > 0
    record(6, ok, f"max V(opt) - V(uniform) {worst:.3g} (<= 1e-9), strict in {strict_cases} heterogeneous cases: {strict_ok}")
    assert ok


@pytest.mark.slow
def test_chebyshev(record):
    start = time.perf_counter()
    cells = chebyshev_check(build(GLOVE), "mc", GaeConfig(m_bootstrap=50, m_budget=0), [0.5, 1.0, 2.0], 2000)
    elapsed = time.perf_counter() - start
    margin = max(c.empirical - c.bound - 3 * c.std_err for c in cells)
    ok = all(c.passed for c in cells) and elapsed < 60
    record(7, ok, f"worst empirical - (bound + 3 se) {margin:.3g} (<= 0) over {len(cells)} cells, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_symmetry_improvement(record):
    game = make_synthetic("duplicated", base={"family": "saturating", "n": 10, "seed": 0})
    phi = exact_shapley_subsets(game)
    rates, min_fs = {}, {}
    for kind in ("mc", "gae"):
        runs = [run_estimator(kind, game, seeded(s, m_budget=2000, alpha=2.0)) for s in range(30)]
        rates[kind] = float(np.mean([check_a2(phi, r.phi_hat, 0.5, 1e-3, game.clone_pairs).rate for r in runs]))
        min_fs[kind] = float(np.mean([r.min_fs for r in runs]))
    ok = rates["gae"] <= rates["mc"] and min_fs["gae"] >= 3 * min_fs["mc"]
    record(
        8, ok,
        f"A2 rate GAE {rates['gae']:.4g} <= MC {rates['mc']:.4g}, "
        f"min-FS GAE/MC {min_fs['gae'] / min_fs['mc']:.3g} (>= 3)",
    )
    assert ok


def test_map_algebra(record):
    rng = np.random.default_rng(9)
    identity = flat = 0.0
    for _ in range(200):
        w = rng.dirichlet(np.ones(int(rng.integers(2, 10))))
        identity = max(identity, float(np.max(np.abs(map_theta(w, 0.0) - w))))
        flat = max(flat, float(np.max(np.abs(map_theta(w, 1e6) - 1 / w.size))))
    worked = float(np.max(np.abs(map_theta([0.5, 0.3, 0.2], 2.0) - [0.3889, 0.3222, 0.2889])))
    ok = identity <= 1e-15 and flat < 1e-3 and worked <= 1e-4
    record(9, ok, f"alpha=0 error {identity:.2g} (<= 1e-15), alpha=1e6 error {flat:.2g} (< 1e-3), worked {worked:.2g} (<= 1e-4)")
    assert ok


def test_delta_and_budget(record):
    delta = delta_bound(1000, 0.1, 10, independent=True)
    ratio = budget_bound(8, 0.1, 0.05, independent=False) / budget_bound(4, 0.1, 0.05, independent=False)
    ok = abs(delta - 0.6513) <= 1e-4 and ratio == 4.0
    record(10, ok, f"delta {delta:.6f} (0.6513 +- 1e-4), dependent budget ratio n=8/n=4 {ratio!r} (== 4)")
    assert ok


def test_metric_definitions(record):
    rm = rank_metrics((1, 2), (2, 1))
    nsw = nl_nsw((3, 1))
    ok = rm.n_inv == 2 and rm.eps_inv == 4 and abs(nsw - 0.2877) <= 1e-4
    record(11, ok, f"n_inv {rm.n_inv} (== 2), eps_inv {rm.eps_inv!r} (== 4), NL NSW {nsw:.6f} (0.2877 +- 1e-4)")
    assert ok


def test_determinism(record, tmp_path):
    cfg = {
        "game": {"builtin": "duplicated", "params": {"base": {"family": "saturating", "n": 5, "seed": 1}}},
        "estimators": ["mc", "greedy", {"kind": "gae", "alpha": 2.0}],
        "epsilon1_grid": [0.1, 0.5, 1.0],
        "trials": 4,
        "seed": 77,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    codes = [main(["estimate", "--config", str(path), "--out", str(tmp_path / d), "--threads", t]) for d, t in
             (("a", "1"), ("b", "4"))]
    names = ("estimate.csv", "aggregate.csv", "phi.csv")
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names]
    ok = codes == [0, 0] and all(same)
    record(12, ok, f"exit codes {codes}, identical files {dict(zip(names, same))}")
    assert ok
