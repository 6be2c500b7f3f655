"""Runnable property checks, each printing its measurement next to its tolerance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimators import GaeConfig, run_estimator
from .exact import exact_moments, exact_shapley_permutations, exact_shapley_subsets
from .fairness import chebyshev_check
from .game import make_synthetic, random_game
from .proposal import map_theta, oracle_theta, proposal_variance, uniform_theta

ORACLE_RTOL = 1e-12
ORACLE_ATOL = 1e-15
Z_LIMIT = 4.0

# Two threshold-additive blocks with very different per-player variances.
HETEROGENEOUS_GAME = {
    "family": "union",
    "games": [
        {"family": "threshold", "weights": [1, 1, 2, 4], "k": 2},
        {"family": "threshold", "weights": [8, 16, 32, 64], "k": 4},
    ],
}
GLOVE = {"family": "glove", "left": [0, 1], "right": [2]}
UNBIASED_ESTIMATORS = [("mc", 2.0), ("greedy", 2.0), ("gae", 0.0), ("gae", 2.0), ("gae", 100.0)]


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: str
    passed: bool

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: measured {self.measured:.6g} ({self.tolerance})"


def build(spec: dict):
    spec = dict(spec)
    return make_synthetic(spec.pop("family"), **spec)


def oracle_suite(games: int = 100, seed: int = 0) -> list[Check]:
    """Permutation enumeration vs subset formula on random uniform[-1, 1] games, n in 3..8."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(games):
        g = random_game(int(rng.integers(3, 9)), seed=seed * 1000 + k)
        a, b = exact_shapley_permutations(g), exact_shapley_subsets(g)
        scale = np.maximum(np.abs(a), np.abs(b))
        worst = max(worst, float(np.max(np.abs(a - b) / (scale * ORACLE_RTOL + ORACLE_ATOL))))
    return [Check(f"oracle agreement over {games} games (error / tolerance)", worst,
                  f"<= 1 with rtol {ORACLE_RTOL}, atol {ORACLE_ATOL}", worst <= 1.0)]


def unbiased_suite(seeds: int = 1000, m_bootstrap: int = 5, m_budget: int = 60) -> list[Check]:
    """Mean estimate over seeds within Z_LIMIT standard errors of the exact glove values."""
    game = build(GLOVE)
    phi = exact_shapley_subsets(game)
    out = []
    for kind, alpha in UNBIASED_ESTIMATORS:
        cfg = GaeConfig(m_bootstrap=m_bootstrap, m_budget=m_budget, alpha=alpha)
        est = np.array([run_estimator(kind, game, _seeded(cfg, s)).phi_hat for s in range(seeds)])
        se = est.std(axis=0, ddof=1) / math.sqrt(seeds)
        z = np.abs(est.mean(axis=0) - phi) / np.where(se > 0, se, np.inf)
        worst = float(z.max())
        out.append(Check(f"{kind}(alpha={alpha:g}) worst |z| over players", worst, f"<= {Z_LIMIT}", worst <= Z_LIMIT))
    return out


def _seeded(cfg: GaeConfig, seed: int) -> GaeConfig:
    c = GaeConfig(**cfg.to_dict())
    c.seed = seed
    return c


def prop3_suite(seeds: int = 30, m_budget: int = 2000, alpha: float = 2.0) -> list[Check]:
    """Mean min-FS ordering GAE >= greedy >= MC on the heterogeneous game."""
    game = build(HETEROGENEOUS_GAME)
    prof = exact_moments(game)
    v = prof.variance_uniform
    ratio = float(v.max() / v[v > 0].min())
    means = {}
    for kind in ("mc", "greedy", "gae"):
        cfg = GaeConfig(m_budget=m_budget, alpha=alpha)
        means[kind] = float(np.mean([run_estimator(kind, game, _seeded(cfg, s)).min_fs for s in range(seeds)]))
    return [
        Check("per-player variance ratio", ratio, ">= 10", ratio >= 10),
        Check("mean min-FS greedy - MC", means["greedy"] - means["mc"], ">= 0", means["greedy"] >= means["mc"]),
        Check("mean min-FS GAE - greedy", means["gae"] - means["greedy"], ">= 0", means["gae"] >= means["greedy"]),
        Check("mean min-FS GAE / MC", means["gae"] / means["mc"], "> 1.5", means["gae"] / means["mc"] > 1.5),
    ]


def chebyshev_suite(trials: int = 2000, workers: int = 1) -> list[Check]:
    """Glove under MC with 50 samples per player: empirical deviation rate vs 1/(eps^2 f)."""
    game = build(GLOVE)
    cfg = GaeConfig(m_bootstrap=50, m_budget=0)
    cells = chebyshev_check(game, "mc", cfg, [0.5, 1.0, 2.0], trials, workers=workers)
    return [
        Check(
            f"player {c.player} eps1={c.epsilon1:g} empirical - bound",
            c.empirical - c.bound,
            f"<= 3 se = {3 * c.std_err:.4g}" + (" (vacuous bound)" if c.vacuous else ""),
            c.passed,
        )
        for c in cells
    ]


def proposal_suite(games: int = 50, seed: int = 0) -> list[Check]:
    """Optimal proposal never loses to uniform; MAP algebra."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for k in range(games):
        g = random_game(int(rng.integers(2, 7)), seed=10_000 + seed * 1000 + k)
        prof = exact_moments(g)
        for i in range(g.n):
            gap = proposal_variance(oracle_theta(prof, i), prof, i) - proposal_variance(uniform_theta(g.n), prof, i)
            worst = max(worst, gap)
    w = np.array([0.5, 0.3, 0.2])
    map_err = float(np.max(np.abs(map_theta(w, 2.0) - [0.3889, 0.3222, 0.2889])))
    identity = float(np.max(np.abs(map_theta(w, 0.0) - w)))
    flat = float(np.max(np.abs(map_theta(w, 1e6) - 1 / 3)))
    return [
        Check("max V(oracle) - V(uniform)", worst, "<= 1e-9", worst <= 1e-9),
        Check("alpha=0 identity error", identity, "<= 1e-15", identity <= 1e-15),
        Check("alpha=1e6 distance to uniform", flat, "<= 1e-3", flat <= 1e-3),
        Check("worked MAP example error", map_err, "<= 1e-4", map_err <= 1e-4),
    ]


SUITES: dict[str, Callable[..., list[Check]]] = {
    "oracle": oracle_suite,
    "unbiased": unbiased_suite,
    "prop3": prop3_suite,
    "chebyshev": chebyshev_suite,
    "proposal": proposal_suite,
}
