"""Brute-force ground truth: exact Shapley values, stratum moments, clause checks.

Two independent routes compute exact Shapley values: full permutation
enumeration and the subset-weighted formula.  Both accumulate with
``math.fsum`` so they agree to a few ulps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .game import CooperativeGame

MAX_PERMUTATION_PLAYERS = 10
MAX_SUBSET_PLAYERS = 20
MAX_MOMENT_PLAYERS = 10
CLAUSE_TOL = 1e-12

_CHUNK = 40320


@dataclass(frozen=True)
class ExactProfile:
    """Exact per-player statistics of the marginal contribution sigma_i.

    ``mean_by_cardinality[i, c]`` and ``mean_sq_by_cardinality[i, c]`` are
    E[sigma_i] and E[sigma_i^2] over uniformly random predecessor sets of size c.
    """

    phi: np.ndarray
    variance_uniform: np.ndarray
    mean_by_cardinality: np.ndarray
    mean_sq_by_cardinality: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.size


def _require(game: CooperativeGame, cap: int, what: str) -> None:
    if game.n > cap:
        raise CapacityError(f"{what} supports n <= {cap}, got n = {game.n}")


def _masks_without(n: int, excluded: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    return masks[(masks & excluded) == 0]


def exact_shapley_permutations(game: CooperativeGame) -> np.ndarray:
    """Average marginal contribution over all n! orderings."""
    _require(game, MAX_PERMUTATION_PLAYERS, "permutation enumeration")
    n = game.n
    table = game.value_table()
    partial: list[list[float]] = [[] for _ in range(n)]
    perms = itertools.permutations(range(n))
    rows = np.arange(_CHUNK)
    while True:
        chunk = np.array(list(itertools.islice(perms, _CHUNK)), dtype=np.int64)
        if chunk.size == 0:
            break
        bits = np.left_shift(1, chunk)
        after = np.cumsum(bits, axis=1)
        sigma = table[after] - table[after - bits]
        by_player = np.empty_like(sigma)
        by_player[rows[: len(chunk), None], chunk] = sigma
        for i in range(n):
            partial[i].append(math.fsum(by_player[:, i].tolist()))
    total = math.factorial(n)
    return np.array([math.fsum(p) / total for p in partial])


def exact_shapley_subsets(game: CooperativeGame) -> np.ndarray:
    """Shapley values via sum over S of |S|!(n-1-|S|)!/n! * (v(S+i) - v(S))."""
    _require(game, MAX_SUBSET_PLAYERS, "the subset formula")
    n = game.n
    table = game.value_table()
    coef = np.array([float(math.factorial(k) * math.factorial(n - 1 - k)) for k in range(n)])
    total = math.factorial(n)
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        s = _masks_without(n, bit)
        terms = coef[np.bitwise_count(s)] * (table[s | bit] - table[s])
        phi[i] = math.fsum(terms.tolist()) / total
    return phi


def exact_moments(game: CooperativeGame) -> ExactProfile:
    """Exact per-cardinality first and second moments of every sigma_i."""
    _require(game, MAX_MOMENT_PLAYERS, "exact moments")
    n = game.n
    table = game.value_table()
    counts = np.array([math.comb(n - 1, c) for c in range(n)], dtype=float)
    mean = np.empty((n, n))
    mean_sq = np.empty((n, n))
    for i in range(n):
        bit = 1 << i
        s = _masks_without(n, bit)
        sigma = table[s | bit] - table[s]
        card = np.bitwise_count(s)
        mean[i] = np.bincount(card, weights=sigma, minlength=n) / counts
        mean_sq[i] = np.bincount(card, weights=sigma * sigma, minlength=n) / counts
    phi = exact_shapley_subsets(game)
    variance = np.maximum(mean_sq.mean(axis=1) - phi**2, 0.0)
    return ExactProfile(phi=phi, variance_uniform=variance, mean_by_cardinality=mean, mean_sq_by_cardinality=mean_sq)


def check_axiom_clauses(game: CooperativeGame, i: int, j: int) -> dict[str, bool]:
    """Whether i and j are symmetric, and whether i is strictly more desirable than j.

    Comparisons use an absolute tolerance of 1e-12.
    """
    _require(game, MAX_SUBSET_PLAYERS, "clause checks")
    if i == j:
        raise InvalidArgumentError("clause checks need two distinct players")
    for p in (i, j):
        if not 0 <= p < game.n:
            raise InvalidArgumentError(f"player {p} outside 0..{game.n - 1}")
    table = game.value_table()
    bi, bj = 1 << i, 1 << j
    rest = _masks_without(game.n, bi | bj)
    diff = table[rest | bi] - table[rest | bj]
    return {
        "symmetric": bool(np.all(np.abs(diff) <= CLAUSE_TOL)),
        "strictly_desirable": bool(np.any(diff > CLAUSE_TOL) and np.all(diff >= -CLAUSE_TOL)),
    }


def symmetric_pairs(game: CooperativeGame) -> list[tuple[int, int]]:
    """Unordered pairs (i < j) satisfying the symmetry clause."""
    return [
        (i, j)
        for i, j in itertools.combinations(range(game.n), 2)
        if check_axiom_clauses(game, i, j)["symmetric"]
    ]


def desirable_pairs(game: CooperativeGame) -> list[tuple[int, int]]:
    """Ordered pairs (i, j) where i is strictly more desirable than j."""
    out = []
    for i, j in itertools.permutations(range(game.n), 2):
        if check_axiom_clauses(game, i, j)["strictly_desirable"]:
            out.append((i, j))
    return out
