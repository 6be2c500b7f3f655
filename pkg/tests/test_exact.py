import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapfair.errors import CapacityError, InvalidArgumentError
from shapfair.exact import (
    check_axiom_clauses,
    desirable_pairs,
    exact_moments,
    exact_shapley_permutations,
    exact_shapley_subsets,
    symmetric_pairs,
)
from shapfair.game import TableGame, additive, majority, make_synthetic, random_game, weighted_voting


def naive_shapley(game):
    """Textbook definition: average marginal contribution over all orderings."""
    n = game.n
    total = np.zeros(n)
    for perm in itertools.permutations(range(n)):
        pred = 0
        for p in perm:
            total[p] += game.evaluate(pred | 1 << p) - game.evaluate(pred)
            pred |= 1 << p
    return total / math.factorial(n)


class TestShapley:
    @pytest.mark.parametrize("seed", range(5))
    def test_routes_agree(self, seed):
        g = random_game(6, seed=seed)
        a, b = exact_shapley_permutations(g), exact_shapley_subsets(g)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_matches_naive(self):
        g = random_game(4, seed=11)
        np.testing.assert_allclose(exact_shapley_subsets(g), naive_shapley(g), atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=8, max_size=8))
    def test_efficiency(self, values):
        g = TableGame(values)
        phi = exact_shapley_subsets(g)
        assert math.fsum(phi) == pytest.approx(values[7] - values[0], abs=1e-9)

    def test_caps(self):
        with pytest.raises(CapacityError):
            exact_shapley_permutations(majority(11))
        with pytest.raises(CapacityError):
            exact_moments(majority(11))


class TestMoments:
    def test_additive_has_zero_variance(self):
        prof = exact_moments(additive([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(prof.variance_uniform, 0.0, atol=1e-15)
        np.testing.assert_allclose(prof.mean_by_cardinality, np.repeat([[1.0], [2.0], [3.0]], 3, axis=1))

    def test_glove_strata(self, glove):
        prof = exact_moments(glove)
        # right glove pays off once at least one left glove precedes it
        np.testing.assert_allclose(prof.mean_by_cardinality[2], [0.0, 1.0, 1.0])
        np.testing.assert_allclose(prof.mean_by_cardinality[0], [0.0, 0.5, 0.0])

    def test_phi_is_stratum_average(self):
        prof = exact_moments(random_game(5, seed=3))
        np.testing.assert_allclose(prof.mean_by_cardinality.mean(axis=1), prof.phi, atol=1e-14)


class TestClauses:
    def test_majority_all_symmetric(self):
        assert symmetric_pairs(majority(4)) == list(itertools.combinations(range(4), 2))
        assert desirable_pairs(majority(4)) == []

    def test_glove(self, glove):
        assert symmetric_pairs(glove) == [(0, 1)]
        # the lone right glove completes a pair with either left glove
        assert desirable_pairs(glove) == [(2, 0), (2, 1)]

    def test_weighted_voting_desirability(self):
        g = weighted_voting([3, 2, 1], quota=4)
        assert check_axiom_clauses(g, 0, 2) == {"symmetric": False, "strictly_desirable": True}
        assert (2, 0) not in desirable_pairs(g)

    def test_duplicated_clones_symmetric(self):
        g = make_synthetic("duplicated", base={"family": "random", "n": 3, "seed": 1})
        sym = symmetric_pairs(g)
        for pair in g.clone_pairs:
            assert pair in sym

    def test_same_player(self):
        with pytest.raises(InvalidArgumentError):
            check_axiom_clauses(majority(3), 1, 1)
