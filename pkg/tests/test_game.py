import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapfair.errors import (
    CapacityError,
    ExternalUtilityError,
    FormatError,
    InvalidArgumentError,
    InvalidCoalitionError,
    NumericError,
)
from shapfair.exact import exact_shapley_subsets
from shapfair.game import (
    CooperativeGame,
    TableGame,
    additive,
    airport,
    airport_shapley,
    coalition,
    duplicated,
    load_table,
    majority,
    make_synthetic,
    members,
    random_game,
    save_table,
    saturating,
    subprocess_game,
    threshold,
    union,
)


class TestCoalitions:
    def test_roundtrip(self):
        assert coalition([0, 2, 5]) == 0b100101
        assert members(0b100101) == (0, 2, 5)
        assert coalition([]) == 0

    def test_negative_index(self):
        with pytest.raises(InvalidCoalitionError):
            coalition([-1])

    @given(st.sets(st.integers(0, 63)))
    def test_members_inverts_coalition(self, s):
        assert members(coalition(s)) == tuple(sorted(s))


class TestEvaluate:
    def test_additive_value(self):
        assert additive([1, 2, 3]).evaluate(coalition([0, 2])) == 4.0

    def test_empty_coalition(self):
        g = TableGame([0.25, 1.0])
        assert g.evaluate(0) == 0.25

    def test_glove_value(self, glove):
        assert glove.evaluate(coalition([0, 2])) == 1.0

    @pytest.mark.parametrize("bad", [8, -1, 1 << 10])
    def test_out_of_range_coalition(self, bad):
        with pytest.raises(InvalidCoalitionError):
            additive([1, 2, 3]).evaluate(bad)

    def test_non_integer_coalition(self):
        with pytest.raises(InvalidCoalitionError):
            additive([1, 2]).evaluate(1.0)

    def test_counter_counts_distinct_coalitions(self):
        g = additive([1, 2, 3])
        for c in [1, 2, 1, 1, 3, 2]:
            g.evaluate(c)
        assert g.eval_count == 3

    def test_non_finite_value_rejected(self):
        g = CooperativeGame(2, lambda c: math.inf if c == 3 else 0.0)
        with pytest.raises(NumericError):
            g.evaluate(3)

    @pytest.mark.parametrize("n", [0, 65])
    def test_player_cap(self, n):
        with pytest.raises(CapacityError):
            CooperativeGame(n, lambda c: 0.0)

    @settings(max_examples=30)
    @given(st.lists(st.integers(0, 15), min_size=1, max_size=40))
    def test_memo_is_transparent(self, seq):
        g = random_game(4, seed=1)
        fresh = [random_game(4, seed=1).evaluate(c) for c in seq]
        assert [g.evaluate(c) for c in seq] == fresh
        assert g.eval_count == len(set(seq))


class TestMarginal:
    def test_additive(self):
        assert additive([1, 2, 3]).marginal_contribution(1, coalition([0])) == 2.0

    @pytest.mark.parametrize("pred, expected", [(coalition([0]), 1.0), (0, 0.0)])
    def test_majority(self, pred, expected):
        assert majority(3).marginal_contribution(2, pred) == expected

    def test_player_already_present(self):
        with pytest.raises(InvalidArgumentError):
            additive([1, 2]).marginal_contribution(0, 0b01)


class TestFamilies:
    def test_additive_phi(self):
        np.testing.assert_allclose(exact_shapley_subsets(additive([1, 2, 3])), [1, 2, 3], rtol=0, atol=1e-15)

    def test_majority_phi(self):
        np.testing.assert_allclose(exact_shapley_subsets(majority(3)), [1 / 3] * 3, atol=1e-12)

    def test_glove_phi(self, glove):
        np.testing.assert_allclose(exact_shapley_subsets(glove), [1 / 6, 1 / 6, 2 / 3], atol=1e-12)

    def test_glove_overlap(self):
        with pytest.raises(InvalidArgumentError):
            make_synthetic("glove", left=[0, 1], right=[1])

    @pytest.mark.parametrize("costs", [[1.0, 2.0, 3.0], [5.0, 1.0, 4.0, 4.0, 2.0]])
    def test_airport_closed_form(self, costs):
        np.testing.assert_allclose(exact_shapley_subsets(airport(costs)), airport_shapley(costs), atol=1e-12)

    def test_threshold(self):
        g = threshold([1, 2, 3], k=2)
        assert g.evaluate(0b001) == 0.0
        assert g.evaluate(0b101) == 4.0
        with pytest.raises(InvalidArgumentError):
            threshold([1, 2], k=3)

    def test_union_adds_blocks(self):
        g = union(additive([1, 2]), majority(3))
        assert g.n == 5
        phi = exact_shapley_subsets(g)
        np.testing.assert_allclose(phi, [1, 2, 1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_duplicated_collapse(self):
        base = random_game(4, seed=5)
        g = duplicated(base)
        assert g.n == 8
        assert g.clone_pairs == [(0, 4), (1, 5), (2, 6), (3, 7)]
        for c in range(1 << 8):
            assert g.evaluate(c) == base.evaluate((c | c >> 4) & 0b1111)

    def test_duplicated_clone_phi_equal(self):
        phi = exact_shapley_subsets(duplicated(random_game(3, seed=2)))
        np.testing.assert_allclose(phi[:3], phi[3:], atol=1e-12)

    def test_saturating_is_reproducible(self):
        a, b = saturating(5, seed=4), saturating(5, seed=4)
        np.testing.assert_array_equal(a.value_table(), b.value_table())

    def test_nested_spec(self):
        g = make_synthetic("duplicated", base={"family": "additive", "weights": [1, 2]})
        assert g.n == 4

    def test_unknown_family(self):
        with pytest.raises(InvalidArgumentError, match="unknown game family"):
            make_synthetic("nope")

    def test_missing_parameter(self):
        with pytest.raises(InvalidArgumentError, match="weights"):
            make_synthetic("additive")

    def test_table_cap(self):
        with pytest.raises(CapacityError):
            majority(21).value_table()


class TestTables:
    def test_roundtrip_bit_exact(self, tmp_path):
        g = random_game(5, seed=9)
        path = tmp_path / "g.json"
        save_table(g, path)
        np.testing.assert_array_equal(load_table(path).value_table(), g.value_table())

    def test_additive_roundtrip(self, tmp_path):
        path = tmp_path / "a.json"
        save_table(additive([1, 2, 3]), path)
        assert load_table(path).value_table().tolist() == [0, 1, 2, 3, 3, 4, 5, 6]

    def _write(self, tmp_path, doc):
        path = tmp_path / "t.json"
        path.write_text(json.dumps(doc) if isinstance(doc, dict) else doc)
        return path

    def test_missing_empty_key(self, tmp_path):
        doc = {"format": "shapfair-game-v1", "n": 1, "values": {"1": 1.0}}
        with pytest.raises(FormatError, match="coalition 0"):
            load_table(self._write(tmp_path, doc))

    def test_nan_value(self, tmp_path):
        text = '{"format": "shapfair-game-v1", "n": 1, "values": {"0": 0.0, "1": NaN}}'
        with pytest.raises(FormatError, match="finite"):
            load_table(self._write(tmp_path, text))

    def test_string_value(self, tmp_path):
        doc = {"format": "shapfair-game-v1", "n": 1, "values": {"0": 0.0, "1": "NaN"}}
        with pytest.raises(FormatError):
            load_table(self._write(tmp_path, doc))

    def test_too_many_players(self, tmp_path):
        doc = {"format": "shapfair-game-v1", "n": 21, "values": {}}
        with pytest.raises(FormatError, match="capped"):
            load_table(self._write(tmp_path, doc))

    def test_wrong_format_tag(self, tmp_path):
        with pytest.raises(FormatError):
            load_table(self._write(tmp_path, {"format": "other", "n": 1, "values": {}}))

    def test_extra_keys(self, tmp_path):
        doc = {"format": "shapfair-game-v1", "n": 1, "values": {"0": 0, "1": 1, "2": 2}}
        with pytest.raises(FormatError, match="unexpected"):
            load_table(self._write(tmp_path, doc))


class TestSubprocess:
    def test_protocol(self, child_script):
        cmd = child_script('print(f"VALUE {bin(c).count(\'1\') * 0.5!r}")')
        with subprocess_game(cmd, 3) as g:
            assert g.evaluate(0b111) == 1.5
            assert g.marginal_contribution(0, 0b110) == 0.5
            phi = exact_shapley_subsets(g)
        np.testing.assert_allclose(phi, [0.5] * 3, atol=1e-15)

    def test_malformed_reply(self, child_script):
        with subprocess_game(child_script('print("HELLO 1")'), 2) as g:
            with pytest.raises(ExternalUtilityError) as info:
                g.evaluate(3)
        assert info.value.request == "EVAL 3"

    def test_child_exits(self, child_script):
        with subprocess_game(child_script("sys.exit(0)"), 2) as g:
            with pytest.raises(ExternalUtilityError):
                g.evaluate(1)

    def test_timeout(self, child_script):
        cmd = child_script("time.sleep(5)", preamble="import time")
        with subprocess_game(cmd, 2, timeout=0.2) as g:
            with pytest.raises(ExternalUtilityError, match="timed out") as info:
                g.evaluate(2)
        assert info.value.request == "EVAL 2"

    def test_non_finite_reply(self, child_script):
        with subprocess_game(child_script('print("VALUE nan")'), 2) as g:
            with pytest.raises(ExternalUtilityError, match="non-finite"):
                g.evaluate(1)

    def test_missing_executable(self):
        with pytest.raises(ExternalUtilityError):
            subprocess_game(["/nonexistent/utility"], 2)

    def test_bad_player_count(self, child_script):
        with pytest.raises(CapacityError):
            subprocess_game(child_script('print("VALUE 0")'), 0)
