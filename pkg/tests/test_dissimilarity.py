import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleminer.dataset import sample_language_words
from ruleminer.dissimilarity import (
    ComparisonMatrix,
    ExceedsMaxEdits,
    delta_hat,
    dissimilarity,
    edit_distance,
    edit_oracle_bruteforce,
    edit_result,
    matrix_csv,
    pairwise_matrix,
    report_csv_row,
    report_text,
    select_representative,
)
from ruleminer.fsa import TPS, Alphabet, Fsa, regex_to_fsa

from conftest import all_words, no_three_zeros, random_machine


ABC = Alphabet(("a", "b", "c"))


# ---------------------------------------------------------------------------
# Edit distance against anchor values


def test_two_edits_into_abc_star():
    lang = regex_to_fsa("(abc)*", ABC)
    result = edit_result("aa", lang)
    assert result.distance == 2
    assert result.ratio == Fraction(1)


def test_member_words_have_distance_zero(target):
    assert edit_distance("pts", target) == 0
    assert edit_distance("tps", target) == 0


def test_shortest_insecure_path_costs_its_whole_length(target):
    result = edit_result("s", target)
    assert result.distance == 1
    assert result.ratio == Fraction(1)


def test_three_zeros_language_max_ratio_is_one_third():
    lang = no_three_zeros()
    result = edit_result("000", lang)
    assert result.distance == 1
    assert result.ratio == Fraction(1, 3)
    # and no word does worse: the spec of this language caps the ratio
    for w in all_words(lang.alphabet, 6, min_len=1):
        assert edit_result(w, lang).ratio <= Fraction(1, 3)


def test_empty_language_distance_is_infinite():
    lang = Fsa(frozenset({0}), TPS, 0, frozenset(), {(0, a): 0 for a in TPS})
    assert edit_distance("t", lang) == math.inf


def test_oracle_agrees_on_anchor():
    lang = regex_to_fsa("(abc)*", ABC)
    assert edit_oracle_bruteforce("aa", lang) == 2


def test_oracle_zero_for_members(target):
    for w in ("pts", "tps", "t"):
        assert edit_oracle_bruteforce(w, target) == 0


def test_oracle_raises_beyond_budget(target):
    only_long = regex_to_fsa("tttttt(t)*", TPS)
    with pytest.raises(ExceedsMaxEdits):
        edit_oracle_bruteforce("s", only_long, max_d=4)
    assert edit_distance("s", only_long) == 6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_edit_distance_matches_bruteforce(seed):
    rng = random.Random(seed)
    machine = random_machine(rng, min_states=2, max_states=4)
    for _ in range(8):
        length = rng.randint(1, 5)
        word = "".join(rng.choice(TPS.symbols) for _ in range(length))
        fast = edit_distance(word, machine)
        try:
            assert fast == edit_oracle_bruteforce(word, machine, max_d=4)
        except ExceedsMaxEdits:
            assert fast > 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_edit_distance_zero_iff_member(seed):
    rng = random.Random(seed)
    machine = random_machine(rng)
    for word in all_words(TPS, 4, min_len=1):
        assert (edit_distance(word, machine) == 0) == machine.accepts(word)


def test_edit_distance_coarse_upper_bound(target):
    shortest = min(
        (w for w in all_words(TPS, 3) if target.accepts(w) and w), key=len, default="t")
    for word in all_words(TPS, 5, min_len=1):
        assert edit_distance(word, target) <= len(word) + len(shortest)


# ---------------------------------------------------------------------------
# Directed sampled delta


def test_delta_hat_zero_for_subset(target):
    t_star = regex_to_fsa("t*", TPS)
    words = sample_language_words(t_star, 50, 1, 10, seed=1, allow_shortfall=True)
    assert words and delta_hat(words, target).ratio == 0


def test_delta_hat_max_ratio_witness(target):
    result = delta_hat(["tps", "s"], target)
    assert result.ratio == Fraction(1)
    assert result.witness == "s"


def test_delta_hat_monotone_under_sample_growth(target):
    words = sample_language_words(target.complement(), 60, 1, 12, seed=3)
    previous = Fraction(0)
    for cut in range(1, len(words) + 1):
        current = delta_hat(words[:cut], target).ratio
        assert current >= previous
        previous = current


def test_delta_hat_rejects_empty_sets():
    with pytest.raises(ValueError):
        delta_hat([], regex_to_fsa("t*", TPS))


# ---------------------------------------------------------------------------
# Symmetric dissimilarity


def test_dissimilarity_identical_languages_is_zero(target):
    report = dissimilarity(target, target, n_samples=500, seed=5)
    assert report.delta == 0
    assert report.delta_ab == report.delta_ba == 0


def test_dissimilarity_is_asymmetric_before_max(target):
    t_star = regex_to_fsa("t*", TPS)
    report = dissimilarity(t_star, target, n_samples=400, seed=6)
    assert report.delta_ab == 0  # t* is a sublanguage of the target
    assert report.delta_ba > 0
    assert report.witness_ba.startswith("p") or "p" in report.witness_ba
    assert report.delta == report.delta_ba


def test_dissimilarity_empty_language_reports_infinity(target):
    empty = Fsa(frozenset({0}), TPS, 0, frozenset(), {(0, a): 0 for a in TPS})
    report = dissimilarity(target, empty, n_samples=10, seed=0)
    assert report.delta == math.inf
    assert report.shortfall


def test_dissimilarity_finite_language_shortfall():
    single = regex_to_fsa("a", Alphabet(("a",)))
    report = dissimilarity(single, single, n_samples=10, seed=0)
    assert report.samples_ab == 1
    assert report.shortfall
    assert report.delta == 0


def test_dissimilarity_deterministic_per_seed(target):
    t_star = regex_to_fsa("t*", TPS)
    a = dissimilarity(t_star, target, n_samples=200, seed=9)
    b = dissimilarity(t_star, target, n_samples=200, seed=9)
    assert a == b


# ---------------------------------------------------------------------------
# Pairwise matrix and representative selection


def test_matrix_identical_machines_all_zero(target):
    matrix = pairwise_matrix([target, target, target], n_samples=200, seed=2)
    assert all(v == 0 for row in matrix.values for v in row)
    assert select_representative(matrix) == 0


def test_matrix_diagonal_zero_and_ranking(target):
    t_star = regex_to_fsa("t*", TPS)
    machines = [target, target, t_star]
    matrix = pairwise_matrix(machines, n_samples=300, seed=3)
    for i in range(3):
        assert matrix.values[i][i] == 0
    # the two identical machines share the lowest row mean
    assert matrix.row_means[0] == matrix.row_means[1] < matrix.row_means[2]
    assert select_representative(matrix) == 0


def test_matrix_flags_empty_language(target):
    empty = Fsa(frozenset({0}), TPS, 0, frozenset(), {(0, a): 0 for a in TPS})
    matrix = pairwise_matrix([target, empty], n_samples=50, seed=1)
    assert matrix.values[0][1] == math.inf
    assert matrix.row_means[0] == math.inf
    with pytest.raises(ValueError):
        select_representative(matrix)


def test_matrix_requires_two_machines(target):
    with pytest.raises(ValueError):
        pairwise_matrix([target], n_samples=10)


def test_representative_all_equal_rows_picks_first():
    matrix = ComparisonMatrix(
        ((Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))),
        (Fraction(1, 2), Fraction(1, 2)),
    )
    assert select_representative(matrix) == 0


# ---------------------------------------------------------------------------
# Serialization


def test_report_csv_and_text(target):
    t_star = regex_to_fsa("t*", TPS)
    report = dissimilarity(t_star, target, n_samples=100, seed=4)
    row = report_csv_row(report)
    assert row.count(",") == 10
    assert "dissimilarity:" in report_text(report)


def test_matrix_csv_shape(target):
    matrix = pairwise_matrix([target, target], n_samples=50, seed=2)
    lines = matrix_csv(matrix).strip().splitlines()
    assert lines[0] == "machine,0,1,row_mean"
    assert len(lines) == 3
