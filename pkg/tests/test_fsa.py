import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleminer.fsa import (
    TPS,
    Alphabet,
    Fsa,
    Nfa,
    RegexParseError,
    UnknownSymbolError,
    _parse_regex,
    _thompson,
    canonical_form,
    determinize,
    fsa_from_text,
    fsa_to_text,
    isomorphic,
    minimize,
    regex_to_fsa,
    security_target,
    to_dot,
)

from conftest import all_words, random_machine


# ---------------------------------------------------------------------------
# Independent regex oracle: its own parser and a position-set matcher that
# shares no code with the Thompson/subset/minimize pipeline under test.


def _oracle_parse(pattern: str, alphabet: Alphabet):
    tokens = list(pattern)

    def alternation(i):
        branch, i = sequence(i)
        branches = [branch]
        while i < len(tokens) and tokens[i] == "|":
            branch, i = sequence(i + 1)
            branches.append(branch)
        return ("alt", branches), i

    def sequence(i):
        items = []
        while i < len(tokens) and tokens[i] not in ")|":
            item, i = starred(i)
            items.append(item)
        return ("seq", items), i

    def starred(i):
        if tokens[i] == "(":
            inner, i = alternation(i + 1)
            assert tokens[i] == ")"
            node = inner
        else:
            assert tokens[i] in alphabet.symbols
            node = ("sym", tokens[i])
        i += 1
        while i < len(tokens) and tokens[i] == "*":
            node = ("star", node)
            i += 1
        return node, i

    node, i = alternation(0)
    assert i == len(tokens)
    return node


def _oracle_ends(node, word: str, starts: set[int]) -> set[int]:
    kind = node[0]
    if kind == "sym":
        return {i + 1 for i in starts if i < len(word) and word[i] == node[1]}
    if kind == "seq":
        positions = set(starts)
        for item in node[1]:
            positions = _oracle_ends(item, word, positions)
        return positions
    if kind == "alt":
        out: set[int] = set()
        for branch in node[1]:
            out |= _oracle_ends(branch, word, starts)
        return out
    if kind == "star":
        positions = set(starts)
        while True:
            grown = positions | _oracle_ends(node[1], word, positions)
            if grown == positions:
                return positions
            positions = grown
    raise AssertionError(node)


def oracle_match(pattern: str, word: str, alphabet: Alphabet = TPS) -> bool:
    return len(word) in _oracle_ends(_oracle_parse(pattern, alphabet), word, {0})


REGEX_CORPUS = [
    "t*|t*p(t|p|s)*",
    "t*",
    "(t|p)*s",
    "ts*p",
    "(tp)*",
    "t(p|s)t",
    "((t|p)(s|t))*",
    "p*s*t*",
    "t|p|s",
    "(t*p)*s",
    "s(t|p)*s",
    "tt*|pp*",
]


# ---------------------------------------------------------------------------
# Target machine and membership


def test_target_accepts_secure_paths(target):
    assert target.accepts("tps")
    assert target.accepts("pts")
    assert target.accepts("ttt")


def test_target_rejects_insecure_path(target):
    assert not target.accepts("stt")
    assert not target.accepts("s")


def test_target_accepts_empty_word(target):
    # the start state doubles as an accepting state
    assert target.accepts("")


def test_accepts_unknown_symbol_raises(target):
    with pytest.raises(UnknownSymbolError):
        target.accepts("txs")


def test_run_returns_full_state_sequence(target):
    assert target.run("tps") == [0, 0, 1, 1]


# ---------------------------------------------------------------------------
# Regex compilation


def test_regex_target_pattern_gives_three_state_machine(target):
    compiled = regex_to_fsa("t*|t*p(t|p|s)*", TPS)
    assert len(compiled.states) == 3
    assert isomorphic(compiled, target)


def test_regex_single_symbol():
    machine = regex_to_fsa("a", Alphabet(("a",)))
    # two live states plus the completion sink
    assert len(machine.states) == 3
    assert machine.accepts("a")
    assert not machine.accepts("")
    assert not machine.accepts("aa")


def test_regex_abc_star_shortest_words():
    alphabet = Alphabet(("a", "b", "c"))
    machine = regex_to_fsa("(abc)*", alphabet)
    accepted = [w for w in all_words(alphabet, 4) if machine.accepts(w)]
    expected = [w for w in all_words(alphabet, 4) if oracle_match("(abc)*", w, alphabet)]
    assert accepted == expected == ["", "abc"]


@pytest.mark.parametrize("pattern", REGEX_CORPUS)
def test_regex_agrees_with_recursive_matcher(pattern):
    machine = regex_to_fsa(pattern, TPS)
    for word in all_words(TPS, 5):
        assert machine.accepts(word) == oracle_match(pattern, word), (pattern, word)


@pytest.mark.parametrize("pattern", ["(t", "t)", "*t", "x", "t(*)", "t**("])
def test_regex_rejects_malformed_patterns(pattern):
    with pytest.raises(RegexParseError):
        regex_to_fsa(pattern, TPS)


# ---------------------------------------------------------------------------
# Minimization


def test_minimize_target_is_three_states(target):
    # four raw states: the t-prefix region appears twice before merging
    raw = regex_to_fsa("t*|t*p(t|p|s)*", TPS)
    assert len(minimize(raw).states) == 3


def test_minimize_idempotent(target):
    once = minimize(target)
    assert len(minimize(once).states) == len(once.states)
    assert minimize(once) == once


def test_minimize_merges_bisimilar_accepting_sinks():
    t = {}
    for a in TPS:
        t[(0, a)] = 1 if a == "t" else 2
        t[(1, a)] = 1
        t[(2, a)] = 2
    machine = Fsa(frozenset({0, 1, 2}), TPS, 0, frozenset({1, 2}), t)
    assert len(minimize(machine).states) == 2


def test_minimize_drops_unreachable_states(target):
    t = dict(target.transitions)
    for a in TPS:
        t[(9, a)] = 9
    bigger = Fsa(target.states | {9}, TPS, 0, target.accepting | {9}, t)
    assert len(minimize(bigger).states) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_minimize_preserves_membership(seed):
    machine = random_machine(random.Random(seed), min_states=2, max_states=6,
                             require_nonempty_language=False)
    small = minimize(machine)
    assert len(small.states) <= len(machine.states)
    for word in all_words(TPS, 6):
        assert machine.accepts(word) == small.accepts(word)


# ---------------------------------------------------------------------------
# Determinization


def _simulate_nfa(nfa: Nfa, word: str) -> bool:
    def closure(states):
        stack, seen = list(states), set(states)
        while stack:
            q = stack.pop()
            for nxt in nfa.transitions.get((q, None), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    current = closure(nfa.starts)
    for symbol in word:
        moved = set()
        for q in current:
            moved |= nfa.transitions.get((q, symbol), frozenset())
        current = closure(moved)
    return bool(current & nfa.accepting)


def test_determinize_deterministic_input_is_isomorphic(target):
    as_nfa = Nfa(
        target.states, TPS, frozenset({target.start}), target.accepting,
        {k: frozenset({v}) for k, v in target.transitions.items()},
    )
    assert isomorphic(determinize(as_nfa), target)


def test_determinize_epsilon_only_nfa():
    nfa = Nfa(
        frozenset({0, 1}), TPS, frozenset({0}), frozenset({1}),
        {(0, None): frozenset({1})},
    )
    dfa = determinize(nfa)
    assert dfa.accepts("")
    assert len(dfa.states) == 2  # accepting start plus sink
    assert not any(dfa.accepts(w) for w in all_words(TPS, 3, min_len=1))


def test_determinize_thompson_matches_nfa_simulation():
    nfa = _thompson(_parse_regex("t*|t*p(t|p|s)*", TPS), TPS)
    dfa = determinize(nfa)
    for word in all_words(TPS, 5):
        assert dfa.accepts(word) == _simulate_nfa(nfa, word)


# ---------------------------------------------------------------------------
# Isomorphism


def test_isomorphic_reflexive(target):
    assert isomorphic(target, target)


def test_isomorphic_to_relabeled_copy(target):
    relabel = {0: 7, 1: 3, 2: 5}
    copy = Fsa(
        frozenset(relabel.values()), TPS, relabel[0],
        frozenset({relabel[0], relabel[1]}),
        {(relabel[q], a): relabel[t] for (q, a), t in target.transitions.items()},
    )
    assert isomorphic(target, copy)


def test_isomorphic_distinguishes_t_star(target):
    t_star = regex_to_fsa("t*", TPS)
    assert not isomorphic(target, t_star)
    # witnessed by a word the target accepts and t* rejects
    assert target.accepts("p") and not t_star.accepts("p")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_isomorphic_is_an_equivalence(seed_a, seed_b):
    a = random_machine(random.Random(seed_a), require_nonempty_language=False)
    b = random_machine(random.Random(seed_b), require_nonempty_language=False)
    assert isomorphic(a, a) and isomorphic(b, b)
    assert isomorphic(a, b) == isomorphic(b, a)
    if isomorphic(a, b):
        assert canonical_form(a) == canonical_form(b)


# ---------------------------------------------------------------------------
# DOT export and the machine file format


def test_dot_single_state_machine():
    machine = Fsa(frozenset({0}), Alphabet(("a",)), 0, frozenset({0}), {(0, "a"): 0})
    dot = to_dot(machine)
    assert dot.count("doublecircle") == 1
    assert "__start -> 0" in dot


def test_dot_target_counts(target):
    dot = to_dot(target)
    node_lines = [ln for ln in dot.splitlines() if "shape=circle" in ln or "shape=doublecircle" in ln]
    edge_lines = [ln for ln in dot.splitlines() if "->" in ln and "label" in ln]
    assert len(node_lines) == 3
    assert len(edge_lines) == 9


def test_dot_is_deterministic(target):
    assert to_dot(target) == to_dot(target)


def test_fsa_text_round_trip(target):
    canon = canonical_form(target)
    text = fsa_to_text(canon)
    assert text.startswith("fsa v1\nalphabet: t p s\nstart: 0\naccept: 0 1\n")
    assert fsa_from_text(text) == canon
    assert fsa_to_text(fsa_from_text(text)) == text


def test_from_partial_adds_sink():
    machine = Fsa.from_partial({0, 1}, TPS, 0, {1}, {(0, "t"): 1})
    assert machine.accepts("t")
    assert not machine.accepts("tp")
    assert len(machine.states) == 3


def test_complement_swaps_membership(target):
    comp = target.complement()
    for word in all_words(TPS, 4):
        assert comp.accepts(word) != target.accepts(word)
