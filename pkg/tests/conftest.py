"""Shared fixtures: reference machines, small graphs, random-machine makers."""

import itertools
import random

import pytest

from ruleminer.fsa import TPS, Alphabet, Fsa, minimize, security_target


@pytest.fixture
def target() -> Fsa:
    return security_target()


def all_words(alphabet: Alphabet, max_len: int, min_len: int = 0):
    """Every word with min_len <= length <= max_len, in length-lex order."""
    for n in range(min_len, max_len + 1):
        for combo in itertools.product(alphabet.symbols, repeat=n):
            yield "".join(combo)


def random_machine(
    rng: random.Random,
    alphabet: Alphabet = TPS,
    min_states: int = 2,
    max_states: int = 4,
    require_nonempty_language: bool = True,
    require_nonempty_complement: bool = False,
) -> Fsa:
    """Random complete DFA, minimized, with the state count in range.

    Draws until the minimized machine satisfies the constraints, so tests
    never have to special-case empty or trivial languages.
    """
    while True:
        n = rng.randint(min_states, max_states + 2)
        states = frozenset(range(n))
        transitions = {
            (q, a): rng.randrange(n) for q in states for a in alphabet
        }
        accepting = frozenset(q for q in states if rng.random() < 0.5)
        machine = minimize(Fsa(states, alphabet, 0, accepting, transitions))
        if not min_states <= len(machine.states) <= max_states:
            continue
        if require_nonempty_language and machine.is_empty():
            continue
        if require_nonempty_complement and machine.complement().is_empty():
            continue
        return machine


def no_three_zeros() -> Fsa:
    """Binary-alphabet machine accepting strings without three consecutive
    zeros; states count the current run of trailing zeros."""
    alphabet = Alphabet(("0", "1"))
    t = {}
    for q in (0, 1, 2):
        t[(q, "1")] = 0
        t[(q, "0")] = q + 1
    t[(3, "0")] = 3
    t[(3, "1")] = 3
    return Fsa(frozenset({0, 1, 2, 3}), alphabet, 0, frozenset({0, 1, 2}), t)
