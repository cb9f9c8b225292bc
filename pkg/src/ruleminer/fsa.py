"""Finite automata over small single-character alphabets.

Deterministic machines here are always complete (a missing transition is
routed to an explicit non-accepting sink), which keeps distance computations
and product constructions total. A small regex compiler (symbols,
concatenation, ``|``, ``*``, parentheses) builds target machines via
Thompson construction, subset construction and partition-refinement
minimization.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass


class RegexParseError(ValueError):
    """Malformed pattern or symbol outside the alphabet."""


class UnknownSymbolError(ValueError):
    """Word contains a symbol the machine's alphabet does not define."""


class FsaFormatError(ValueError):
    """Malformed machine text file."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of single-character input symbols.

    The ordering is significant: it fixes one-hot encoding indices, the
    lexicographic order used for path tie-breaking, and the symbol order of
    canonical state numbering.
    """

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.symbols) < 1:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in alphabet: {self.symbols}")
        for s in self.symbols:
            if len(s) != 1:
                raise ValueError(f"alphabet symbols must be single characters, got {s!r}")

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise UnknownSymbolError(f"symbol {symbol!r} not in alphabet {self.symbols}") from None

    def check_word(self, word: str) -> None:
        for c in word:
            if c not in self.symbols:
                raise UnknownSymbolError(f"symbol {c!r} not in alphabet {self.symbols}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.symbols


TPS = Alphabet(("t", "p", "s"))


@dataclass(frozen=True)
class Fsa:
    """Complete deterministic finite automaton with integer states.

    Immutable after construction; safe to share across workers. The
    transition map must be total over ``states x alphabet``.
    """

    states: frozenset[int]
    alphabet: Alphabet
    start: int
    accepting: frozenset[int]
    transitions: dict[tuple[int, str], int]

    def __post_init__(self) -> None:
        if self.start not in self.states:
            raise ValueError(f"start state {self.start} not declared")
        if not self.accepting <= self.states:
            raise ValueError("accepting states must be a subset of states")
        for state, symbol in itertools.product(self.states, self.alphabet):
            target = self.transitions.get((state, symbol))
            if target is None:
                raise ValueError(f"transition map not total: missing ({state}, {symbol!r})")
            if target not in self.states:
                raise ValueError(f"transition target {target} not declared")
        if len(self.transitions) != len(self.states) * len(self.alphabet):
            raise ValueError("transition map contains pairs outside states x alphabet")

    @classmethod
    def from_partial(
        cls,
        states: set[int],
        alphabet: Alphabet,
        start: int,
        accepting: set[int],
        transitions: dict[tuple[int, str], int],
    ) -> "Fsa":
        """Build a complete machine, adding a fresh non-accepting sink for
        any missing transition."""
        states = set(states)
        transitions = dict(transitions)
        missing = [
            (q, a) for q in states for a in alphabet if (q, a) not in transitions
        ]
        if missing:
            sink = max(states) + 1
            states.add(sink)
            for q, a in missing:
                transitions[(q, a)] = sink
            for a in alphabet:
                transitions[(sink, a)] = sink
        return cls(frozenset(states), alphabet, start, frozenset(accepting), transitions)

    def step(self, state: int, symbol: str) -> int:
        try:
            return self.transitions[(state, symbol)]
        except KeyError:
            raise UnknownSymbolError(f"symbol {symbol!r} not in alphabet {self.alphabet.symbols}") from None

    def run(self, word: str) -> list[int]:
        """State sequence of the unique run, including the start state."""
        path = [self.start]
        for symbol in word:
            path.append(self.step(path[-1], symbol))
        return path

    def accepts(self, word: str) -> bool:
        state = self.start
        for symbol in word:
            state = self.step(state, symbol)
        return state in self.accepting

    def complement(self) -> "Fsa":
        return Fsa(
            self.states, self.alphabet, self.start,
            self.states - self.accepting, self.transitions,
        )

    def reachable_states(self) -> frozenset[int]:
        seen = {self.start}
        frontier = deque([self.start])
        while frontier:
            q = frontier.popleft()
            for a in self.alphabet:
                nxt = self.transitions[(q, a)]
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return frozenset(seen)

    def is_empty(self) -> bool:
        """True iff the machine accepts no word at all."""
        return not (self.reachable_states() & self.accepting)


@dataclass(frozen=True)
class Nfa:
    """Nondeterministic automaton; epsilon edges use ``None`` as the symbol.

    Intermediate of regex compilation, not part of the public pipeline.
    """

    states: frozenset[int]
    alphabet: Alphabet
    starts: frozenset[int]
    accepting: frozenset[int]
    transitions: dict[tuple[int, str | None], frozenset[int]]

    def __post_init__(self) -> None:
        if not self.starts <= self.states or not self.accepting <= self.states:
            raise ValueError("start/accepting states must be declared")
        for (state, _symbol), targets in self.transitions.items():
            if state not in self.states or not targets <= self.states:
                raise ValueError("transition endpoints must be declared states")


def security_target() -> Fsa:
    """The three-state reference machine of the permission-check analysis.

    A path over ``t``/``p``/``s`` is accepted unless a security call ``s``
    occurs before the first permission check ``p``; equivalently the
    language of ``t*|t*p(t|p|s)*``. State 0 is the accepting start, state 1
    the accepting post-check region, state 2 the rejecting sink.
    """
    t = {}
    for a in "tps":
        t[(1, a)] = 1
        t[(2, a)] = 2
    t[(0, "t")] = 0
    t[(0, "p")] = 1
    t[(0, "s")] = 2
    return Fsa(frozenset({0, 1, 2}), TPS, 0, frozenset({0, 1}), t)


# The language of security_target(), written in the supported regex subset.
SECURITY_TARGET_PATTERN = "t*|t*p(t|p|s)*"


# ---------------------------------------------------------------------------
# Regex compilation: parse -> Thompson NFA -> subset construction -> minimize


def _parse_regex(pattern: str, alphabet: Alphabet):
    """Recursive-descent parser for the {symbol, concat, |, *, ()} subset.

    Returns an AST of tuples: ("sym", c) | ("eps",) | ("cat", l, r) |
    ("alt", l, r) | ("star", x).
    """
    pos = 0

    def peek() -> str | None:
        return pattern[pos] if pos < len(pattern) else None

    def parse_alt():
        nonlocal pos
        node = parse_cat()
        while peek() == "|":
            pos += 1
            node = ("alt", node, parse_cat())
        return node

    def parse_cat():
        nonlocal pos
        parts = []
        while peek() is not None and peek() not in "|)":
            parts.append(parse_rep())
        if not parts:
            return ("eps",)
        node = parts[0]
        for p in parts[1:]:
            node = ("cat", node, p)
        return node

    def parse_rep():
        nonlocal pos
        node = parse_atom()
        while peek() == "*":
            pos += 1
            node = ("star", node)
        return node

    def parse_atom():
        nonlocal pos
        c = peek()
        if c == "(":
            pos += 1
            node = parse_alt()
            if peek() != ")":
                raise RegexParseError(f"unbalanced parenthesis in {pattern!r}")
            pos += 1
            return node
        if c is None or c in "|)*":
            raise RegexParseError(f"unexpected {c!r} at position {pos} in {pattern!r}")
        if c not in alphabet:
            raise RegexParseError(f"symbol {c!r} not in alphabet {alphabet.symbols}")
        pos += 1
        return ("sym", c)

    ast = parse_alt()
    if pos != len(pattern):
        raise RegexParseError(f"trailing input at position {pos} in {pattern!r}")
    return ast


def _thompson(ast, alphabet: Alphabet) -> Nfa:
    """Classic Thompson construction; one fragment per AST node."""
    transitions: dict[tuple[int, str | None], set[int]] = {}
    counter = itertools.count()

    def fresh() -> int:
        return next(counter)

    def link(src: int, symbol: str | None, dst: int) -> None:
        transitions.setdefault((src, symbol), set()).add(dst)

    def build(node) -> tuple[int, int]:
        kind = node[0]
        if kind == "sym":
            s, f = fresh(), fresh()
            link(s, node[1], f)
            return s, f
        if kind == "eps":
            s, f = fresh(), fresh()
            link(s, None, f)
            return s, f
        if kind == "cat":
            s1, f1 = build(node[1])
            s2, f2 = build(node[2])
            link(f1, None, s2)
            return s1, f2
        if kind == "alt":
            s1, f1 = build(node[1])
            s2, f2 = build(node[2])
            s, f = fresh(), fresh()
            link(s, None, s1)
            link(s, None, s2)
            link(f1, None, f)
            link(f2, None, f)
            return s, f
        if kind == "star":
            s1, f1 = build(node[1])
            s, f = fresh(), fresh()
            link(s, None, s1)
            link(s, None, f)
            link(f1, None, s1)
            link(f1, None, f)
            return s, f
        raise AssertionError(f"unknown AST node {node!r}")

    start, final = build(ast)
    states = frozenset(range(next(counter)))
    return Nfa(
        states, alphabet, frozenset({start}), frozenset({final}),
        {k: frozenset(v) for k, v in transitions.items()},
    )


def _epsilon_closure(nfa: Nfa, states: frozenset[int]) -> frozenset[int]:
    seen = set(states)
    frontier = deque(states)
    while frontier:
        q = frontier.popleft()
        for nxt in nfa.transitions.get((q, None), ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return frozenset(seen)


def determinize(nfa: Nfa) -> Fsa:
    """Subset construction. The result is complete (the empty subset is the
    sink), minimized and canonically numbered."""
    start = _epsilon_closure(nfa, nfa.starts)
    index: dict[frozenset[int], int] = {start: 0}
    order = [start]
    transitions: dict[tuple[int, str], int] = {}
    frontier = deque([start])
    while frontier:
        subset = frontier.popleft()
        for a in nfa.alphabet:
            moved = frozenset().union(
                *(nfa.transitions.get((q, a), frozenset()) for q in subset)
            ) if subset else frozenset()
            target = _epsilon_closure(nfa, moved)
            if target not in index:
                index[target] = len(order)
                order.append(target)
                frontier.append(target)
            transitions[(index[subset], a)] = index[target]
    accepting = frozenset(
        index[s] for s in order if s & nfa.accepting
    )
    dfa = Fsa(frozenset(range(len(order))), nfa.alphabet, 0, accepting, transitions)
    return minimize(dfa)


def minimize(fsa: Fsa) -> Fsa:
    """Language-equivalent machine with the minimum number of states.

    Moore partition refinement after dropping unreachable states; the
    result is canonically numbered (BFS order from the start state).
    """
    reachable = sorted(fsa.reachable_states())
    block: dict[int, int] = {q: (1 if q in fsa.accepting else 0) for q in reachable}
    while True:
        signatures = {
            q: (block[q],) + tuple(block[fsa.transitions[(q, a)]] for a in fsa.alphabet)
            for q in reachable
        }
        relabel: dict[tuple, int] = {}
        new_block = {}
        for q in reachable:
            sig = signatures[q]
            if sig not in relabel:
                relabel[sig] = len(relabel)
            new_block[q] = relabel[sig]
        stable = len(set(new_block.values())) == len(set(block.values()))
        block = new_block  # signature labels are dense 0..k-1
        if stable:
            break
    n_blocks = len(set(block.values()))
    transitions = {}
    accepting = set()
    for q in reachable:
        b = block[q]
        if q in fsa.accepting:
            accepting.add(b)
        for a in fsa.alphabet:
            transitions[(b, a)] = block[fsa.transitions[(q, a)]]
    merged = Fsa(
        frozenset(range(n_blocks)), fsa.alphabet, block[fsa.start],
        frozenset(accepting), transitions,
    )
    return canonical_form(merged)


def canonical_form(fsa: Fsa) -> Fsa:
    """Renumber states by BFS discovery order (start first, edges explored
    in alphabet order). Unreachable states are dropped. Two minimized
    machines are isomorphic iff their canonical forms are equal."""
    relabel = {fsa.start: 0}
    order = [fsa.start]
    frontier = deque([fsa.start])
    while frontier:
        q = frontier.popleft()
        for a in fsa.alphabet:
            nxt = fsa.transitions[(q, a)]
            if nxt not in relabel:
                relabel[nxt] = len(order)
                order.append(nxt)
                frontier.append(nxt)
    transitions = {
        (relabel[q], a): relabel[fsa.transitions[(q, a)]]
        for q in order for a in fsa.alphabet
    }
    return Fsa(
        frozenset(range(len(order))), fsa.alphabet, 0,
        frozenset(relabel[q] for q in fsa.accepting if q in relabel),
        transitions,
    )


def isomorphic(a: Fsa, b: Fsa) -> bool:
    """Structural equality up to state renaming. Expects complete, minimized
    machines; on those it coincides with language equality."""
    return a.alphabet == b.alphabet and canonical_form(a) == canonical_form(b)


def regex_to_fsa(pattern: str, alphabet: Alphabet) -> Fsa:
    """Compile a pattern over the {symbol, concat, |, *, ()} subset into a
    complete minimized deterministic machine."""
    return determinize(_thompson(_parse_regex(pattern, alphabet), alphabet))


# ---------------------------------------------------------------------------
# DOT export and the line-oriented machine file format


def to_dot(fsa: Fsa, name: str = "fsa") -> str:
    """GraphViz text: accepting states double-circled, start marked by an
    arrow from a point node, one edge per (state, symbol). Output ordering
    is deterministic, so equal machines produce byte-identical text."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point label=""];']
    for q in sorted(fsa.states):
        shape = "doublecircle" if q in fsa.accepting else "circle"
        lines.append(f"  {q} [shape={shape} label=\"{q}\"];")
    lines.append(f"  __start -> {fsa.start};")
    for q in sorted(fsa.states):
        for a in fsa.alphabet:
            lines.append(f"  {q} -> {fsa.transitions[(q, a)]} [label=\"{a}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def fsa_to_text(fsa: Fsa) -> str:
    lines = [
        "fsa v1",
        "alphabet: " + " ".join(fsa.alphabet),
        f"start: {fsa.start}",
        "accept: " + " ".join(str(q) for q in sorted(fsa.accepting)),
    ]
    for q in sorted(fsa.states):
        for a in fsa.alphabet:
            lines.append(f"{q} {a} {fsa.transitions[(q, a)]}")
    return "\n".join(lines) + "\n"


def fsa_from_text(text: str) -> Fsa:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "fsa v1":
        raise FsaFormatError("expected 'fsa v1' header")
    try:
        alphabet = Alphabet(tuple(lines[1].removeprefix("alphabet:").split()))
        start = int(lines[2].removeprefix("start:"))
        accept_text = lines[3].removeprefix("accept:").split()
        accepting = frozenset(int(q) for q in accept_text)
    except (IndexError, ValueError) as exc:
        raise FsaFormatError(f"malformed machine header: {exc}") from exc
    transitions: dict[tuple[int, str], int] = {}
    states: set[int] = {start} | set(accepting)
    for ln in lines[4:]:
        parts = ln.split()
        if len(parts) != 3:
            raise FsaFormatError(f"malformed transition line {ln!r}")
        src, symbol, dst = int(parts[0]), parts[1], int(parts[2])
        if symbol not in alphabet:
            raise FsaFormatError(f"unknown symbol {symbol!r} in transition {ln!r}")
        transitions[(src, symbol)] = dst
        states.add(src)
        states.add(dst)
    return Fsa(frozenset(states), alphabet, start, accepting, transitions)


def write_fsa(fsa: Fsa, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(fsa_to_text(fsa))


def read_fsa(path) -> Fsa:
    with open(path, encoding="utf-8") as fh:
        return fsa_from_text(fh.read())
