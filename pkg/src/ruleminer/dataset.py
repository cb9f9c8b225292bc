"""Labeled path-string corpora.

Words are sampled from a reference machine (closed experimental setup) or
traced out of pre-built abstract state machine graphs (practical setup),
labeled by machine membership, rebalanced, split, and persisted in a
line-oriented text format.

Sampling is length-stratified and exact: a counting DP over the automaton
enumerates how many (non-)accepted words exist per length, a uniform index
into that count is unranked into a concrete word, and uniqueness is enforced
by index bookkeeping instead of rejection loops. The positive/negative ratio
is therefore hit exactly (within one example) whenever it is feasible at all.
"""

from __future__ import annotations

import heapq
import itertools
import random
from bisect import insort
from collections import deque
from dataclasses import dataclass

from .fsa import Alphabet, Fsa


class InfeasibleSampleError(ValueError):
    """The language cannot supply the requested number of unique words
    within the configured length bounds."""


class UnreachableEndError(ValueError):
    """The graph's end node cannot be reached from its start node."""


class DatasetFormatError(ValueError):
    """Malformed dataset or graph text file."""


@dataclass(frozen=True)
class LabeledString:
    """A non-empty path word tagged accept (secure) or reject."""

    word: str
    label: bool

    def __post_init__(self) -> None:
        if not self.word:
            raise ValueError("path words must be non-empty")


@dataclass
class Dataset:
    """Unique labeled words over one alphabet, plus the seed that made them."""

    alphabet: Alphabet
    examples: list[LabeledString]
    seed: int = 0

    def __post_init__(self) -> None:
        words = [ex.word for ex in self.examples]
        if len(set(words)) != len(words):
            raise ValueError("dataset words must be unique")
        for w in words:
            self.alphabet.check_word(w)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def words(self) -> list[str]:
        return [ex.word for ex in self.examples]

    def positive_fraction(self) -> float:
        if not self.examples:
            return 0.0
        return sum(ex.label for ex in self.examples) / len(self.examples)


@dataclass(frozen=True)
class AsmGraph:
    """Labeled directed multigraph abstraction of a program.

    Edges carry one alphabet symbol each; multi-edges and cycles are
    allowed. Paths from start to end spell the words of the corpus.
    """

    nodes: frozenset[int]
    edges: tuple[tuple[int, int, str], ...]
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start not in self.nodes or self.end not in self.nodes:
            raise ValueError("start and end must be declared nodes")
        for src, dst, _symbol in self.edges:
            if src not in self.nodes or dst not in self.nodes:
                raise ValueError(f"edge ({src}, {dst}) references undeclared node")

    def out_edges(self, node: int) -> list[tuple[int, tuple[int, int, str]]]:
        return [(i, e) for i, e in enumerate(self.edges) if e[0] == node]


@dataclass(frozen=True)
class SamplerConfig:
    count: int
    min_len: int = 1
    max_len: int = 20
    positive_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if not 0.0 < self.positive_ratio < 1.0:
            raise ValueError("positive_ratio must lie strictly between 0 and 1")


@dataclass
class MarkovAnnotation:
    """Per-state empirical symbol frequencies observed while running a
    corpus on a reference machine."""

    rows: dict[int, dict[str, float]]
    counts: dict[int, dict[str, int]]

    def underrepresented(self, threshold: float = 0.1) -> list[tuple[int, str, float]]:
        """Symbols whose outgoing probability at a visited state falls below
        the threshold (never-taken symbols count as probability zero)."""
        alphabet_symbols = sorted({s for row in self.counts.values() for s in row})
        flagged = []
        for state in sorted(self.rows):
            row = self.rows[state]
            for symbol in alphabet_symbols:
                prob = row.get(symbol, 0.0)
                if prob < threshold:
                    flagged.append((state, symbol, prob))
        return flagged


# ---------------------------------------------------------------------------
# Counting, ranking and unranking words of a regular language


class LanguageIndex:
    """Counting DP over a complete machine: how many accepted words of each
    length exist from each state, with rank/unrank between indices and
    words. Words of one length are ordered lexicographically by alphabet
    symbol order."""

    def __init__(self, fsa: Fsa, max_len: int):
        self.fsa = fsa
        self.max_len = max_len
        states = sorted(fsa.states)
        self._counts: list[dict[int, int]] = [
            {q: (1 if q in fsa.accepting else 0) for q in states}
        ]
        for _ in range(max_len):
            prev = self._counts[-1]
            self._counts.append(
                {q: sum(prev[fsa.transitions[(q, a)]] for a in fsa.alphabet) for q in states}
            )

    def count(self, length: int, state: int | None = None) -> int:
        if state is None:
            state = self.fsa.start
        return self._counts[length][state]

    def unrank(self, length: int, index: int) -> str:
        """The index-th accepted word of the given length (0-based)."""
        if not 0 <= index < self.count(length):
            raise IndexError(f"index {index} out of range for length {length}")
        state = self.fsa.start
        out = []
        for remaining in range(length, 0, -1):
            for a in self.fsa.alphabet:
                nxt = self.fsa.transitions[(state, a)]
                c = self._counts[remaining - 1][nxt]
                if index < c:
                    out.append(a)
                    state = nxt
                    break
                index -= c
        return "".join(out)

    def rank(self, word: str) -> int:
        """Inverse of unrank; the word must be accepted."""
        state = self.fsa.start
        index = 0
        for pos, symbol in enumerate(word):
            remaining = len(word) - pos - 1
            for a in self.fsa.alphabet:
                nxt = self.fsa.transitions[(state, a)]
                if a == symbol:
                    state = nxt
                    break
                index += self._counts[remaining][nxt]
        if state not in self.fsa.accepting:
            raise ValueError(f"word {word!r} is not in the language")
        return index


class _StratifiedSampler:
    """Draws unique accepted words: pick a length uniformly among lengths
    with remaining capacity, then a uniform unused rank within it."""

    def __init__(self, fsa: Fsa, min_len: int, max_len: int, rng: random.Random,
                 exclude: set[str] | None = None):
        self.index = LanguageIndex(fsa, max_len)
        self.rng = rng
        self.used: dict[int, list[int]] = {}
        self.capacity: dict[int, int] = {}
        for length in range(min_len, max_len + 1):
            total = self.index.count(length)
            if total > 0:
                self.capacity[length] = total
                self.used[length] = []
        for word in exclude or ():
            if min_len <= len(word) <= max_len and fsa.accepts(word):
                self._mark_used(len(word), self.index.rank(word))

    def _mark_used(self, length: int, rank: int) -> None:
        if rank not in self.used[length]:
            insort(self.used[length], rank)
            self.capacity[length] -= 1
            if self.capacity[length] == 0:
                del self.capacity[length]

    def remaining(self) -> int:
        return sum(self.capacity.values())

    def draw(self) -> str:
        if not self.capacity:
            raise InfeasibleSampleError("language exhausted within length bounds")
        length = self.rng.choice(sorted(self.capacity))
        offset = self.rng.randrange(self.capacity[length])
        rank = offset
        for u in self.used[length]:
            if u <= rank:
                rank += 1
            else:
                break
        self._mark_used(length, rank)
        return self.index.unrank(length, rank)


def sample_language_words(
    fsa: Fsa,
    count: int,
    min_len: int,
    max_len: int,
    seed: int,
    exclude: set[str] | None = None,
    allow_shortfall: bool = False,
) -> list[str]:
    """Up to ``count`` unique accepted words; raises on shortfall unless
    ``allow_shortfall`` (then the whole remaining language is returned)."""
    sampler = _StratifiedSampler(fsa, min_len, max_len, random.Random(seed), exclude)
    available = sampler.remaining()
    if available < count and not allow_shortfall:
        raise InfeasibleSampleError(
            f"language holds {available} unique words of length {min_len}..{max_len}, "
            f"requested {count}"
        )
    return [sampler.draw() for _ in range(min(count, available))]


def sample_strings(target: Fsa, cfg: SamplerConfig, exclude: set[str] | None = None) -> Dataset:
    """Sample cfg.count unique words, labeled by target membership, with the
    positive fraction within one example of cfg.positive_ratio."""
    n_pos = int(cfg.count * cfg.positive_ratio + 0.5)
    n_neg = cfg.count - n_pos
    rng = random.Random(cfg.seed)
    positives = sample_language_words(
        target, n_pos, cfg.min_len, cfg.max_len, rng.randrange(2**63), exclude)
    negatives = sample_language_words(
        target.complement(), n_neg, cfg.min_len, cfg.max_len, rng.randrange(2**63), exclude)
    examples = [LabeledString(w, True) for w in positives]
    examples += [LabeledString(w, False) for w in negatives]
    rng.shuffle(examples)
    return Dataset(target.alphabet, examples, cfg.seed)


def sample_walk(
    target: Fsa,
    state_symbol_probs: dict[int, dict[str, float]],
    count: int,
    min_len: int,
    max_len: int,
    seed: int,
) -> Dataset:
    """Generate unique words by random walks on the target machine with the
    given per-state symbol distributions (states missing from the map walk
    uniformly). Used to manufacture corpora with controlled edge bias."""
    rng = random.Random(seed)
    seen: set[str] = set()
    examples: list[LabeledString] = []
    attempts = 0
    max_attempts = 200 * count
    while len(examples) < count:
        attempts += 1
        if attempts > max_attempts:
            raise InfeasibleSampleError(
                f"could not find {count} unique walk words in {max_attempts} attempts")
        length = rng.randint(min_len, max_len)
        state = target.start
        word = []
        for _ in range(length):
            probs = state_symbol_probs.get(state)
            if probs is None:
                symbol = rng.choice(target.alphabet.symbols)
            else:
                symbol = rng.choices(sorted(probs), weights=[probs[a] for a in sorted(probs)])[0]
            word.append(symbol)
            state = target.transitions[(state, symbol)]
        w = "".join(word)
        if w in seen:
            continue
        seen.add(w)
        examples.append(LabeledString(w, target.accepts(w)))
    return Dataset(target.alphabet, examples, seed)


# ---------------------------------------------------------------------------
# Tracing abstract state machine graphs


def trace_asm(asm: AsmGraph, k: int, labeler: Fsa) -> Dataset:
    """Enumerate up to k shortest start-to-end paths (edge count first, then
    lexicographic by alphabet symbol order) and label their words.

    Paths may revisit nodes, but any single edge is used at most twice per
    path, which bounds cycle unrolling. Duplicate words are dropped.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    reachable = {asm.start}
    frontier = deque([asm.start])
    while frontier:
        node = frontier.popleft()
        for _, (_, dst, _) in asm.out_edges(node):
            if dst not in reachable:
                reachable.add(dst)
                frontier.append(dst)
    if asm.end not in reachable:
        raise UnreachableEndError(f"end node {asm.end} unreachable from start {asm.start}")

    out_by_node: dict[int, list[tuple[int, tuple[int, int, str]]]] = {
        node: asm.out_edges(node) for node in asm.nodes
    }
    symbol_key = {a: i for i, a in enumerate(labeler.alphabet)}
    counter = itertools.count()
    start_uses = (0,) * len(asm.edges)
    heap: list[tuple[int, tuple[int, ...], int, int, tuple[int, ...]]] = [
        (0, (), next(counter), asm.start, start_uses)
    ]
    words: list[str] = []
    emitted = 0
    while heap and emitted < k:
        length, key, _, node, uses = heapq.heappop(heap)
        if node == asm.end and length > 0:
            words.append("".join(labeler.alphabet.symbols[i] for i in key))
            emitted += 1
        for edge_idx, (_, dst, symbol) in out_by_node[node]:
            if uses[edge_idx] >= 2:
                continue
            if symbol not in symbol_key:
                raise ValueError(f"edge symbol {symbol!r} not in labeler alphabet")
            new_uses = uses[:edge_idx] + (uses[edge_idx] + 1,) + uses[edge_idx + 1:]
            heapq.heappush(
                heap,
                (length + 1, key + (symbol_key[symbol],), next(counter), dst, new_uses),
            )
    unique: dict[str, bool] = {}
    for w in words:
        if w not in unique:
            unique[w] = labeler.accepts(w)
    examples = [LabeledString(w, lbl) for w, lbl in unique.items()]
    return Dataset(labeler.alphabet, examples, 0)


def estimate_markov(target: Fsa, corpus: Dataset) -> MarkovAnnotation:
    """Empirical per-state outgoing symbol frequencies over all runs of all
    corpus words on the target machine."""
    counts: dict[int, dict[str, int]] = {}
    for ex in corpus:
        state = target.start
        for symbol in ex.word:
            row = counts.setdefault(state, {})
            row[symbol] = row.get(symbol, 0) + 1
            state = target.transitions[(state, symbol)]
    rows = {
        state: {symbol: n / sum(row.values()) for symbol, n in row.items()}
        for state, row in counts.items()
    }
    return MarkovAnnotation(rows, counts)


# ---------------------------------------------------------------------------
# Splitting and rebalancing


def split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split into disjoint train/test datasets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    order = list(d.examples)
    random.Random(seed).shuffle(order)
    n_train = int(len(order) * train_fraction + 0.5)
    return (
        Dataset(d.alphabet, order[:n_train], seed),
        Dataset(d.alphabet, order[n_train:], seed),
    )


def rebalance(d: Dataset, positive_ratio: float, seed: int) -> Dataset:
    """Largest subset of d whose positive fraction hits positive_ratio
    within one example; the over-represented class is down-sampled."""
    if not 0.0 < positive_ratio < 1.0:
        raise ValueError("positive_ratio must lie strictly between 0 and 1")
    rng = random.Random(seed)
    pos = [ex for ex in d if ex.label]
    neg = [ex for ex in d if not ex.label]
    if not pos or not neg:
        raise ValueError("rebalancing needs at least one example of each label")
    if len(pos) / len(d) < positive_ratio:
        total = int(len(pos) / positive_ratio)
        keep_pos, keep_neg = pos, rng.sample(neg, total - len(pos))
    else:
        total = int(len(neg) / (1.0 - positive_ratio))
        keep_pos, keep_neg = rng.sample(pos, total - len(neg)), neg
    examples = keep_pos + keep_neg
    rng.shuffle(examples)
    return Dataset(d.alphabet, examples, seed)


# ---------------------------------------------------------------------------
# Text formats


def dataset_to_text(d: Dataset) -> str:
    header = f"dataset v1 alphabet: {' '.join(d.alphabet)} seed: {d.seed}"
    lines = [header] + [f"{int(ex.label)} {ex.word}" for ex in d.examples]
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> Dataset:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dataset v1 alphabet:"):
        raise DatasetFormatError("expected 'dataset v1 alphabet: ...' header")
    try:
        rest = lines[0].removeprefix("dataset v1 alphabet:")
        symbols_text, seed_text = rest.split("seed:")
        alphabet = Alphabet(tuple(symbols_text.split()))
        seed = int(seed_text)
    except ValueError as exc:
        raise DatasetFormatError(f"malformed dataset header: {exc}") from exc
    examples = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2 or parts[0] not in ("0", "1"):
            raise DatasetFormatError(f"malformed record {ln!r}")
        examples.append(LabeledString(parts[1], parts[0] == "1"))
    return Dataset(alphabet, examples, seed)


def write_dataset(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_text(d))


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return dataset_from_text(fh.read())


def asm_to_text(asm: AsmGraph) -> str:
    lines = ["asm v1", f"start: {asm.start}", f"end: {asm.end}"]
    lines += [f"{src} {dst} {symbol}" for src, dst, symbol in asm.edges]
    return "\n".join(lines) + "\n"


def asm_from_text(text: str) -> AsmGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "asm v1":
        raise DatasetFormatError("expected 'asm v1' header")
    try:
        start = int(lines[1].removeprefix("start:"))
        end = int(lines[2].removeprefix("end:"))
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError(f"malformed graph header: {exc}") from exc
    edges = []
    nodes = {start, end}
    for ln in lines[3:]:
        parts = ln.split()
        if len(parts) != 3:
            raise DatasetFormatError(f"malformed edge line {ln!r}")
        src, dst, symbol = int(parts[0]), int(parts[1]), parts[2]
        edges.append((src, dst, symbol))
        nodes.add(src)
        nodes.add(dst)
    return AsmGraph(frozenset(nodes), tuple(edges), start, end)


def write_asm(asm: AsmGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(asm_to_text(asm))


def read_asm(path) -> AsmGraph:
    with open(path, encoding="utf-8") as fh:
        return asm_from_text(fh.read())
