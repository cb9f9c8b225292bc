"""Sampled edit-distance dissimilarity between regular languages.

The directed traveling cost from language A to language B is the maximum,
over words of A, of the cheapest edit count into B divided by the word
length; the dissimilarity is the larger of the two directions. Exact
distances between two infinite languages are intractable, so both
directions are lower-bounded by sampling unique words from each language.
Zero means the languages agree on every sampled word; the value is not
comparable across different target languages.

Ratios are kept as exact fractions so argmax/argmin decisions never hinge
on floating-point ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .dataset import sample_language_words
from .fsa import Fsa
from .seeding import derive_seed

Ratio = Fraction | float  # exact fraction, or math.inf for empty languages


class ExceedsMaxEdits(ValueError):
    """Brute-force search exhausted its edit budget without acceptance."""


@dataclass(frozen=True)
class EditResult:
    word: str
    distance: int
    ratio: Fraction


@dataclass(frozen=True)
class DirectedDelta:
    """Sampled one-direction traveling cost with its witness word."""

    ratio: Ratio
    witness: str
    sample_count: int


@dataclass(frozen=True)
class DissimilarityReport:
    delta_ab: Ratio
    delta_ba: Ratio
    delta: Ratio
    witness_ab: str
    witness_ba: str
    samples_ab: int
    samples_ba: int
    requested_samples: int
    shortfall: bool
    seed: int
    min_len: int
    max_len: int


@dataclass(frozen=True)
class ComparisonMatrix:
    values: tuple[tuple[Ratio, ...], ...]
    row_means: tuple[Ratio, ...]


# ---------------------------------------------------------------------------
# Word-to-language edit distance


def _insertion_distances(lang: Fsa) -> dict[int, dict[int, float]]:
    """All-pairs minimum insertion counts between states (unit-cost BFS
    over the transition graph)."""
    adjacency: dict[int, set[int]] = {q: set() for q in lang.states}
    for (q, _a), nxt in lang.transitions.items():
        adjacency[q].add(nxt)
    table: dict[int, dict[int, float]] = {}
    for source in lang.states:
        dist = {q: math.inf for q in lang.states}
        dist[source] = 0.0
        frontier = [source]
        while frontier:
            nxt_frontier = []
            for q in frontier:
                for target in adjacency[q]:
                    if dist[target] == math.inf:
                        dist[target] = dist[q] + 1
                        nxt_frontier.append(target)
            frontier = nxt_frontier
        table[source] = dist
    return table


def edit_distance(word: str, lang: Fsa) -> int | float:
    """Minimum number of single-symbol insertions, deletions and
    substitutions turning the word into some accepted word.

    Dynamic programming over (word prefix, automaton state), with a
    shortest-path closure per column to account for insertions. Returns
    ``math.inf`` when the language is empty.
    """
    if not word:
        raise ValueError("edit distance is defined for non-empty words only")
    lang.alphabet.check_word(word)
    states = sorted(lang.states)
    ins = _insertion_distances(lang)

    def closure(col: dict[int, float]) -> dict[int, float]:
        return {
            q: min(col[p] + ins[p][q] for p in states)
            for q in states
        }

    col = closure({q: (0.0 if q == lang.start else math.inf) for q in states})
    for symbol in word:
        nxt = {q: col[q] + 1.0 for q in states}  # delete the symbol
        for q in states:
            base = col[q]
            if base == math.inf:
                continue
            for a in lang.alphabet:
                target = lang.transitions[(q, a)]
                cost = base + (0.0 if a == symbol else 1.0)
                if cost < nxt[target]:
                    nxt[target] = cost
        col = closure(nxt)
    best = min((col[q] for q in lang.accepting), default=math.inf)
    return int(best) if best != math.inf else math.inf


def edit_result(word: str, lang: Fsa) -> EditResult:
    d = edit_distance(word, lang)
    if d == math.inf:
        raise ValueError("edit ratio undefined against an empty language")
    return EditResult(word, d, Fraction(d, len(word)))


def edit_oracle_bruteforce(word: str, lang: Fsa, max_d: int = 4) -> int:
    """Independent check of edit_distance: breadth-first search over the
    single-edit neighborhood graph, one level per edit, accepting the first
    level containing a member of the language."""
    if len(word) > 6 or len(lang.alphabet) > 3 or max_d > 4:
        raise ValueError("brute-force oracle is limited to tiny instances")
    symbols = lang.alphabet.symbols
    frontier = {word}
    seen = set(frontier)
    for d in range(max_d + 1):
        if any(lang.accepts(w) for w in sorted(frontier)):
            return d
        grown: set[str] = set()
        for w in frontier:
            for i in range(len(w)):
                grown.add(w[:i] + w[i + 1:])  # deletion
                for a in symbols:
                    grown.add(w[:i] + a + w[i + 1:])  # substitution
            for i in range(len(w) + 1):
                for a in symbols:
                    grown.add(w[:i] + a + w[i:])  # insertion
        frontier = grown - seen
        seen |= frontier
    raise ExceedsMaxEdits(f"no accepted word within {max_d} edits of {word!r}")


# ---------------------------------------------------------------------------
# Sampled directed and symmetric dissimilarity


def delta_hat(samples: list[str], lang_b: Fsa) -> DirectedDelta:
    """Max edit ratio over sampled words; the witness is the first word
    attaining it. Grows monotonically as samples are added."""
    if not samples:
        raise ValueError("need at least one sampled word")
    best: Ratio = Fraction(0)
    witness = samples[0]
    for w in samples:
        if not w:
            raise ValueError("sampled words must be non-empty")
        d = edit_distance(w, lang_b)
        ratio: Ratio = math.inf if d == math.inf else Fraction(d, len(w))
        if ratio > best:
            best, witness = ratio, w
    return DirectedDelta(best, witness, len(samples))


def dissimilarity(
    a: Fsa,
    b: Fsa,
    n_samples: int = 10000,
    seed: int = 0,
    min_len: int = 1,
    max_len: int = 30,
) -> DissimilarityReport:
    """Sampled dissimilarity between two machine languages.

    Unique words are drawn from each language separately; a finite language
    smaller than the request contributes everything it has (recorded as a
    shortfall). An empty language on either side reports infinite
    dissimilarity instead of raising.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if a.is_empty() or b.is_empty():
        return DissimilarityReport(
            math.inf, math.inf, math.inf, "", "", 0, 0,
            n_samples, True, seed, min_len, max_len,
        )
    samples_a = sample_language_words(
        a, n_samples, min_len, max_len, derive_seed(seed, "samples-a"),
        allow_shortfall=True)
    samples_b = sample_language_words(
        b, n_samples, min_len, max_len, derive_seed(seed, "samples-b"),
        allow_shortfall=True)
    ab = delta_hat(samples_a, b)
    ba = delta_hat(samples_b, a)
    return DissimilarityReport(
        delta_ab=ab.ratio,
        delta_ba=ba.ratio,
        delta=max(ab.ratio, ba.ratio),
        witness_ab=ab.witness,
        witness_ba=ba.witness,
        samples_ab=ab.sample_count,
        samples_ba=ba.sample_count,
        requested_samples=n_samples,
        shortfall=ab.sample_count < n_samples or ba.sample_count < n_samples,
        seed=seed,
        min_len=min_len,
        max_len=max_len,
    )


def pairwise_matrix(
    machines: list[Fsa],
    n_samples: int = 10000,
    seed: int = 0,
    min_len: int = 1,
    max_len: int = 30,
) -> ComparisonMatrix:
    """Full dissimilarity matrix over candidate machines. Each machine is
    sampled once and the samples are reused across all pairings, so the
    matrix is symmetric with an exactly zero diagonal."""
    if len(machines) < 2:
        raise ValueError("need at least two machines to compare")
    samples: list[list[str] | None] = []
    for i, machine in enumerate(machines):
        if machine.is_empty():
            samples.append(None)
        else:
            samples.append(sample_language_words(
                machine, n_samples, min_len, max_len,
                derive_seed(seed, f"samples-{i}"), allow_shortfall=True))
    n = len(machines)
    directed: list[list[Ratio]] = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if samples[i] is None or machines[j].is_empty():
                directed[i][j] = math.inf
            else:
                directed[i][j] = delta_hat(samples[i], machines[j]).ratio
    values = tuple(
        tuple(max(directed[i][j], directed[j][i]) for j in range(n))
        for i in range(n)
    )
    row_means = tuple(
        math.inf if any(v == math.inf for v in row) else Fraction(sum(row), n)
        for row in values
    )
    return ComparisonMatrix(values, row_means)


def select_representative(matrix: ComparisonMatrix) -> int:
    """Index of the machine with the lowest mean dissimilarity to all
    others; ties break to the lowest index."""
    finite = [m for m in matrix.row_means if m != math.inf]
    if not finite:
        raise ValueError("every row is infinite; no representative exists")
    best = min(finite)
    return matrix.row_means.index(best)


# ---------------------------------------------------------------------------
# Serialization


REPORT_CSV_HEADER = (
    "delta_ab,delta_ba,delta,witness_ab,witness_ba,"
    "samples_ab,samples_ba,requested_samples,seed,min_len,max_len"
)


def _ratio_text(r: Ratio) -> str:
    if r == math.inf:
        return "inf"
    return f"{float(r):.6f}"


def report_csv_row(report: DissimilarityReport) -> str:
    return ",".join([
        _ratio_text(report.delta_ab),
        _ratio_text(report.delta_ba),
        _ratio_text(report.delta),
        report.witness_ab,
        report.witness_ba,
        str(report.samples_ab),
        str(report.samples_ba),
        str(report.requested_samples),
        str(report.seed),
        str(report.min_len),
        str(report.max_len),
    ])


def report_text(report: DissimilarityReport) -> str:
    lines = [
        f"delta A->B: {_ratio_text(report.delta_ab)} (witness {report.witness_ab!r})",
        f"delta B->A: {_ratio_text(report.delta_ba)} (witness {report.witness_ba!r})",
        f"dissimilarity: {_ratio_text(report.delta)}",
        f"samples: {report.samples_ab}/{report.samples_ba} "
        f"of {report.requested_samples} requested"
        + (" (shortfall)" if report.shortfall else ""),
        f"seed: {report.seed}  lengths: {report.min_len}..{report.max_len}",
    ]
    return "\n".join(lines) + "\n"


def matrix_csv(matrix: ComparisonMatrix) -> str:
    n = len(matrix.values)
    header = "machine," + ",".join(str(j) for j in range(n)) + ",row_mean"
    lines = [header]
    for i, row in enumerate(matrix.values):
        cells = ",".join(_ratio_text(v) for v in row)
        lines.append(f"{i},{cells},{_ratio_text(matrix.row_means[i])}")
    return "\n".join(lines) + "\n"
