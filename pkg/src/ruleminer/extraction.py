"""State-machine extraction from recorded hidden-state traces.

The extractor starts from a single quantizer region covering the whole
hidden-state space, builds a substochastic sequential machine by counting
(region, input) -> (next region, output) step statistics over all traces,
and repeatedly splits the region of the most entropic machine state until
every populated cell is deterministic (or an iteration budget runs out).
Behaviorally identical states are merged after every rebuild, and the final
machine projects onto a complete deterministic automaton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dataset import Dataset
from .fsa import Alphabet, Fsa
from .rnn import TraceRecord


class UnsplittableRegionError(RuntimeError):
    """No split of the victim region can separate its observed outcomes,
    even with the geometric fallback."""


class DeterministicSsmError(ValueError):
    """Split-state selection was asked for on a machine with no entropy."""


class NondeterministicMachineError(ValueError):
    """Projection to an automaton requires a deterministic machine unless
    the caller forces a majority-outcome projection."""


class IrreconcilableCellError(ValueError):
    """A forced projection hit a cell whose top outcomes tie exactly."""


@dataclass(frozen=True)
class ExtractionConfig:
    max_iterations: int = 50
    output_threshold: float = 0.5
    entropy_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.entropy_tolerance <= 0:
            raise ValueError("entropy_tolerance must be positive")


# ---------------------------------------------------------------------------
# Quantizer: a tree of nearest-centroid tests mapping vectors to region ids


class _TreeNode:
    __slots__ = ("centroids", "children", "state")

    def __init__(self, centroids=None, children=None, state=-1):
        self.centroids = centroids  # (k, N) array, None for leaves
        self.children = children or []
        self.state = state  # leaf id, dense after reindexing

    def clone(self) -> "_TreeNode":
        if self.centroids is None:
            return _TreeNode(state=self.state)
        return _TreeNode(self.centroids.copy(), [c.clone() for c in self.children])


class QuantizerTree:
    """Total map from hidden vectors to dense region ids 0..k-1.

    Lookup descends to the nearest centroid at every internal node (ties go
    to the lowest child index). Splits replace one leaf by an internal node
    and renumber leaves in depth-first order.
    """

    def __init__(self, root: _TreeNode | None = None):
        self.root = root or _TreeNode()
        self._leaves: list[_TreeNode] = []
        self._reindex()

    def _reindex(self) -> None:
        self._leaves = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.centroids is None:
                node.state = len(self._leaves)
                self._leaves.append(node)
            else:
                stack.extend(reversed(node.children))

    @property
    def n_states(self) -> int:
        return len(self._leaves)

    def state_of(self, vector: np.ndarray) -> int:
        return int(self.states_of(vector.reshape(1, -1))[0])

    def states_of(self, vectors: np.ndarray) -> np.ndarray:
        """Region ids for a (M, N) batch of vectors."""
        out = np.empty(len(vectors), dtype=np.int64)

        def descend(node: _TreeNode, idx: np.ndarray) -> None:
            if node.centroids is None:
                out[idx] = node.state
                return
            diffs = vectors[idx][:, None, :] - node.centroids[None, :, :]
            nearest = np.argmin((diffs * diffs).sum(axis=2), axis=1)
            for child_idx, child in enumerate(node.children):
                sub = idx[nearest == child_idx]
                if len(sub):
                    descend(child, sub)

        descend(self.root, np.arange(len(vectors)))
        return out

    def replace_leaf(self, leaf_id: int, centroids: np.ndarray) -> "QuantizerTree":
        """New tree where the leaf becomes an internal node with one fresh
        leaf child per centroid."""
        new_root = self.root.clone()
        tree = QuantizerTree(new_root)
        victim = tree._leaves[leaf_id]
        victim.centroids = centroids.copy()
        victim.children = [_TreeNode() for _ in range(len(centroids))]
        victim.state = -1
        tree._reindex()
        return tree


# ---------------------------------------------------------------------------
# Substochastic sequential machine


@dataclass
class Ssm:
    """Step statistics over (state, input) cells.

    ``counts[(state, symbol)]`` maps observed (next state, output) pairs to
    their frequencies; ``leaf_state`` maps quantizer region ids to machine
    state ids (the identity until states are merged).
    """

    n_states: int
    alphabet: Alphabet
    counts: dict[tuple[int, str], dict[tuple[int, bool], int]]
    leaf_state: tuple[int, ...]

    def cell_distribution(self, state: int, symbol: str) -> dict[tuple[int, bool], Fraction]:
        cell = self.counts[(state, symbol)]
        total = sum(cell.values())
        return {outcome: Fraction(c, total) for outcome, c in cell.items()}

    def cell_entropy(self, state: int, symbol: str) -> float:
        cell = self.counts.get((state, symbol))
        if not cell:
            return 0.0
        total = sum(cell.values())
        return -sum((c / total) * math.log2(c / total) for c in cell.values())

    def state_entropy(self, state: int) -> float:
        return sum(self.cell_entropy(state, a) for a in self.alphabet)

    def total_entropy(self) -> float:
        return sum(self.state_entropy(q) for q in range(self.n_states))

    def is_deterministic(self, tolerance: float = 1e-9) -> bool:
        return all(self.state_entropy(q) <= tolerance for q in range(self.n_states))

    def landing_votes(self) -> dict[int, list[int]]:
        """Per state: [reject landings, accept landings] over all steps."""
        votes: dict[int, list[int]] = {q: [0, 0] for q in range(self.n_states)}
        for cell in self.counts.values():
            for (next_state, output), count in cell.items():
                votes[next_state][int(output)] += count
        return votes


@dataclass
class ExtractedMachine:
    ssm: Ssm
    quantizer: QuantizerTree
    initial_state: int
    deterministic: bool
    iterations: int
    entropy_history: list[float] = field(default_factory=list)


def _trace_regions(traces: list[TraceRecord], quantizer: QuantizerTree) -> list[np.ndarray]:
    """Quantize every hidden vector (initial state included) of every trace
    in one batch; returns per-trace region-id sequences."""
    vectors = []
    offsets = []
    pos = 0
    for trace in traces:
        vectors.append(trace.initial_hidden)
        vectors.extend(h for _, h, _ in trace.steps)
        offsets.append((pos, pos + 1 + len(trace.steps)))
        pos += 1 + len(trace.steps)
    states = quantizer.states_of(np.asarray(vectors))
    return [states[a:b] for a, b in offsets]


def build_ssm(traces: list[TraceRecord], quantizer: QuantizerTree,
              output_threshold: float = 0.5,
              alphabet: Alphabet | None = None) -> Ssm:
    """Accumulate step counts over every consecutive step of every trace.
    The step output symbol is the thresholded network output. Without an
    explicit alphabet, trace symbols are used in sorted order."""
    if not traces:
        raise ValueError("cannot build a machine from zero traces")
    counts: dict[tuple[int, str], dict[tuple[int, bool], int]] = {}
    for trace, regions in zip(traces, _trace_regions(traces, quantizer)):
        for t, (symbol, _hidden, prob) in enumerate(trace.steps):
            cell = counts.setdefault((int(regions[t]), symbol), {})
            outcome = (int(regions[t + 1]), prob > output_threshold)
            cell[outcome] = cell.get(outcome, 0) + 1
    if alphabet is None:
        alphabet = Alphabet(tuple(sorted({s for trace in traces for s, _, _ in trace.steps})))
    return Ssm(quantizer.n_states, alphabet, counts,
               tuple(range(quantizer.n_states)))


def merge_equivalent(ssm: Ssm) -> Ssm:
    """Collapse states with identical input -> (next-state class, output)
    behavior, as a partition-refinement fixpoint.

    Behavior compares the observed outcome sets, not their frequencies, so
    regions that act alike but saw different traffic still merge; a cell
    with no data stays distinct from a populated one. Cell determinism is
    invariant under this merge: outcome sets of merged cells coincide."""
    block = {q: 0 for q in range(ssm.n_states)}
    while True:
        signatures = {}
        for q in range(ssm.n_states):
            sig = [block[q]]
            for a in ssm.alphabet:
                cell = ssm.counts.get((q, a))
                if not cell:
                    sig.append((a, None))
                    continue
                sig.append((a, tuple(sorted(
                    (block[nxt], out) for nxt, out in cell
                ))))
            signatures[q] = tuple(sig)
        relabel: dict[tuple, int] = {}
        new_block = {}
        for q in range(ssm.n_states):
            sig = signatures[q]
            if sig not in relabel:
                relabel[sig] = len(relabel)
            new_block[q] = relabel[sig]
        stable = len(set(new_block.values())) == len(set(block.values()))
        block = new_block
        if stable:
            break
    n_states = len(set(block.values()))
    counts: dict[tuple[int, str], dict[tuple[int, bool], int]] = {}
    for (q, a), cell in ssm.counts.items():
        merged_cell = counts.setdefault((block[q], a), {})
        for (nxt, out), c in cell.items():
            key = (block[nxt], out)
            merged_cell[key] = merged_cell.get(key, 0) + c
    leaf_state = tuple(block[s] for s in ssm.leaf_state)
    return Ssm(n_states, ssm.alphabet, counts, leaf_state)


def select_split_state(ssm: Ssm, tolerance: float = 1e-9) -> int:
    """The state with the largest summed cell entropy; ties break to the
    lowest id. Raises if every state is already deterministic."""
    best, best_entropy = None, tolerance
    for q in range(ssm.n_states):
        entropy = ssm.state_entropy(q)
        if entropy > best_entropy:
            best, best_entropy = q, entropy
    if best is None:
        raise DeterministicSsmError("all states are deterministic; nothing to split")
    return best


def split_quantizer(
    quantizer: QuantizerTree,
    victim_leaf: int,
    points: list[tuple[np.ndarray, tuple]],
) -> QuantizerTree:
    """Split one region by observed outcomes: points are grouped by their
    (input, output, next state) key and each group's mean becomes a child
    centroid. Raises when every point shares one outcome group."""
    if not 0 <= victim_leaf < quantizer.n_states:
        raise ValueError(f"region {victim_leaf} does not exist")
    groups: dict[tuple, list[np.ndarray]] = {}
    for vector, key in points:
        groups.setdefault(key, []).append(vector)
    if len(groups) < 2:
        raise UnsplittableRegionError(
            f"region {victim_leaf}: all {len(points)} points share one outcome group")
    centroids = np.stack([
        np.mean(groups[key], axis=0) for key in sorted(groups)
    ])
    return quantizer.replace_leaf(victim_leaf, centroids)


def median_split(quantizer: QuantizerTree, victim_leaf: int,
                 vectors: list[np.ndarray]) -> QuantizerTree:
    """Geometric fallback: cut the region on its maximum-variance dimension
    at the median (midpoint when the median is degenerate)."""
    matrix = np.asarray(vectors)
    variances = matrix.var(axis=0)
    dim = int(np.argmax(variances))
    if variances[dim] <= 0.0:
        raise UnsplittableRegionError(
            f"region {victim_leaf}: all {len(vectors)} points are identical")
    values = matrix[:, dim]
    threshold = float(np.median(values))
    left = matrix[values <= threshold]
    right = matrix[values > threshold]
    if not len(left) or not len(right):
        threshold = (float(values.min()) + float(values.max())) / 2.0
        left = matrix[values <= threshold]
        right = matrix[values > threshold]
    centroids = np.stack([left.mean(axis=0), right.mean(axis=0)])
    return quantizer.replace_leaf(victim_leaf, centroids)


def _victim_points(
    traces: list[TraceRecord],
    quantizer: QuantizerTree,
    merged: Ssm,
    victim: int,
) -> dict[int, list[tuple[np.ndarray, tuple]]]:
    """Per quantizer region belonging to the victim machine state: the
    hidden vectors observed there, keyed by their outgoing step outcome."""
    points: dict[int, list[tuple[np.ndarray, tuple]]] = {}
    for trace, regions in zip(traces, _trace_regions(traces, quantizer)):
        vectors = [trace.initial_hidden] + [h for _, h, _ in trace.steps]
        for t, (symbol, _hidden, prob) in enumerate(trace.steps):
            leaf = int(regions[t])
            if merged.leaf_state[leaf] != victim:
                continue
            key = (symbol, prob > 0.5, merged.leaf_state[int(regions[t + 1])])
            points.setdefault(leaf, []).append((vectors[t], key))
    return points


def _split_victim(
    traces: list[TraceRecord],
    quantizer: QuantizerTree,
    merged: Ssm,
    victim: int,
) -> QuantizerTree:
    """Split one region of the victim state, preferring outcome-group
    splits and falling back to the geometric cut; a split only counts if
    the region's points then spread over at least two regions."""
    points = _victim_points(traces, quantizer, merged, victim)
    candidates = sorted(points, key=lambda leaf: (-len(points[leaf]), leaf))
    for leaf in candidates:
        leaf_points = points[leaf]
        vectors = np.asarray([vec for vec, _ in leaf_points])
        for attempt in ("outcome", "geometric"):
            try:
                if attempt == "outcome":
                    candidate = split_quantizer(quantizer, leaf, leaf_points)
                else:
                    candidate = median_split(quantizer, leaf, list(vectors))
            except UnsplittableRegionError:
                continue
            if len(set(candidate.states_of(vectors).tolist())) >= 2:
                return candidate
    raise UnsplittableRegionError(
        f"state {victim}: no region split separates its observed outcomes")


def extract(traces: list[TraceRecord], cfg: ExtractionConfig | None = None,
            alphabet: Alphabet | None = None) -> ExtractedMachine:
    """Iterate build / merge / split until the machine is deterministic or
    the iteration budget is exhausted; the determinism flag is honest."""
    cfg = cfg or ExtractionConfig()
    if not traces:
        raise ValueError("cannot extract from zero traces")
    quantizer = QuantizerTree()
    history: list[float] = []
    splits = 0
    while True:
        raw = build_ssm(traces, quantizer, cfg.output_threshold, alphabet)
        ssm = merge_equivalent(raw)
        history.append(ssm.total_entropy())
        deterministic = ssm.is_deterministic(cfg.entropy_tolerance)
        if deterministic or splits >= cfg.max_iterations:
            break
        victim = select_split_state(ssm, cfg.entropy_tolerance)
        quantizer = _split_victim(traces, quantizer, ssm, victim)
        splits += 1
    initial_votes: dict[int, int] = {}
    for trace in traces:
        leaf = quantizer.state_of(trace.initial_hidden)
        state = ssm.leaf_state[leaf]
        initial_votes[state] = initial_votes.get(state, 0) + 1
    initial = min(
        initial_votes, key=lambda s: (-initial_votes[s], s))
    return ExtractedMachine(ssm, quantizer, initial, deterministic, splits, history)


# ---------------------------------------------------------------------------
# Projection to a complete automaton


def _project(ssm: Ssm, force: bool,
             strict_ties: bool = True) -> tuple[dict[tuple[int, str], int], set[int]]:
    """Majority transition per populated cell plus majority-landing
    accepting states. With ``strict_ties`` an exact outcome tie raises;
    otherwise it is broken toward the lowest (next state, output) pair."""
    transitions: dict[tuple[int, str], int] = {}
    for (q, a), cell in ssm.counts.items():
        ranked = sorted(cell.items(), key=lambda item: (-item[1], item[0]))
        if len(ranked) > 1:
            if not force:
                raise NondeterministicMachineError(
                    f"cell ({q}, {a!r}) has {len(ranked)} outcomes; "
                    "pass force=True for a majority projection")
            if strict_ties and ranked[0][1] == ranked[1][1]:
                raise IrreconcilableCellError(
                    f"cell ({q}, {a!r}) ties {ranked[0][1]} vs {ranked[1][1]} steps")
        transitions[(q, a)] = ranked[0][0][0]
    accepting = {
        state for state, (rejects, accepts) in ssm.landing_votes().items()
        if accepts > rejects
    }
    return transitions, accepting


def acceptance_agreement(m: ExtractedMachine) -> dict[int, float | None]:
    """Fraction of landing steps agreeing with each state's majority
    output; None for states never landed in. Values below 0.95 signal an
    inconsistent acceptance projection."""
    agreement: dict[int, float | None] = {}
    for state, (rejects, accepts) in m.ssm.landing_votes().items():
        total = rejects + accepts
        agreement[state] = max(rejects, accepts) / total if total else None
    return agreement


def to_fsa(m: ExtractedMachine, force: bool = False) -> Fsa:
    """Complete automaton over the machine's states; unpopulated cells are
    routed to a rejecting sink. Requires a deterministic machine unless
    ``force`` requests the (lossy) majority projection."""
    if not m.deterministic and not force:
        raise NondeterministicMachineError(
            "machine is not deterministic; pass force=True for a majority projection")
    transitions, accepting = _project(m.ssm, force)
    return Fsa.from_partial(
        set(range(m.ssm.n_states)), m.ssm.alphabet, m.initial_state,
        accepting, transitions,
    )


def choose_initial_state(m: ExtractedMachine, train: Dataset) -> int:
    """The machine state from which the projection classifies the training
    set best; ties break to the lowest id. Never raises: projection ties
    are broken deterministically for the accuracy sweep."""
    transitions, accepting = _project(m.ssm, force=True, strict_ties=False)
    best_state, best_hits = 0, -1
    for start in range(m.ssm.n_states):
        hits = 0
        for ex in train:
            state: int | None = start
            for symbol in ex.word:
                state = transitions.get((state, symbol))
                if state is None:
                    break
            predicted = state in accepting if state is not None else False
            hits += predicted == ex.label
        if hits > best_hits:
            best_state, best_hits = start, hits
    return best_state


# ---------------------------------------------------------------------------
# Oracle traces and sidecar metadata


def one_hot_traces(source: Fsa, words: list[str]) -> list[TraceRecord]:
    """Exact traces a perfect network would produce for a known automaton:
    hidden states are one-hot in the automaton state, outputs are the
    acceptance of the state just entered."""
    order = sorted(source.states)
    index = {q: i for i, q in enumerate(order)}
    n = len(order)

    def one_hot(q: int) -> np.ndarray:
        vec = np.zeros(n)
        vec[index[q]] = 1.0
        return vec

    traces = []
    for word in words:
        run = source.run(word)
        steps = [
            (symbol, one_hot(run[t + 1]), 1.0 if run[t + 1] in source.accepting else 0.0)
            for t, symbol in enumerate(word)
        ]
        traces.append(TraceRecord(word, steps, run[-1] in source.accepting, one_hot(run[0])))
    return traces


def extraction_meta_text(m: ExtractedMachine) -> str:
    agreement = [v for v in acceptance_agreement(m).values() if v is not None]
    lines = [
        "extraction v1",
        f"iterations: {m.iterations}",
        f"deterministic: {str(m.deterministic).lower()}",
        f"states: {m.ssm.n_states}",
        f"initial: {m.initial_state}",
        f"min_agreement: {min(agreement) if agreement else 'none'}",
        "entropy_history: " + " ".join(f"{h:.6f}" for h in m.entropy_history),
    ]
    return "\n".join(lines) + "\n"


def write_extraction_meta(m: ExtractedMachine, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(extraction_meta_text(m))


def read_extraction_meta(path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "extraction v1":
        raise ValueError("expected 'extraction v1' header")
    for ln in lines[1:]:
        key, _, value = ln.partition(":")
        meta[key.strip()] = value.strip()
    return meta
