"""Word lattices and the graph operations that act on them.

A lattice is an acyclic directed graph over dense integer node ids. Arcs
carry a word label plus acoustic and LM log-scores (natural log, higher is
better); final nodes carry a log final score. The combined score of a path
under a :class:`RescoreConfig` is

    acoustic_total + lm_scale * lm_total - wip * word_count + final_score

and :func:`combine_totals` is the single place that formula is evaluated,
so every operation here produces bit-identical combined scores for the
same path.

Epsilon arcs (word == EPSILON) contribute scores but no word: they are
excluded from word sequences, word counts, and LM context updates.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import CyclicLattice, MalformedPath, NoPath

__all__ = [
    "EPSILON",
    "SENT_START",
    "SENT_END",
    "AmKind",
    "AlignmentKind",
    "Arc",
    "LatticeMeta",
    "Lattice",
    "RescoreConfig",
    "PathScore",
    "LatticePath",
    "ViolationKind",
    "Violation",
    "ValidationReport",
    "combine_totals",
    "arc_contribution",
    "validate",
    "topo_order",
    "path_score",
    "best_path",
    "n_best",
    "expand_for_order",
    "prune",
    "to_dot",
]

EPSILON = "<eps>"
SENT_START = "<s>"
SENT_END = "</s>"

# Relative slack for comparisons between differently associated float sums.
_REL_SLACK = 1e-9


class AmKind(str, Enum):
    """Acoustic model family a lattice was produced with."""

    DNN = "DNN"
    GMM = "GMM"
    UNKNOWN = "unknown"


class AlignmentKind(str, Enum):
    """How word times were obtained: via phone alignment or directly."""

    PHONE_THEN_WORD = "phone-word"
    DIRECT_WORD = "word"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Arc:
    """One lattice transition.

    Scores are natural-log and higher-is-better. ``phone_alignment`` is an
    optional tuple of phone labels; an empty tuple normalizes to None.
    """

    src: int
    dst: int
    word: str
    acoustic_score: float
    lm_score: float
    phone_alignment: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.phone_alignment is not None:
            phones = tuple(self.phone_alignment)
            object.__setattr__(self, "phone_alignment", phones or None)

    @property
    def is_word(self) -> bool:
        return self.word != EPSILON


@dataclass(frozen=True)
class LatticeMeta:
    """Provenance tags carried alongside a lattice."""

    utterance_id: str = ""
    am_kind: AmKind = AmKind.UNKNOWN
    alignment_kind: AlignmentKind = AlignmentKind.UNKNOWN


_EMPTY_META = LatticeMeta()


def _arc_sort_key(arc: Arc) -> tuple:
    return (arc.src, arc.dst, arc.word, -arc.lm_score, -arc.acoustic_score, arc.phone_alignment or ())


@dataclass(frozen=True)
class Lattice:
    """Immutable word lattice.

    Nodes are 0..num_nodes-1. ``finals`` maps final node id to its log
    final score. Arc order is not semantic, so construction normalizes the
    arc tuple to canonical (src, dst, word, costs) order; this makes
    serialization round trips and tie-breaking independent of how a lattice
    was assembled. All operations treat instances as frozen values and
    return new lattices.
    """

    num_nodes: int
    start: int
    finals: Mapping[int, float]
    arcs: tuple[Arc, ...]
    meta: LatticeMeta = _EMPTY_META

    def __post_init__(self) -> None:
        object.__setattr__(self, "finals", dict(self.finals))
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs, key=_arc_sort_key)))

    def out_arcs(self) -> dict[int, list[Arc]]:
        """Adjacency by source node, preserving stored arc order."""
        adj: dict[int, list[Arc]] = defaultdict(list)
        for arc in self.arcs:
            adj[arc.src].append(arc)
        return adj


@dataclass(frozen=True)
class RescoreConfig:
    """Decode-time knobs for combining scores.

    lm_scale and wip must be non-negative; lm_interp is the weight on the
    replacement LM and must lie in [0, 1].
    """

    lm_scale: float = 7.0
    wip: float = 0.5
    lm_interp: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lm_scale) and self.lm_scale >= 0):
            raise ValueError(f"lm_scale must be finite and >= 0, got {self.lm_scale}")
        if not (math.isfinite(self.wip) and self.wip >= 0):
            raise ValueError(f"wip must be finite and >= 0, got {self.wip}")
        if not (math.isfinite(self.lm_interp) and 0.0 <= self.lm_interp <= 1.0):
            raise ValueError(f"lm_interp must be in [0, 1], got {self.lm_interp}")


@dataclass(frozen=True)
class PathScore:
    """Score decomposition of one complete path."""

    acoustic_total: float
    lm_total: float
    word_count: int
    combined: float


@dataclass(frozen=True)
class LatticePath:
    """A complete start-to-final path: its arcs, word sequence, and score."""

    arcs: tuple[Arc, ...]
    words: tuple[str, ...]
    score: PathScore


class ViolationKind(str, Enum):
    BAD_START = "BAD_START"
    BAD_FINAL = "BAD_FINAL"
    BAD_ARC = "BAD_ARC"
    NONFINITE_SCORE = "NONFINITE_SCORE"
    EMPTY_WORD = "EMPTY_WORD"
    NO_FINAL = "NO_FINAL"
    CYCLE = "CYCLE"
    UNREACHABLE = "UNREACHABLE"
    NOT_COREACHABLE = "NOT_COREACHABLE"


@dataclass(frozen=True)
class Violation:
    """One validation violation, tied to a node or arc index where known."""

    kind: ViolationKind
    node: int | None = None
    arc: int | None = None
    message: str = ""

    def describe(self) -> str:
        where = ""
        if self.node is not None:
            where = f" node {self.node}"
        if self.arc is not None:
            where += f" arc {self.arc}"
        tail = f": {self.message}" if self.message else ""
        return f"{self.kind.value}{where}{tail}"


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]


def combine_totals(
    acoustic_total: float,
    lm_total: float,
    word_count: int,
    final_score: float,
    cfg: RescoreConfig,
) -> float:
    """The combined-score formula. Every op funnels through this function."""
    return acoustic_total + cfg.lm_scale * lm_total - cfg.wip * word_count + final_score


def arc_contribution(arc: Arc, cfg: RescoreConfig) -> float:
    """Per-arc increment to the combined score, used by the pruning DPs."""
    wip = cfg.wip if arc.is_word else 0.0
    return arc.acoustic_score + cfg.lm_scale * arc.lm_score - wip


def validate(lattice: Lattice) -> ValidationReport:
    """Check all structural invariants and list every violation found.

    Violations are data, not faults: this never raises on a bad lattice.
    Graph checks (cycle, reachability) are skipped when node references are
    broken, since they would be meaningless.
    """
    violations: list[Violation] = []
    n = lattice.num_nodes

    refs_ok = True
    if n < 1 or not (0 <= lattice.start < n):
        violations.append(
            Violation(ViolationKind.BAD_START, node=lattice.start, message=f"start out of range 0..{n - 1}")
        )
        refs_ok = False

    if not lattice.finals:
        violations.append(Violation(ViolationKind.NO_FINAL, message="no final node"))
    for node, score in lattice.finals.items():
        if not (0 <= node < n):
            violations.append(Violation(ViolationKind.BAD_FINAL, node=node, message="final node out of range"))
            refs_ok = False
        if not math.isfinite(score):
            violations.append(Violation(ViolationKind.NONFINITE_SCORE, node=node, message="final score not finite"))

    for i, arc in enumerate(lattice.arcs):
        if not (0 <= arc.src < n and 0 <= arc.dst < n):
            violations.append(Violation(ViolationKind.BAD_ARC, arc=i, message="arc endpoint out of range"))
            refs_ok = False
        if arc.word == "":
            violations.append(Violation(ViolationKind.EMPTY_WORD, arc=i, message="empty word label"))
        if not (math.isfinite(arc.acoustic_score) and math.isfinite(arc.lm_score)):
            violations.append(Violation(ViolationKind.NONFINITE_SCORE, arc=i, message="arc score not finite"))

    if refs_ok:
        order, leftover = _kahn(lattice)
        if leftover:
            violations.append(
                Violation(ViolationKind.CYCLE, node=min(leftover), message=f"cycle through nodes {sorted(leftover)}")
            )

        reachable = _reachable_from(lattice, lattice.start, forward=True)
        coreachable: set[int] = set()
        for node in lattice.finals:
            coreachable |= _reachable_from(lattice, node, forward=False)
        for node in range(n):
            if node not in reachable:
                violations.append(Violation(ViolationKind.UNREACHABLE, node=node, message="not reachable from start"))
            if node not in coreachable:
                violations.append(Violation(ViolationKind.NOT_COREACHABLE, node=node, message="no path to a final node"))

    return ValidationReport(ok=not violations, violations=tuple(violations))


def _kahn(lattice: Lattice) -> tuple[list[int], set[int]]:
    """Kahn's algorithm; returns (order, nodes left inside cycles)."""
    indeg = [0] * lattice.num_nodes
    adj: list[list[int]] = [[] for _ in range(lattice.num_nodes)]
    for arc in lattice.arcs:
        indeg[arc.dst] += 1
        adj[arc.src].append(arc.dst)
    ready = [node for node in range(lattice.num_nodes) if indeg[node] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for nxt in adj[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    leftover = set(range(lattice.num_nodes)) - set(order)
    return order, leftover


def _reachable_from(lattice: Lattice, origin: int, forward: bool) -> set[int]:
    adj: dict[int, list[int]] = defaultdict(list)
    for arc in lattice.arcs:
        if forward:
            adj[arc.src].append(arc.dst)
        else:
            adj[arc.dst].append(arc.src)
    seen = {origin}
    stack = [origin]
    while stack:
        node = stack.pop()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def topo_order(lattice: Lattice) -> list[int]:
    """Topological node order, ties broken by ascending node id.

    Raises:
        CyclicLattice: if the arc set contains a cycle.
    """
    order, leftover = _kahn(lattice)
    if leftover:
        raise CyclicLattice(f"cycle through nodes {sorted(leftover)}")
    return order


def path_score(
    lattice: Lattice,
    path: LatticePath | Sequence[Arc],
    cfg: RescoreConfig,
) -> PathScore:
    """Score one complete path under cfg.

    The path must start at the lattice start, chain contiguously, and end
    at a final node. An empty path is allowed when the start node itself is
    final.

    Raises:
        MalformedPath: if the arc sequence is not a connected start-to-final path.
    """
    arcs = tuple(path.arcs if isinstance(path, LatticePath) else path)
    at = lattice.start
    acoustic_total = 0.0
    lm_total = 0.0
    word_count = 0
    for i, arc in enumerate(arcs):
        if arc.src != at:
            raise MalformedPath(f"arc {i} leaves node {arc.src}, expected {at}")
        at = arc.dst
        acoustic_total += arc.acoustic_score
        lm_total += arc.lm_score
        if arc.is_word:
            word_count += 1
    if at not in lattice.finals:
        raise MalformedPath(f"path ends at non-final node {at}")
    combined = combine_totals(acoustic_total, lm_total, word_count, lattice.finals[at], cfg)
    return PathScore(acoustic_total, lm_total, word_count, combined)


def _backward_best(lattice: Lattice, order: Sequence[int], cfg: RescoreConfig) -> list[float]:
    """Max combined-score completion from each node to any final node."""
    best = [-math.inf] * lattice.num_nodes
    adj = lattice.out_arcs()
    for node in reversed(order):
        score = lattice.finals.get(node, -math.inf)
        for arc in adj.get(node, ()):
            tail = best[arc.dst]
            if tail == -math.inf:
                continue
            cand = arc_contribution(arc, cfg) + tail
            if cand > score:
                score = cand
        best[node] = score
    return best


def _collect_kbest(
    lattice: Lattice,
    k: int,
    cfg: RescoreConfig,
    unique_words: bool,
) -> list[LatticePath]:
    """Exact k-best paths by best-first expansion.

    Partial paths are ranked by accumulated totals plus an exact
    backward-Viterbi completion bound; complete paths re-enter the queue
    carrying their canonical combined score, so emission order is exact up
    to float association. Enumeration continues through score ties (plus a
    tiny slack) so the final sort can apply the deterministic tie-break:
    higher combined first, then lexicographically smaller words, then fewer
    arcs.
    """
    order = topo_order(lattice)
    completion = _backward_best(lattice, order, cfg)
    if completion[lattice.start] == -math.inf:
        raise NoPath(f"no final node reachable from start {lattice.start}")
    adj = lattice.out_arcs()
    slack = _REL_SLACK * (1.0 + abs(completion[lattice.start]))

    counter = itertools.count()
    # Heap entry: (-f, tiebreak counter, complete?, node, ac, lm, wc, arc link).
    # Arc links are (arc, parent_link) cons cells; None is the empty path.
    start_f = combine_totals(0.0, 0.0, 0, 0.0, cfg) + completion[lattice.start]
    heap: list[tuple] = [(-start_f, next(counter), False, lattice.start, 0.0, 0.0, 0, None)]

    candidates: list[tuple[float, tuple[str, ...], int, int, tuple[Arc, ...]]] = []
    kept_scores: list[float] = []  # sorted ascending; per words-key if deduping
    best_by_words: dict[tuple[str, ...], float] = {}

    def threshold() -> float:
        if len(kept_scores) < k:
            return -math.inf
        return kept_scores[-k]

    while heap:
        neg_f, _, complete, node, ac, lm, wc, link = heapq.heappop(heap)
        if -neg_f < threshold() - slack:
            break
        if complete:
            arcs = _unwind(link)
            words = tuple(a.word for a in arcs if a.is_word)
            combined = -neg_f
            candidates.append((combined, words, len(arcs), len(candidates), arcs))
            if unique_words:
                prev = best_by_words.get(words)
                if prev is None or combined > prev:
                    if prev is not None:
                        kept_scores.remove(prev)
                    best_by_words[words] = combined
                    _insort(kept_scores, combined)
            else:
                _insort(kept_scores, combined)
            continue
        final_score = lattice.finals.get(node)
        if final_score is not None:
            exact = combine_totals(ac, lm, wc, final_score, cfg)
            heapq.heappush(heap, (-exact, next(counter), True, node, ac, lm, wc, link))
        for arc in adj.get(node, ()):
            if completion[arc.dst] == -math.inf:
                continue
            ac2 = ac + arc.acoustic_score
            lm2 = lm + arc.lm_score
            wc2 = wc + (1 if arc.is_word else 0)
            f = combine_totals(ac2, lm2, wc2, 0.0, cfg) + completion[arc.dst]
            heapq.heappush(heap, (-f, next(counter), False, arc.dst, ac2, lm2, wc2, (arc, link)))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    picked: list[LatticePath] = []
    seen_words: set[tuple[str, ...]] = set()
    for combined, words, _n_arcs, _idx, arcs in candidates:
        if unique_words:
            if words in seen_words:
                continue
            seen_words.add(words)
        picked.append(LatticePath(arcs=arcs, words=words, score=path_score(lattice, arcs, cfg)))
        if len(picked) == k:
            break
    return picked


def _unwind(link) -> tuple[Arc, ...]:
    arcs: list[Arc] = []
    while link is not None:
        arc, link = link
        arcs.append(arc)
    arcs.reverse()
    return tuple(arcs)


def _insort(values: list[float], value: float) -> None:
    bisect.insort(values, value)


def best_path(lattice: Lattice, cfg: RescoreConfig) -> LatticePath:
    """The path maximizing the combined score under cfg.

    Ties go to the lexicographically smallest word sequence, then to the
    path with fewer arcs.

    Raises:
        NoPath: if no final node is reachable from the start.
        CyclicLattice: if the lattice has a cycle.
    """
    return _collect_kbest(lattice, 1, cfg, unique_words=False)[0]


def n_best(
    lattice: Lattice,
    k: int,
    cfg: RescoreConfig,
    unique_words: bool = False,
) -> list[LatticePath]:
    """Top-k complete paths by combined score, non-increasing.

    Returns fewer than k paths when the lattice has fewer (distinct, when
    unique_words is set) complete paths. n_best(lattice, 1, cfg) equals
    [best_path(lattice, cfg)].

    Raises:
        ValueError: if k < 1.
        NoPath: if no final node is reachable from the start.
        CyclicLattice: if the lattice has a cycle.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _collect_kbest(lattice, k, cfg, unique_words)


def _expand_states(lattice: Lattice, order: int) -> tuple[Lattice, list[tuple[str, ...]]]:
    """Expansion joint with per-new-node histories, shared with rescoring.

    Returns the expanded lattice and, for each new node id, the incoming
    (order-1)-word history, left-padded with the sentence-start token.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    topo = topo_order(lattice)
    hist_len = order - 1
    start_hist = (SENT_START,) * hist_len
    adj = lattice.out_arcs()

    histories: dict[int, set[tuple[str, ...]]] = defaultdict(set)
    histories[lattice.start].add(start_hist)
    for node in topo:
        for hist in histories.get(node, ()):
            for arc in adj.get(node, ()):
                if arc.is_word and hist_len:
                    nxt = (hist + (arc.word,))[-hist_len:]
                else:
                    nxt = hist
                histories[arc.dst].add(nxt)

    state_id: dict[tuple[int, tuple[str, ...]], int] = {}
    id_hist: list[tuple[str, ...]] = []
    for node in range(lattice.num_nodes):
        for hist in sorted(histories.get(node, ())):
            state_id[(node, hist)] = len(id_hist)
            id_hist.append(hist)

    new_arcs: list[Arc] = []
    for arc in lattice.arcs:
        for hist in sorted(histories.get(arc.src, ())):
            if arc.is_word and hist_len:
                nxt = (hist + (arc.word,))[-hist_len:]
            else:
                nxt = hist
            new_arcs.append(
                Arc(
                    src=state_id[(arc.src, hist)],
                    dst=state_id[(arc.dst, nxt)],
                    word=arc.word,
                    acoustic_score=arc.acoustic_score,
                    lm_score=arc.lm_score,
                    phone_alignment=arc.phone_alignment,
                )
            )

    new_finals = {
        state_id[(node, hist)]: score
        for node, score in lattice.finals.items()
        for hist in sorted(histories.get(node, ()))
    }
    expanded = Lattice(
        num_nodes=len(id_hist),
        start=state_id[(lattice.start, start_hist)],
        finals=new_finals,
        arcs=tuple(new_arcs),
        meta=lattice.meta,
    )
    return expanded, id_hist


def expand_for_order(lattice: Lattice, order: int) -> Lattice:
    """Split nodes so each carries a unique incoming (order-1)-word history.

    The expanded lattice accepts exactly the same scored word sequences:
    every input path maps to one output path with identical arc words and
    scores. With order=1 the result is a structurally equal copy.

    Raises:
        ValueError: if order < 1.
        CyclicLattice: if the lattice has a cycle.
    """
    return _expand_states(lattice, order)[0]


def prune(lattice: Lattice, beam: float, cfg: RescoreConfig) -> Lattice:
    """Drop arcs not lying on any complete path within beam of the best.

    Keeps exactly the arcs (and final flags) on some complete path whose
    combined score is >= best - beam, then renumbers surviving nodes
    densely, preserving relative order. The best path always survives.

    Raises:
        ValueError: if beam < 0.
        NoPath: if no final node is reachable from the start.
        CyclicLattice: if the lattice has a cycle.
    """
    if not beam >= 0:
        raise ValueError(f"beam must be >= 0, got {beam}")
    order = topo_order(lattice)
    backward = _backward_best(lattice, order, cfg)
    best = backward[lattice.start]
    if best == -math.inf:
        raise NoPath(f"no final node reachable from start {lattice.start}")

    forward = [-math.inf] * lattice.num_nodes
    forward[lattice.start] = 0.0
    adj = lattice.out_arcs()
    for node in order:
        head = forward[node]
        if head == -math.inf:
            continue
        for arc in adj.get(node, ()):
            cand = head + arc_contribution(arc, cfg)
            if cand > forward[arc.dst]:
                forward[arc.dst] = cand

    cutoff = best - beam - _REL_SLACK * (1.0 + abs(best))
    kept_arcs = [
        arc
        for arc in lattice.arcs
        if forward[arc.src] != -math.inf
        and backward[arc.dst] != -math.inf
        and forward[arc.src] + arc_contribution(arc, cfg) + backward[arc.dst] >= cutoff
    ]
    kept_finals = {
        node: score
        for node, score in lattice.finals.items()
        if forward[node] != -math.inf and forward[node] + score >= cutoff
    }

    kept_nodes = {lattice.start} | set(kept_finals)
    for arc in kept_arcs:
        kept_nodes.add(arc.src)
        kept_nodes.add(arc.dst)
    renumber = {old: new for new, old in enumerate(sorted(kept_nodes))}

    return Lattice(
        num_nodes=len(renumber),
        start=renumber[lattice.start],
        finals={renumber[node]: score for node, score in kept_finals.items()},
        arcs=tuple(
            Arc(
                src=renumber[arc.src],
                dst=renumber[arc.dst],
                word=arc.word,
                acoustic_score=arc.acoustic_score,
                lm_score=arc.lm_score,
                phone_alignment=arc.phone_alignment,
            )
            for arc in kept_arcs
        ),
        meta=lattice.meta,
    )


def _fmt_label_score(value: float) -> str:
    text = f"{value:g}"
    return "0" if text == "-0" else text


def to_dot(lattice: Lattice) -> str:
    """Render to Graphviz DOT: arcs labeled word/acoustic,lm, finals double-circled.

    Output is deterministic; no validation is performed, so even broken
    lattices can be inspected.
    """
    lines = ["digraph lattice {", "  rankdir=LR;"]
    for node in range(lattice.num_nodes):
        if node in lattice.finals:
            score = lattice.finals[node]
            label = f"{node}/{_fmt_label_score(score)}" if score != 0.0 else str(node)
            lines.append(f'  {node} [shape=doublecircle, label="{label}"];')
        else:
            lines.append(f'  {node} [shape=circle, label="{node}"];')
    for arc in sorted(
        lattice.arcs, key=lambda a: (a.src, a.dst, a.word, a.acoustic_score, a.lm_score)
    ):
        label = f"{arc.word}/{_fmt_label_score(arc.acoustic_score)},{_fmt_label_score(arc.lm_score)}"
        lines.append(f'  {arc.src} -> {arc.dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
