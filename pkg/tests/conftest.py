"""Shared fixtures: hand-built lattices, a seeded random-lattice corpus
generator, and an exhaustive path-enumeration oracle the decoder tests
compare against."""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

from latrescore import (
    EPSILON,
    Arc,
    Lattice,
    LatticeMeta,
    RescoreConfig,
)

MOCK_SCORER = Path(__file__).parent / "mock_scorer.py"


def mock_scorer_command(*flags: str) -> list[str]:
    return [sys.executable, str(MOCK_SCORER), *flags]


def make_l1() -> Lattice:
    """Two-path diamond: "a c" (ac -2.0, lm -2.0) vs "b c" (ac -3.5, lm -0.7)."""
    return Lattice(
        num_nodes=4,
        start=0,
        finals={3: 0.0},
        arcs=(
            Arc(0, 1, "a", acoustic_score=-1.0, lm_score=-1.0),
            Arc(0, 2, "b", acoustic_score=-2.5, lm_score=-0.3),
            Arc(1, 3, "c", acoustic_score=-1.0, lm_score=-1.0),
            Arc(2, 3, "c", acoustic_score=-1.0, lm_score=-0.4),
        ),
        meta=LatticeMeta(utterance_id="utt1"),
    )


def make_l2() -> Lattice:
    """One-word path "hi" vs two-word path "h i"."""
    return Lattice(
        num_nodes=3,
        start=0,
        finals={2: 0.0},
        arcs=(
            Arc(0, 2, "hi", acoustic_score=-3.0, lm_score=-0.5),
            Arc(0, 1, "h", acoustic_score=-1.0, lm_score=-0.5),
            Arc(1, 2, "i", acoustic_score=-1.0, lm_score=-0.5),
        ),
        meta=LatticeMeta(utterance_id="utt2"),
    )


@pytest.fixture
def l1() -> Lattice:
    return make_l1()


@pytest.fixture
def l2() -> Lattice:
    return make_l2()


@pytest.fixture
def fixture_corpus() -> list[list[str]]:
    return [["a", "b"], ["a", "c"]]


# -- random lattice corpus ----------------------------------------------------

_GEN_WORDS = ("a", "b", "c", "d")
_GEN_PHONES = ("k", "ae", "t", "s")


def _q(rng: random.Random, lo: float, hi: float) -> float:
    # 6-decimal quantization keeps text serialization exact.
    return round(rng.uniform(lo, hi), 6)


def random_lattice(rng: random.Random, max_nodes: int = 10) -> Lattice:
    """Random DAG with a guaranteed start-to-final spine.

    Node ids are a random permutation of a topological order, so they
    exercise non-sorted layouts, nonzero starts, epsilon arcs, phone
    alignments, and multiple scored final nodes.
    """
    n = rng.randint(2, max_nodes)
    perm = list(range(n))
    rng.shuffle(perm)

    def word() -> str:
        if rng.random() < 0.12:
            return EPSILON
        return rng.choice(_GEN_WORDS)

    def arc(i: int, j: int) -> Arc:
        phones = None
        if rng.random() < 0.2:
            phones = tuple(rng.choice(_GEN_PHONES) for _ in range(rng.randint(1, 3)))
        return Arc(
            perm[i],
            perm[j],
            word(),
            acoustic_score=_q(rng, -8.0, 0.0),
            lm_score=_q(rng, -8.0, 0.0),
            phone_alignment=phones,
        )

    arcs = [arc(i, i + 1) for i in range(n - 1)]
    for _ in range(rng.randint(0, 2 * n)):
        i = rng.randint(0, n - 2)
        j = rng.randint(i + 1, n - 1)
        arcs.append(arc(i, j))

    finals = {perm[n - 1]: _q(rng, -2.0, 0.0)}
    for i in range(1, n - 1):
        if rng.random() < 0.15:
            finals[perm[i]] = _q(rng, -2.0, 0.0)

    return Lattice(
        num_nodes=n,
        start=perm[0],
        finals=finals,
        arcs=tuple(arcs),
        meta=LatticeMeta(utterance_id=f"rnd{rng.randint(0, 10**9)}"),
    )


def random_corpus(seed: int, count: int, max_paths: int = 10_000) -> list[Lattice]:
    """Deterministic corpus; lattices exceeding max_paths are regenerated."""
    rng = random.Random(seed)
    out: list[Lattice] = []
    while len(out) < count:
        lattice = random_lattice(rng)
        if count_paths(lattice) <= max_paths:
            out.append(lattice)
    return out


# -- exhaustive oracle --------------------------------------------------------


@dataclass(frozen=True)
class OraclePath:
    words: tuple[str, ...]
    acoustic_total: float
    lm_total: float
    word_count: int
    n_arcs: int
    combined: float


def enumerate_paths(lattice: Lattice, cfg: RescoreConfig) -> list[OraclePath]:
    """Every complete path, scored by plain summation, in contract order:
    combined descending, then words ascending, then fewer arcs."""
    adj: dict[int, list[Arc]] = {}
    for a in lattice.arcs:
        adj.setdefault(a.src, []).append(a)

    results: list[OraclePath] = []
    stack: list[tuple[int, tuple[Arc, ...]]] = [(lattice.start, ())]
    while stack:
        node, arcs = stack.pop()
        if node in lattice.finals:
            ac = 0.0
            lm = 0.0
            wc = 0
            for a in arcs:
                ac += a.acoustic_score
                lm += a.lm_score
                if a.word != EPSILON:
                    wc += 1
            combined = ac + cfg.lm_scale * lm - cfg.wip * wc + lattice.finals[node]
            results.append(
                OraclePath(
                    words=tuple(a.word for a in arcs if a.word != EPSILON),
                    acoustic_total=ac,
                    lm_total=lm,
                    word_count=wc,
                    n_arcs=len(arcs),
                    combined=combined,
                )
            )
        for a in adj.get(node, ()):
            stack.append((a.dst, arcs + (a,)))
    results.sort(key=lambda p: (-p.combined, p.words, p.n_arcs))
    return results


def count_paths(lattice: Lattice) -> int:
    """Path count by DP over a topological order (no enumeration)."""
    indeg = {i: 0 for i in range(lattice.num_nodes)}
    adj: dict[int, list[Arc]] = {}
    for a in lattice.arcs:
        indeg[a.dst] += 1
        adj.setdefault(a.src, []).append(a)
    order: list[int] = [i for i in range(lattice.num_nodes) if indeg[i] == 0]
    queue = list(order)
    while queue:
        node = queue.pop()
        for a in adj.get(node, ()):
            indeg[a.dst] -= 1
            if indeg[a.dst] == 0:
                order.append(a.dst)
                queue.append(a.dst)
    ways = {i: 0 for i in range(lattice.num_nodes)}
    ways[lattice.start] = 1
    total = 0
    for node in order:
        if ways[node] and node in lattice.finals:
            total += ways[node]
        for a in adj.get(node, ()):
            ways[a.dst] += ways[node]
    return total
