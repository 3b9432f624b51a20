"""Lattice and n-best rescoring, plus the external scorer protocol client.

Rescoring replaces each LM term with an interpolated one:

    effective_lm = (1 - lm_interp) * original_lm + lm_interp * new_lm

Whole-lattice rescoring needs finite history, so it requires a scorer with
an ``order`` attribute (an n-gram model); n-best rescoring works with any
:class:`~latrescore.lm.LmScorer`, including external neural scorers. The
end-of-sentence event is always part of lm_total: lattice rescoring
realizes it as an epsilon arc per final state into a fresh super-final
node, and n-best rescoring scores it inside the sequence log-prob.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import uuid
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidProbability, NonFiniteScore, ScorerUnavailable
from .lattice import (
    EPSILON,
    SENT_END,
    Arc,
    Lattice,
    LatticePath,
    RescoreConfig,
    _expand_states,
    combine_totals,
    n_best,
)
from .lm import LmScorer

__all__ = [
    "PROTOCOL_VERSION",
    "Hypothesis",
    "NBestList",
    "NeuralScoreBatch",
    "effective_lm",
    "combine_arc_score",
    "convert_neural_scores",
    "rescore_lattice",
    "rescore_nbest",
    "nbest_from_paths",
    "ExternalScorer",
]

PROTOCOL_VERSION = 1

_DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class Hypothesis:
    """One rescored hypothesis with its score decomposition and rank moves."""

    words: tuple[str, ...]
    acoustic_total: float
    original_lm_total: float
    new_lm_total: float
    combined: float
    rank_before: int
    rank_after: int
    final_score: float = 0.0


@dataclass(frozen=True)
class NBestList:
    """Hypotheses for one utterance, ordered by combined score descending."""

    utterance_id: str
    hypotheses: tuple[Hypothesis, ...]


@dataclass(frozen=True)
class NeuralScoreBatch:
    """One scored protocol exchange: candidates and their log-probs."""

    request_id: str
    context: tuple[str, ...]
    candidates: tuple[str, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.candidates:
            raise InvalidProbability("empty candidate list")
        if len(self.logprobs) != len(self.candidates):
            raise InvalidProbability(
                f"{len(self.logprobs)} logprobs for {len(self.candidates)} candidates"
            )
        for value in self.logprobs:
            if not math.isfinite(value) or value > 0.0:
                raise InvalidProbability(f"log-prob out of domain: {value}")


def effective_lm(original_lm: float, new_lm: float, lm_interp: float) -> float:
    """Interpolated LM term; the one formula both rescoring paths share."""
    return (1.0 - lm_interp) * original_lm + lm_interp * new_lm


def combine_arc_score(
    acoustic: float,
    original_lm: float,
    new_lm: float,
    cfg: RescoreConfig,
    is_word: bool = True,
) -> float:
    """Per-arc contribution to a rescored combined score.

    Raises:
        NonFiniteScore: if any input score is NaN or infinite.
    """
    for value in (acoustic, original_lm, new_lm):
        if not math.isfinite(value):
            raise NonFiniteScore(f"score must be finite, got {value}")
    lm = effective_lm(original_lm, new_lm, cfg.lm_interp)
    return acoustic + cfg.lm_scale * lm - (cfg.wip if is_word else 0.0)


def convert_neural_scores(values: Sequence[float], kind: str) -> list[float]:
    """Normalize scorer outputs to natural-log probabilities.

    kind "probability" expects values in (0, 1] and returns their logs;
    kind "log" expects finite values <= 0 and passes them through.

    Raises:
        InvalidProbability: on a value outside the declared domain.
        ValueError: on an unknown kind.
    """
    if kind == "probability":
        out = []
        for value in values:
            if not (math.isfinite(value) and 0.0 < value <= 1.0):
                raise InvalidProbability(f"probability out of (0, 1]: {value}")
            out.append(math.log(value))
        return out
    if kind == "log":
        for value in values:
            if not math.isfinite(value) or value > 0.0:
                raise InvalidProbability(f"log-prob out of domain: {value}")
        return list(values)
    raise ValueError(f"unknown score kind {kind!r}")


def rescore_lattice(lattice: Lattice, lm, cfg: RescoreConfig = RescoreConfig()) -> Lattice:
    """Replace every arc's lm_score with the interpolated n-gram score.

    The lattice is first expanded so each node carries a unique LM history;
    each word arc is then scored in its history, epsilon arcs keep only the
    (1 - lm_interp) share of their original score, and one epsilon arc per
    final state carries the interpolated end-of-sentence score (plus that
    state's original final score on its acoustic field) into a new single
    final node. Acoustic scores of mapped arcs are never altered, and the
    output accepts exactly the input's word sequences.

    Only cfg.lm_interp matters here; lm_scale and wip stay decode-time
    knobs and are not baked into the stored lattice.

    Args:
        lattice: a validated lattice.
        lm: a finite-context scorer: needs ``order`` and ``score_word``.
        cfg: supplies lm_interp.
    """
    order = getattr(lm, "order", None)
    if not isinstance(order, int) or order < 1:
        raise ValueError("whole-lattice rescoring needs a scorer with a finite n-gram order")
    expanded, histories = _expand_states(lattice, order)
    interp = cfg.lm_interp

    arcs = []
    for arc in expanded.arcs:
        if arc.is_word:
            new_lm = lm.score_word(histories[arc.src], arc.word)
            score = effective_lm(arc.lm_score, new_lm, interp)
        else:
            score = effective_lm(arc.lm_score, 0.0, interp)
        arcs.append(
            Arc(
                src=arc.src,
                dst=arc.dst,
                word=arc.word,
                acoustic_score=arc.acoustic_score,
                lm_score=score,
                phone_alignment=arc.phone_alignment,
            )
        )

    super_final = expanded.num_nodes
    for node in sorted(expanded.finals):
        eos = lm.score_word(histories[node], SENT_END)
        arcs.append(
            Arc(
                src=node,
                dst=super_final,
                word=EPSILON,
                acoustic_score=expanded.finals[node],
                lm_score=effective_lm(0.0, eos, interp),
            )
        )

    return Lattice(
        num_nodes=expanded.num_nodes + 1,
        start=expanded.start,
        finals={super_final: 0.0},
        arcs=tuple(arcs),
        meta=expanded.meta,
    )


def nbest_from_paths(lattice: Lattice, paths: Sequence[LatticePath]) -> NBestList:
    """Wrap already-ranked paths as an NBestList without rescoring them."""
    hyps = tuple(
        Hypothesis(
            words=path.words,
            acoustic_total=path.score.acoustic_total,
            original_lm_total=path.score.lm_total,
            new_lm_total=path.score.lm_total,
            combined=path.score.combined,
            rank_before=i + 1,
            rank_after=i + 1,
            final_score=lattice.finals[path.arcs[-1].dst] if path.arcs else lattice.finals[lattice.start],
        )
        for i, path in enumerate(paths)
    )
    return NBestList(utterance_id=lattice.meta.utterance_id, hypotheses=hyps)


def rescore_nbest(
    lattice: Lattice,
    scorer: LmScorer,
    k: int,
    cfg: RescoreConfig = RescoreConfig(),
    unique_words: bool = False,
) -> NBestList:
    """Extract the original-score n-best and re-rank it with a sequence scorer.

    Each hypothesis's new LM term is the scorer's whole-sequence log-prob
    (end-of-sentence included); the combined score interpolates it with the
    hypothesis's original lattice LM total and applies lm_scale and wip.
    Ties break like the path search: smaller word sequence, then fewer arcs.

    Raises:
        NoPath, CyclicLattice, ValueError: as n_best.
        ScorerUnavailable: if an external scorer fails mid-batch.
    """
    paths = n_best(lattice, k, cfg, unique_words=unique_words)
    scored = []
    for rank_before, path in enumerate(paths, start=1):
        final_score = lattice.finals[path.arcs[-1].dst] if path.arcs else lattice.finals[lattice.start]
        new_lm_total = scorer.score_sequence(list(path.words))
        lm = effective_lm(path.score.lm_total, new_lm_total, cfg.lm_interp)
        combined = combine_totals(
            path.score.acoustic_total, lm, path.score.word_count, final_score, cfg
        )
        scored.append((combined, path.words, len(path.arcs), rank_before, new_lm_total, path, final_score))

    scored.sort(key=lambda s: (-s[0], s[1], s[2], s[3]))
    hyps = tuple(
        Hypothesis(
            words=path.words,
            acoustic_total=path.score.acoustic_total,
            original_lm_total=path.score.lm_total,
            new_lm_total=new_lm_total,
            combined=combined,
            rank_before=rank_before,
            rank_after=rank_after,
            final_score=final_score,
        )
        for rank_after, (combined, _w, _n, rank_before, new_lm_total, path, final_score) in enumerate(
            scored, start=1
        )
    )
    return NBestList(utterance_id=lattice.meta.utterance_id, hypotheses=hyps)


class ExternalScorer(LmScorer):
    """Client for a line-delimited JSON scorer subprocess.

    The child announces itself with a hello line declaring the protocol
    version and its vocabulary size, then answers score requests. Requests
    and responses are matched by id, not order; one in-flight request at a
    time per connection. Any malformed line, protocol mismatch, process
    exit, or silence past the timeout raises ScorerUnavailable.

    Sequence scoring happens client-side via chained score_word calls, so
    the inherited chain-rule implementation applies unchanged.
    """

    def __init__(self, command: Sequence[str], timeout: float = _DEFAULT_TIMEOUT):
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._lines: queue.Queue[str | None] = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise ScorerUnavailable(f"cannot start scorer {self.command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        hello = self._read_message()
        if hello.get("op") != "hello":
            raise ScorerUnavailable(f"expected hello, got {hello!r}")
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ScorerUnavailable(f"unsupported protocol version {hello.get('protocol')!r}")
        vocab_size = hello.get("vocab_size")
        if not isinstance(vocab_size, int) or vocab_size < 1:
            raise ScorerUnavailable(f"bad vocab_size in hello: {vocab_size!r}")
        self.vocab_size = vocab_size

    def _pump(self) -> None:
        stdout = self._proc.stdout
        assert stdout is not None
        for line in stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_message(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ScorerUnavailable(f"scorer silent for {self.timeout}s") from None
        if line is None:
            raise ScorerUnavailable("scorer closed its output")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerUnavailable(f"malformed scorer line: {line!r}") from exc
        if not isinstance(message, dict):
            raise ScorerUnavailable(f"scorer sent a non-object message: {message!r}")
        return message

    def score_batch(self, context: Sequence[str], candidates: Sequence[str]) -> NeuralScoreBatch:
        """Score candidate continuations of a context in one exchange."""
        if self._proc.poll() is not None:
            raise ScorerUnavailable("scorer process has exited")
        request_id = uuid.uuid4().hex
        request = {
            "id": request_id,
            "op": "score",
            "context": list(context),
            "candidates": list(candidates),
        }
        with self._lock:
            stdin = self._proc.stdin
            assert stdin is not None
            try:
                stdin.write(json.dumps(request) + "\n")
                stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ScorerUnavailable(f"scorer pipe closed: {exc}") from exc
            while True:
                message = self._read_message()
                if message.get("id") != request_id:
                    continue  # stale or unsolicited; ids are authoritative
                if "error" in message:
                    raise ScorerUnavailable(f"scorer error: {message['error']}")
                logprobs = message.get("logprobs")
                if not isinstance(logprobs, list):
                    raise ScorerUnavailable(f"response missing logprobs: {message!r}")
                try:
                    return NeuralScoreBatch(
                        request_id=request_id,
                        context=tuple(context),
                        candidates=tuple(candidates),
                        logprobs=tuple(float(v) for v in logprobs),
                    )
                except (TypeError, InvalidProbability) as exc:
                    raise ScorerUnavailable(f"bad logprobs from scorer: {exc}") from exc

    def score_word(self, context: Sequence[str], word: str) -> float:
        return self.score_batch(context, [word]).logprobs[0]

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass
