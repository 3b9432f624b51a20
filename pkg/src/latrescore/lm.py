"""N-gram language models with Witten-Bell interpolation.

Probabilities are natural-log throughout. The event space is the
vocabulary minus the sentence-start token: ``<s>`` is conditioned on but
never predicted, ``</s>`` is always predicted at sentence end, and
out-of-vocabulary words map to ``<unk>`` at both train and score time.

A context passed to :meth:`LmScorer.score_word` is the full sentence
prefix: shorter-than-(order-1) contexts are left-padded with ``<s>``, so
the chain rule

    score_sequence(w1..wN) == sum(score_word(w1..w_{i-1}, w_i))
                              + score_word(w1..wN, "</s>")

holds for every scorer by construction.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCorpus, ParseError
from .lattice import SENT_END, SENT_START

__all__ = [
    "UNK",
    "SENT_START",
    "SENT_END",
    "Vocabulary",
    "LmScorer",
    "NGramLM",
    "train_ngram",
    "perplexity",
    "sentences_from_text",
    "read_corpus",
    "save_ngram_text",
    "load_ngram_text",
    "save_ngram",
    "load_ngram",
]

UNK = "<unk>"

_RESERVED = (SENT_START, SENT_END, UNK)

_MODEL_HEADER = "NGLM v1"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token set; reserved tokens first, then sorted corpus types."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for tok in _RESERVED:
            if tok not in self._index:
                raise ValueError(f"vocabulary is missing reserved token {tok!r}")

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        extra = sorted(set(words) - set(_RESERVED))
        return cls(tokens=_RESERVED + tuple(extra))

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def event_tokens(self) -> tuple[str, ...]:
        """Tokens that can be predicted: everything except the start token."""
        return tuple(t for t in self.tokens if t != SENT_START)


class LmScorer(ABC):
    """Anything that can assign log-probabilities to words in context."""

    @abstractmethod
    def score_word(self, context: Sequence[str], word: str) -> float:
        """ln P(word | context), context being the full sentence prefix."""

    def score_sequence(self, words: Sequence[str]) -> float:
        """Chain-rule sentence log-prob including the end-of-sentence event."""
        words = list(words)
        total = 0.0
        for i, word in enumerate(words):
            total += self.score_word(words[:i], word)
        total += self.score_word(words, SENT_END)
        return total


class NGramLM(LmScorer):
    """Witten-Bell interpolated n-gram model over integer counts.

    The conditional for a context c seen in training is

        P(w | c) = (count(c, w) + T(c) * P(w | shorter c)) / (C(c) + T(c))

    where C(c) is the context's total count and T(c) its number of distinct
    continuation types; an unseen context falls through to the shorter
    context directly, and the level-0 backstop is uniform over the event
    space. This keeps every probability in (0, 1] and each conditional
    normalized.
    """

    def __init__(
        self,
        order: int,
        vocab: Vocabulary,
        counts: Mapping[tuple[str, ...], Mapping[str, int]],
    ):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        self.order = order
        self.vocab = vocab
        self._counts: dict[tuple[str, ...], dict[str, int]] = {
            tuple(ctx): dict(words) for ctx, words in counts.items()
        }
        self._totals = {ctx: sum(words.values()) for ctx, words in self._counts.items()}
        self._types = {ctx: len(words) for ctx, words in self._counts.items()}
        self._events = len(vocab) - 1  # event space excludes <s>

    # -- queries ---------------------------------------------------------

    def count(self, context: Sequence[str], word: str) -> int:
        return self._counts.get(tuple(context), {}).get(word, 0)

    def total_count(self, context: Sequence[str]) -> int:
        """C(context): total events observed after this context."""
        return self._totals.get(tuple(context), 0)

    def continuation_types(self, context: Sequence[str]) -> int:
        """T(context): distinct event types observed after this context."""
        return self._types.get(tuple(context), 0)

    def contexts(self) -> list[tuple[str, ...]]:
        return sorted(self._counts, key=lambda c: (len(c), c))

    # -- scoring ---------------------------------------------------------

    def _event(self, word: str) -> str:
        # <s> is never a legal event; treat a request for it like any OOV.
        if word == SENT_START or word not in self.vocab:
            return UNK
        return word

    def _context_key(self, context: Sequence[str]) -> tuple[str, ...]:
        need = self.order - 1
        ctx = tuple(context)[-need:] if need else ()
        if len(ctx) < need:
            ctx = (SENT_START,) * (need - len(ctx)) + ctx
        return tuple(tok if tok in self.vocab else UNK for tok in ctx)

    def _prob(self, ctx: tuple[str, ...], word: str) -> float:
        if not ctx:
            uniform = 1.0 / self._events
            total = self._totals.get((), 0)
            if total == 0:
                return uniform
            types = self._types[()]
            count = self._counts[()].get(word, 0)
            return (count + types * uniform) / (total + types)
        total = self._totals.get(ctx, 0)
        if total == 0:
            return self._prob(ctx[1:], word)
        types = self._types[ctx]
        count = self._counts[ctx].get(word, 0)
        return (count + types * self._prob(ctx[1:], word)) / (total + types)

    def score_word(self, context: Sequence[str], word: str) -> float:
        return math.log(self._prob(self._context_key(context), self._event(word)))


def _apply_vocab(sentence: Sequence[str], vocab: Vocabulary) -> list[str]:
    # A literal <s> inside a sentence is never a legal event; mirror the
    # score-time mapping so train and test agree.
    return [UNK if tok == SENT_START or tok not in vocab else tok for tok in sentence]


def train_ngram(
    corpus: Iterable[Sequence[str]],
    order: int,
    min_count: int = 1,
) -> NGramLM:
    """Train a Witten-Bell n-gram model.

    Args:
        corpus: sentences as token sequences.
        order: n-gram order, >= 1.
        min_count: vocabulary policy. 1 keeps every observed type (closed
            vocabulary); k > 1 maps types seen fewer than k times to <unk>.

    Raises:
        EmptyCorpus: if the corpus has no sentences.
        ValueError: on a bad order or min_count.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise EmptyCorpus("cannot train on an empty corpus")

    raw_counts = Counter(tok for sent in sentences for tok in sent)
    kept = (tok for tok, c in raw_counts.items() if c >= min_count)
    vocab = Vocabulary.from_words(kept)

    counts: dict[tuple[str, ...], Counter] = {}
    hist_len = order - 1
    for sent in sentences:
        events = _apply_vocab(sent, vocab) + [SENT_END]
        hist = [SENT_START] * hist_len
        for event in events:
            for m in range(order):
                ctx = tuple(hist[len(hist) - m :])
                counts.setdefault(ctx, Counter())[event] += 1
            if hist_len:
                hist = (hist + [event])[-hist_len:]
    return NGramLM(order=order, vocab=vocab, counts=counts)


def perplexity(scorer: LmScorer, corpus: Iterable[Sequence[str]]) -> float:
    """Corpus perplexity: exp of minus the mean per-event log-prob.

    Events are all words plus one end-of-sentence event per sentence.

    Raises:
        EmptyCorpus: if the corpus has no sentences.
    """
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise EmptyCorpus("cannot compute perplexity of an empty corpus")
    total = 0.0
    events = 0
    for sent in sentences:
        total += scorer.score_sequence(sent)
        events += len(sent) + 1
    return math.exp(-total / events)


def sentences_from_text(text: str) -> list[list[str]]:
    """Whitespace-tokenize one sentence per line; blank lines are skipped."""
    return [line.split() for line in text.splitlines() if line.strip()]


def read_corpus(path: str | Path) -> list[list[str]]:
    """Read a UTF-8 corpus file, one whitespace-tokenized sentence per line."""
    return sentences_from_text(Path(path).read_text(encoding="utf-8"))


# -- serialization -------------------------------------------------------
#
# NGLM v1 layout (UTF-8, LF):
#   NGLM v1
#   order<TAB>N
#   vocab<TAB>V
#   <one token per line, V lines, in vocabulary order>
#   counts<TAB>M
#   <context words space-joined><TAB>word<TAB>count   (M lines, all context
#    lengths 0..order-1, sorted by context length, context, word)


def save_ngram_text(lm: NGramLM) -> str:
    """Serialize a model to its canonical NGLM v1 text."""
    lines = [_MODEL_HEADER, f"order\t{lm.order}", f"vocab\t{len(lm.vocab)}"]
    lines.extend(lm.vocab.tokens)
    rows = [
        (ctx, word, count)
        for ctx in lm.contexts()
        for word, count in sorted(lm._counts[ctx].items())
    ]
    lines.append(f"counts\t{len(rows)}")
    lines.extend(f"{' '.join(ctx)}\t{word}\t{count}" for ctx, word, count in rows)
    return "\n".join(lines) + "\n"


def load_ngram_text(text: str) -> NGramLM:
    """Parse NGLM v1 text back into a model. Exact inverse of save_ngram_text.

    Raises:
        ParseError: on any deviation from the format.
    """
    lines = text.splitlines()
    pos = 0

    def take(expect: str | None = None) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(pos + 1, "unexpected end of model file")
        line = lines[pos]
        pos += 1
        if expect is not None and not line.startswith(expect + "\t"):
            raise ParseError(pos, f"expected {expect!r} line")
        return line

    if take() != _MODEL_HEADER:
        raise ParseError(1, f"bad header, expected {_MODEL_HEADER!r}")
    try:
        order = int(take("order").split("\t", 1)[1])
        vocab_size = int(take("vocab").split("\t", 1)[1])
    except ValueError as exc:
        raise ParseError(pos, f"bad integer field: {exc}") from None

    tokens = []
    for _ in range(vocab_size):
        tok = take()
        if not tok or any(ch.isspace() for ch in tok):
            raise ParseError(pos, f"bad vocabulary token {tok!r}")
        tokens.append(tok)
    try:
        vocab = Vocabulary(tuple(tokens))
    except ValueError as exc:
        raise ParseError(pos, str(exc)) from None

    try:
        n_rows = int(take("counts").split("\t", 1)[1])
    except ValueError as exc:
        raise ParseError(pos, f"bad integer field: {exc}") from None
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    for _ in range(n_rows):
        row = take()
        parts = row.split("\t")
        if len(parts) != 3:
            raise ParseError(pos, "count line needs context<TAB>word<TAB>count")
        ctx = tuple(parts[0].split())
        if len(ctx) >= order:
            raise ParseError(pos, f"context longer than order-1: {parts[0]!r}")
        try:
            count = int(parts[2])
        except ValueError:
            raise ParseError(pos, f"bad count {parts[2]!r}") from None
        if count < 1:
            raise ParseError(pos, f"count must be positive, got {count}")
        if parts[1] in counts.setdefault(ctx, {}):
            raise ParseError(pos, f"duplicate count row for {parts[0]!r} {parts[1]!r}")
        counts[ctx][parts[1]] = count
    if any(line.strip() for line in lines[pos:]):
        raise ParseError(pos + 1, "trailing content after counts")
    try:
        return NGramLM(order=order, vocab=vocab, counts=counts)
    except ValueError as exc:
        raise ParseError(0, str(exc)) from None


def save_ngram(lm: NGramLM, path: str | Path) -> None:
    Path(path).write_text(save_ngram_text(lm), encoding="utf-8")


def load_ngram(path: str | Path) -> NGramLM:
    return load_ngram_text(Path(path).read_text(encoding="utf-8"))
