"""Lattice rescoring toolkit: lattices, n-gram LMs, rescoring, WER tooling."""

from .errors import (
    CyclicLattice,
    DuplicateKey,
    EmptyCorpus,
    InvalidProbability,
    KeyNotFound,
    LatticeToolError,
    MalformedPath,
    MissingReference,
    NonFiniteScore,
    NonPositiveWer,
    NoPath,
    OffsetMismatch,
    ParseError,
    ScorerUnavailable,
    ValidationError,
)
from .evaluate import (
    AlignStep,
    EditOp,
    RelativeChange,
    SweepCell,
    SweepReport,
    WerBreakdown,
    align,
    corpus_wer,
    merge_reports,
    relative_change,
    sweep,
    wer_counts,
)
from .formats import (
    ScpIndex,
    iter_ark_entries,
    parse_lattice_text,
    read_ark,
    read_ark_entry,
    read_ark_entry_text,
    read_scp,
    read_transcripts,
    write_ark,
    write_ark_texts,
    write_lattice_text,
    write_scp,
)
from .lattice import (
    EPSILON,
    SENT_END,
    SENT_START,
    AlignmentKind,
    AmKind,
    Arc,
    Lattice,
    LatticeMeta,
    LatticePath,
    PathScore,
    RescoreConfig,
    ValidationReport,
    Violation,
    ViolationKind,
    best_path,
    combine_totals,
    expand_for_order,
    n_best,
    path_score,
    prune,
    to_dot,
    topo_order,
    validate,
)
from .lm import (
    UNK,
    LmScorer,
    NGramLM,
    Vocabulary,
    load_ngram,
    load_ngram_text,
    perplexity,
    read_corpus,
    save_ngram,
    save_ngram_text,
    sentences_from_text,
    train_ngram,
)
from .rescore import (
    ExternalScorer,
    Hypothesis,
    NBestList,
    convert_neural_scores,
    effective_lm,
    nbest_from_paths,
    rescore_lattice,
    rescore_nbest,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "LatticeToolError",
    "CyclicLattice",
    "NoPath",
    "MalformedPath",
    "ValidationError",
    "EmptyCorpus",
    "NonFiniteScore",
    "InvalidProbability",
    "ScorerUnavailable",
    "ParseError",
    "KeyNotFound",
    "OffsetMismatch",
    "DuplicateKey",
    "MissingReference",
    "NonPositiveWer",
    # lattice
    "EPSILON",
    "SENT_START",
    "SENT_END",
    "Arc",
    "AmKind",
    "AlignmentKind",
    "LatticeMeta",
    "Lattice",
    "RescoreConfig",
    "PathScore",
    "LatticePath",
    "ViolationKind",
    "Violation",
    "ValidationReport",
    "combine_totals",
    "validate",
    "topo_order",
    "path_score",
    "best_path",
    "n_best",
    "expand_for_order",
    "prune",
    "to_dot",
    # lm
    "UNK",
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
    # rescore
    "Hypothesis",
    "NBestList",
    "effective_lm",
    "convert_neural_scores",
    "rescore_lattice",
    "nbest_from_paths",
    "rescore_nbest",
    "ExternalScorer",
    # formats
    "parse_lattice_text",
    "write_lattice_text",
    "write_ark",
    "write_ark_texts",
    "write_scp",
    "iter_ark_entries",
    "read_ark",
    "ScpIndex",
    "read_scp",
    "read_ark_entry",
    "read_ark_entry_text",
    "read_transcripts",
    # evaluate
    "EditOp",
    "AlignStep",
    "WerBreakdown",
    "RelativeChange",
    "align",
    "wer_counts",
    "corpus_wer",
    "relative_change",
    "SweepCell",
    "SweepReport",
    "sweep",
    "merge_reports",
]
