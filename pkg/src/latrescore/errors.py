"""Exception hierarchy for the lattice rescoring toolkit.

Everything raised on bad data derives from LatticeToolError so callers
(CLI, service) can map data problems to a single exit path without
catching internal programming errors by accident.
"""

from __future__ import annotations

__all__ = [
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
]


class LatticeToolError(Exception):
    """Base class for all data-level errors raised by this package."""


class CyclicLattice(LatticeToolError):
    """The lattice contains a cycle; topological processing is impossible."""


class NoPath(LatticeToolError):
    """No complete path from the start node to any final node."""


class MalformedPath(LatticeToolError):
    """An arc sequence is not a connected start-to-final path."""


class ValidationError(LatticeToolError):
    """A lattice failed validation.

    Carries the offending report so callers can render the violations.
    """

    def __init__(self, report, message: str = "lattice failed validation"):
        self.report = report
        detail = "; ".join(v.describe() for v in report.violations)
        super().__init__(f"{message}: {detail}" if detail else message)


class EmptyCorpus(LatticeToolError):
    """LM training or perplexity was given an empty corpus."""


class NonFiniteScore(LatticeToolError):
    """A score that must be finite is NaN or infinite."""


class InvalidProbability(LatticeToolError):
    """A neural score is outside its declared domain."""


class ScorerUnavailable(LatticeToolError):
    """The external scorer process failed to start, answer, or speak the protocol."""


class ParseError(LatticeToolError):
    """A text input violated its grammar.

    Attributes:
        line: 1-based line number of the offending line, 0 if unknown.
        reason: short human-readable description.
    """

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class KeyNotFound(LatticeToolError):
    """A requested utterance key is absent from an index or table."""


class OffsetMismatch(LatticeToolError):
    """An scp offset did not land on the expected archive entry."""


class DuplicateKey(LatticeToolError):
    """An utterance key occurred more than once where keys must be unique."""


class MissingReference(LatticeToolError):
    """A hypothesis key has no reference transcript."""


class NonPositiveWer(LatticeToolError):
    """Relative change is undefined for non-positive error rates."""
