"""Request and response shapes for the HTTP service.

Lattices cross the wire as canonical text blocks rather than structured
JSON: the text format is the interchange format everywhere else, and
round-tripping it keeps scores exact.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class DecodeConfig(BaseModel):
    lm_scale: float = Field(default=7.0, ge=0.0)
    wip: float = Field(default=0.5, ge=0.0)
    lm_interp: float = Field(default=1.0, ge=0.0, le=1.0)


class LatticeRequest(BaseModel):
    lattice_text: str


class ScoredLatticeRequest(BaseModel):
    lattice_text: str
    config: DecodeConfig = DecodeConfig()


class ValidateResponse(BaseModel):
    ok: bool
    violations: list[str]


class PathResponse(BaseModel):
    words: list[str]
    acoustic_total: float
    lm_total: float
    word_count: int
    combined: float


class NBestRequest(BaseModel):
    lattice_text: str
    k: int = Field(default=50, ge=1)
    unique_words: bool = False
    config: DecodeConfig = DecodeConfig()


class NBestResponse(BaseModel):
    utterance_id: str
    paths: list[PathResponse]


class ExpandRequest(BaseModel):
    lattice_text: str
    order: int = Field(ge=1)


class LatticeResponse(BaseModel):
    lattice_text: str


class PruneRequest(BaseModel):
    lattice_text: str
    beam: float = Field(ge=0.0)
    config: DecodeConfig = DecodeConfig()


class DotResponse(BaseModel):
    dot: str


class TrainLmRequest(BaseModel):
    corpus_text: str
    order: int = Field(default=3, ge=1)
    min_count: int = Field(default=1, ge=1)


class LmInfo(BaseModel):
    model_id: str
    order: int
    vocab_size: int


class LmUploadRequest(BaseModel):
    model_text: str


class LmDownloadResponse(BaseModel):
    model_id: str
    model_text: str


class ScoreWordRequest(BaseModel):
    context: list[str]
    word: str


class ScoreWordResponse(BaseModel):
    logprob: float


class ScoreSequenceRequest(BaseModel):
    words: list[str]


class ScoreSequenceResponse(BaseModel):
    logprob: float


class PerplexityRequest(BaseModel):
    corpus_text: str


class PerplexityResponse(BaseModel):
    perplexity: float
    sentences: int


class ScorerRegisterRequest(BaseModel):
    command: list[str] = Field(min_length=1)
    timeout: float = Field(default=30.0, gt=0.0)


class ScorerInfo(BaseModel):
    scorer_id: str
    vocab_size: int


class RescoreLatticeRequest(BaseModel):
    lattice_text: str
    model_id: str
    config: DecodeConfig = DecodeConfig()


class HypothesisModel(BaseModel):
    words: list[str]
    acoustic_total: float
    original_lm_total: float
    new_lm_total: float
    combined: float
    rank_before: int
    rank_after: int


class RescoreNBestRequest(BaseModel):
    lattice_text: str
    model_id: str | None = None
    scorer_id: str | None = None
    k: int = Field(default=50, ge=1)
    unique_words: bool = False
    config: DecodeConfig = DecodeConfig()


class RescoreNBestResponse(BaseModel):
    utterance_id: str
    hypotheses: list[HypothesisModel]


class AlignRequest(BaseModel):
    ref: list[str]
    hyp: list[str]


class AlignStepModel(BaseModel):
    op: str
    ref_word: str | None
    hyp_word: str | None


class AlignResponse(BaseModel):
    steps: list[AlignStepModel]


class WerRequest(BaseModel):
    refs: dict[str, list[str]]
    hyps: dict[str, list[str]]


class WerResponse(BaseModel):
    wer_percent: float
    substitutions: int
    insertions: int
    deletions: int
    ref_words: int


class RelativeChangeRequest(BaseModel):
    pre_wer: float
    post_wer: float


class RelativeChangeResponse(BaseModel):
    paper_convention: float
    standard_convention: float


class SweepRequest(BaseModel):
    lattices: dict[str, str]
    refs: dict[str, list[str]]
    model_id: str | None = None
    scales: list[float] = Field(min_length=1)
    wips: list[float] = Field(min_length=1)
    test_set: str = "test"
    include_baseline: bool = True
    nbest_k: int = Field(default=50, ge=1)
    lm_interp: float = Field(default=1.0, ge=0.0, le=1.0)


class SweepCellModel(BaseModel):
    test_set: str
    lm_scale: float
    wip: float
    wer_percent: float
    substitutions: int
    insertions: int
    deletions: int
    ref_words: int
    baseline_wer_percent: float | None = None
    change_paper: float | None = None
    change_standard: float | None = None


class SweepResponse(BaseModel):
    cells: list[SweepCellModel]
    csv: str
    table: str


class ErrorResponse(BaseModel):
    detail: str
    kind: str
