"""FastAPI service over the lattice toolkit.

All endpoints are thin: parse the wire payload, call one library
operation, serialize the result. Toolkit errors map to 422 except
missing keys, which map to 404. Registries are per-app, so every
create_app() call yields isolated state.
"""

from __future__ import annotations

import hashlib
import uuid
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import KeyNotFound, LatticeToolError
from ..evaluate import (
    align,
    corpus_wer,
    relative_change,
    sweep,
)
from ..formats import parse_lattice_text, write_lattice_text
from ..lattice import (
    RescoreConfig,
    best_path,
    expand_for_order,
    n_best,
    prune,
    to_dot,
    validate,
)
from ..lm import (
    NGramLM,
    load_ngram_text,
    perplexity,
    save_ngram_text,
    sentences_from_text,
    train_ngram,
)
from ..rescore import ExternalScorer, rescore_lattice, rescore_nbest
from . import schemas


class ModelRegistry:
    """In-memory n-gram store keyed by content hash.

    Registering the same model twice returns the same id, so repeated
    train/upload calls are idempotent.
    """

    def __init__(self) -> None:
        self._models: dict[str, tuple[NGramLM, str]] = {}

    @staticmethod
    def _model_id(model_text: str) -> str:
        digest = hashlib.sha256(model_text.encode("utf-8")).hexdigest()
        return f"ng-{digest[:16]}"

    def add(self, lm: NGramLM) -> str:
        text = save_ngram_text(lm)
        model_id = self._model_id(text)
        self._models[model_id] = (lm, text)
        return model_id

    def get(self, model_id: str) -> NGramLM:
        try:
            return self._models[model_id][0]
        except KeyError:
            raise KeyNotFound(f"no model {model_id!r}") from None

    def text(self, model_id: str) -> str:
        try:
            return self._models[model_id][1]
        except KeyError:
            raise KeyNotFound(f"no model {model_id!r}") from None

    def remove(self, model_id: str) -> None:
        if model_id not in self._models:
            raise KeyNotFound(f"no model {model_id!r}")
        del self._models[model_id]

    def items(self) -> list[tuple[str, NGramLM]]:
        return [(model_id, lm) for model_id, (lm, _) in sorted(self._models.items())]


class ScorerRegistry:
    """Live external scorer processes keyed by opaque ids."""

    def __init__(self) -> None:
        self._scorers: dict[str, ExternalScorer] = {}

    def add(self, scorer: ExternalScorer) -> str:
        scorer_id = f"sc-{uuid.uuid4().hex[:16]}"
        self._scorers[scorer_id] = scorer
        return scorer_id

    def get(self, scorer_id: str) -> ExternalScorer:
        try:
            return self._scorers[scorer_id]
        except KeyError:
            raise KeyNotFound(f"no scorer {scorer_id!r}") from None

    def remove(self, scorer_id: str) -> None:
        scorer = self.get(scorer_id)
        scorer.close()
        del self._scorers[scorer_id]

    def items(self) -> list[tuple[str, ExternalScorer]]:
        return sorted(self._scorers.items())

    def close_all(self) -> None:
        for scorer in self._scorers.values():
            scorer.close()
        self._scorers.clear()


def _cfg(config: schemas.DecodeConfig) -> RescoreConfig:
    return RescoreConfig(
        lm_scale=config.lm_scale, wip=config.wip, lm_interp=config.lm_interp
    )


def _path_response(path) -> schemas.PathResponse:
    return schemas.PathResponse(
        words=list(path.words),
        acoustic_total=path.score.acoustic_total,
        lm_total=path.score.lm_total,
        word_count=path.score.word_count,
        combined=path.score.combined,
    )


def create_app() -> FastAPI:
    models = ModelRegistry()
    scorers = ScorerRegistry()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        scorers.close_all()

    app = FastAPI(title="latrescore", version=__version__, lifespan=lifespan)
    app.state.models = models
    app.state.scorers = scorers

    @app.exception_handler(LatticeToolError)
    async def _tool_error(request: Request, exc: LatticeToolError) -> JSONResponse:
        status = 404 if isinstance(exc, KeyNotFound) else 422
        return JSONResponse(
            status_code=status,
            content={"detail": str(exc), "kind": type(exc).__name__},
        )

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"detail": str(exc), "kind": "ValueError"},
        )

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok", "version": __version__}

    # -- lattice operations ------------------------------------------------

    @app.post("/lattice/validate", response_model=schemas.ValidateResponse)
    async def lattice_validate(req: schemas.LatticeRequest) -> schemas.ValidateResponse:
        lattice = parse_lattice_text(req.lattice_text, validate_result=False)
        report = validate(lattice)
        return schemas.ValidateResponse(
            ok=report.ok, violations=[v.describe() for v in report.violations]
        )

    @app.post("/lattice/best-path", response_model=schemas.PathResponse)
    async def lattice_best_path(req: schemas.ScoredLatticeRequest) -> schemas.PathResponse:
        lattice = parse_lattice_text(req.lattice_text)
        return _path_response(best_path(lattice, _cfg(req.config)))

    @app.post("/lattice/nbest", response_model=schemas.NBestResponse)
    async def lattice_nbest(req: schemas.NBestRequest) -> schemas.NBestResponse:
        lattice = parse_lattice_text(req.lattice_text)
        paths = n_best(lattice, req.k, _cfg(req.config), unique_words=req.unique_words)
        return schemas.NBestResponse(
            utterance_id=lattice.meta.utterance_id,
            paths=[_path_response(p) for p in paths],
        )

    @app.post("/lattice/expand", response_model=schemas.LatticeResponse)
    async def lattice_expand(req: schemas.ExpandRequest) -> schemas.LatticeResponse:
        lattice = parse_lattice_text(req.lattice_text)
        expanded = expand_for_order(lattice, req.order)
        return schemas.LatticeResponse(lattice_text=write_lattice_text(expanded))

    @app.post("/lattice/prune", response_model=schemas.LatticeResponse)
    async def lattice_prune(req: schemas.PruneRequest) -> schemas.LatticeResponse:
        lattice = parse_lattice_text(req.lattice_text)
        pruned = prune(lattice, req.beam, _cfg(req.config))
        return schemas.LatticeResponse(lattice_text=write_lattice_text(pruned))

    @app.post("/lattice/dot", response_model=schemas.DotResponse)
    async def lattice_dot(req: schemas.LatticeRequest) -> schemas.DotResponse:
        lattice = parse_lattice_text(req.lattice_text)
        return schemas.DotResponse(dot=to_dot(lattice))

    # -- language models ---------------------------------------------------

    @app.post("/lm/train", response_model=schemas.LmInfo)
    async def lm_train(req: schemas.TrainLmRequest) -> schemas.LmInfo:
        corpus = sentences_from_text(req.corpus_text)
        lm = train_ngram(corpus, order=req.order, min_count=req.min_count)
        model_id = models.add(lm)
        return schemas.LmInfo(model_id=model_id, order=lm.order, vocab_size=len(lm.vocab))

    @app.post("/lm/upload", response_model=schemas.LmInfo)
    async def lm_upload(req: schemas.LmUploadRequest) -> schemas.LmInfo:
        lm = load_ngram_text(req.model_text)
        model_id = models.add(lm)
        return schemas.LmInfo(model_id=model_id, order=lm.order, vocab_size=len(lm.vocab))

    @app.get("/lm", response_model=list[schemas.LmInfo])
    async def lm_list() -> list[schemas.LmInfo]:
        return [
            schemas.LmInfo(model_id=model_id, order=lm.order, vocab_size=len(lm.vocab))
            for model_id, lm in models.items()
        ]

    @app.get("/lm/{model_id}", response_model=schemas.LmDownloadResponse)
    async def lm_download(model_id: str) -> schemas.LmDownloadResponse:
        return schemas.LmDownloadResponse(model_id=model_id, model_text=models.text(model_id))

    @app.delete("/lm/{model_id}", status_code=204)
    async def lm_delete(model_id: str) -> None:
        models.remove(model_id)

    @app.post("/lm/{model_id}/score-word", response_model=schemas.ScoreWordResponse)
    async def lm_score_word(model_id: str, req: schemas.ScoreWordRequest) -> schemas.ScoreWordResponse:
        lm = models.get(model_id)
        return schemas.ScoreWordResponse(logprob=lm.score_word(req.context, req.word))

    @app.post("/lm/{model_id}/score-sequence", response_model=schemas.ScoreSequenceResponse)
    async def lm_score_sequence(
        model_id: str, req: schemas.ScoreSequenceRequest
    ) -> schemas.ScoreSequenceResponse:
        lm = models.get(model_id)
        return schemas.ScoreSequenceResponse(logprob=lm.score_sequence(req.words))

    @app.post("/lm/{model_id}/perplexity", response_model=schemas.PerplexityResponse)
    async def lm_perplexity(model_id: str, req: schemas.PerplexityRequest) -> schemas.PerplexityResponse:
        lm = models.get(model_id)
        corpus = sentences_from_text(req.corpus_text)
        return schemas.PerplexityResponse(
            perplexity=perplexity(lm, corpus), sentences=len(corpus)
        )

    # -- external scorers --------------------------------------------------

    @app.post("/scorer/register", response_model=schemas.ScorerInfo)
    async def scorer_register(req: schemas.ScorerRegisterRequest) -> schemas.ScorerInfo:
        scorer = ExternalScorer(req.command, timeout=req.timeout)
        scorer_id = scorers.add(scorer)
        return schemas.ScorerInfo(scorer_id=scorer_id, vocab_size=scorer.vocab_size)

    @app.get("/scorer", response_model=list[schemas.ScorerInfo])
    async def scorer_list() -> list[schemas.ScorerInfo]:
        return [
            schemas.ScorerInfo(scorer_id=scorer_id, vocab_size=scorer.vocab_size)
            for scorer_id, scorer in scorers.items()
        ]

    @app.delete("/scorer/{scorer_id}", status_code=204)
    async def scorer_delete(scorer_id: str) -> None:
        scorers.remove(scorer_id)

    # -- rescoring -----------------------------------------------------------

    @app.post("/rescore/lattice", response_model=schemas.LatticeResponse)
    async def rescore_lattice_endpoint(req: schemas.RescoreLatticeRequest) -> schemas.LatticeResponse:
        lattice = parse_lattice_text(req.lattice_text)
        lm = models.get(req.model_id)
        rescored = rescore_lattice(lattice, lm, _cfg(req.config))
        return schemas.LatticeResponse(lattice_text=write_lattice_text(rescored))

    @app.post("/rescore/nbest", response_model=schemas.RescoreNBestResponse)
    async def rescore_nbest_endpoint(req: schemas.RescoreNBestRequest) -> schemas.RescoreNBestResponse:
        if (req.model_id is None) == (req.scorer_id is None):
            return JSONResponse(
                status_code=422,
                content={
                    "detail": "exactly one of model_id or scorer_id is required",
                    "kind": "ValueError",
                },
            )
        lattice = parse_lattice_text(req.lattice_text)
        scorer = models.get(req.model_id) if req.model_id else scorers.get(req.scorer_id)
        result = rescore_nbest(
            lattice, scorer, req.k, _cfg(req.config), unique_words=req.unique_words
        )
        return schemas.RescoreNBestResponse(
            utterance_id=result.utterance_id,
            hypotheses=[
                schemas.HypothesisModel(
                    words=list(h.words),
                    acoustic_total=h.acoustic_total,
                    original_lm_total=h.original_lm_total,
                    new_lm_total=h.new_lm_total,
                    combined=h.combined,
                    rank_before=h.rank_before,
                    rank_after=h.rank_after,
                )
                for h in result.hypotheses
            ],
        )

    # -- evaluation ----------------------------------------------------------

    @app.post("/eval/align", response_model=schemas.AlignResponse)
    async def eval_align(req: schemas.AlignRequest) -> schemas.AlignResponse:
        steps = align(req.ref, req.hyp)
        return schemas.AlignResponse(
            steps=[
                schemas.AlignStepModel(op=s.op.value, ref_word=s.ref_word, hyp_word=s.hyp_word)
                for s in steps
            ]
        )

    @app.post("/eval/wer", response_model=schemas.WerResponse)
    async def eval_wer(req: schemas.WerRequest) -> schemas.WerResponse:
        breakdown = corpus_wer(req.refs, req.hyps)
        return schemas.WerResponse(
            wer_percent=breakdown.wer_percent,
            substitutions=breakdown.substitutions,
            insertions=breakdown.insertions,
            deletions=breakdown.deletions,
            ref_words=breakdown.ref_words,
        )

    @app.post("/eval/relative-change", response_model=schemas.RelativeChangeResponse)
    async def eval_relative_change(
        req: schemas.RelativeChangeRequest,
    ) -> schemas.RelativeChangeResponse:
        change = relative_change(req.pre_wer, req.post_wer)
        return schemas.RelativeChangeResponse(
            paper_convention=change.paper_convention,
            standard_convention=change.standard_convention,
        )

    @app.post("/eval/sweep", response_model=schemas.SweepResponse)
    async def eval_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        lattices = {key: parse_lattice_text(text) for key, text in req.lattices.items()}
        lm = models.get(req.model_id) if req.model_id is not None else None
        cfg = RescoreConfig(lm_interp=req.lm_interp)
        report = sweep(
            lattices,
            lm,
            req.refs,
            req.scales,
            req.wips,
            cfg=cfg,
            test_set=req.test_set,
            include_baseline=req.include_baseline,
            nbest_k=req.nbest_k,
        )
        cells = [
            schemas.SweepCellModel(
                test_set=cell.test_set,
                lm_scale=cell.lm_scale,
                wip=cell.wip,
                wer_percent=cell.breakdown.wer_percent,
                substitutions=cell.breakdown.substitutions,
                insertions=cell.breakdown.insertions,
                deletions=cell.breakdown.deletions,
                ref_words=cell.breakdown.ref_words,
                baseline_wer_percent=(
                    cell.baseline.wer_percent if cell.baseline is not None else None
                ),
                change_paper=cell.change.paper_convention if cell.change else None,
                change_standard=cell.change.standard_convention if cell.change else None,
            )
            for cell in report.cells
        ]
        return schemas.SweepResponse(cells=cells, csv=report.to_csv(), table=report.to_table())

    return app


app = create_app()
