import json
import math

import pytest

from latrescore import (
    EPSILON,
    ExternalScorer,
    InvalidProbability,
    LmScorer,
    NGramLM,
    RescoreConfig,
    ScorerUnavailable,
    Vocabulary,
    best_path,
    convert_neural_scores,
    effective_lm,
    n_best,
    nbest_from_paths,
    rescore_lattice,
    rescore_nbest,
    train_ngram,
    validate,
)
from latrescore.rescore import NeuralScoreBatch

from conftest import mock_scorer_command, random_corpus

CFG = RescoreConfig(lm_scale=1.0, wip=0.0, lm_interp=1.0)


class SequenceTableScorer(LmScorer):
    """Stub returning fixed whole-sequence log-probs."""

    def __init__(self, table: dict[tuple[str, ...], float]):
        self.table = table

    def score_word(self, context, word) -> float:
        raise NotImplementedError("sequence-level stub")

    def score_sequence(self, words) -> float:
        return self.table[tuple(words)]


def uniform_unigram() -> NGramLM:
    # No counts anywhere: every event falls through to the 1/5 backstop.
    return NGramLM(order=1, vocab=Vocabulary.from_words(["a", "b", "c"]), counts={})


class TestHelpers:
    def test_effective_lm_blend(self):
        assert effective_lm(-4.0, -2.0, 0.0) == -4.0
        assert effective_lm(-4.0, -2.0, 1.0) == -2.0
        assert effective_lm(-4.0, -2.0, 0.25) == pytest.approx(0.75 * -4.0 + 0.25 * -2.0)

    def test_convert_probability_kind(self):
        out = convert_neural_scores([1.0, 0.5], "probability")
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(math.log(0.5))
        for bad in (0.0, -0.1, 1.5, math.inf):
            with pytest.raises(InvalidProbability):
                convert_neural_scores([bad], "probability")

    def test_convert_log_kind(self):
        assert convert_neural_scores([-1.5, 0.0], "log") == [-1.5, 0.0]
        for bad in (0.1, math.nan):
            with pytest.raises(InvalidProbability):
                convert_neural_scores([bad], "log")

    def test_convert_unknown_kind(self):
        with pytest.raises(ValueError):
            convert_neural_scores([-1.0], "percent")

    def test_score_batch_validation(self):
        with pytest.raises(InvalidProbability):
            NeuralScoreBatch("r", (), (), ())
        with pytest.raises(InvalidProbability):
            NeuralScoreBatch("r", (), ("a",), (-1.0, -2.0))
        with pytest.raises(InvalidProbability):
            NeuralScoreBatch("r", (), ("a",), (0.5,))


class TestRescoreLattice:
    def test_uniform_lm_leaves_ranking_to_acoustics(self, l1):
        rescored = rescore_lattice(l1, uniform_unigram(), CFG)
        assert validate(rescored).ok
        paths = n_best(rescored, 2, CFG)
        # Both paths carry 2 words + sentence end, all scored ln(1/5).
        for path in paths:
            assert path.score.lm_total == pytest.approx(3 * math.log(0.2), abs=1e-9)
        assert paths[0].words == ("a", "c")
        assert paths[0].score.acoustic_total == pytest.approx(-2.0)
        assert paths[1].score.acoustic_total == pytest.approx(-3.5)

    def test_interp_zero_is_identity(self, l1, l2, fixture_corpus):
        lm = train_ngram(fixture_corpus, order=2)
        cfg = RescoreConfig(lm_scale=1.0, wip=0.0, lm_interp=0.0)
        for lattice in (l1, l2):
            rescored = rescore_lattice(lattice, lm, cfg)
            before = best_path(lattice, cfg)
            after = best_path(rescored, cfg)
            assert after.words == before.words
            assert after.score.combined == pytest.approx(before.score.combined, rel=1e-12)

    def test_strong_bigram_flips_ranking(self, l1):
        lm = train_ngram([["b", "c"]] * 5, order=2)
        cfg = RescoreConfig(lm_scale=10.0, wip=0.0, lm_interp=1.0)
        assert best_path(l1, cfg).words == ("b", "c")  # scale alone already favors Pb
        rescored = rescore_lattice(l1, lm, cfg)
        assert best_path(rescored, cfg).words == ("b", "c")
        # And the reverse corpus flips it back.
        lm2 = train_ngram([["a", "c"]] * 5, order=2)
        rescored2 = rescore_lattice(l1, lm2, cfg)
        assert best_path(rescored2, cfg).words == ("a", "c")

    def test_single_final_node_with_eos_arcs(self, l1, fixture_corpus):
        lm = train_ngram(fixture_corpus, order=2)
        rescored = rescore_lattice(l1, lm, CFG)
        assert len(rescored.finals) == 1
        (final_node, final_score), = rescored.finals.items()
        assert final_score == 0.0
        eos_arcs = [a for a in rescored.arcs if a.dst == final_node]
        assert all(a.word == EPSILON for a in eos_arcs)
        # The eos arc carries the old final score on its acoustic field.
        assert eos_arcs[0].acoustic_score == l1.finals[3]

    def test_acoustics_never_altered(self, fixture_corpus):
        lm = train_ngram(fixture_corpus, order=2)
        for lattice in random_corpus(seed=88, count=10):
            rescored = rescore_lattice(lattice, lm, CFG)
            before = sorted(
                (a.word, a.acoustic_score) for a in lattice.arcs
            )
            mapped = sorted(
                (a.word, a.acoustic_score)
                for a in rescored.arcs
                if not (a.word == EPSILON and a.src in range(lattice.num_nodes) and a.dst == rescored.num_nodes - 1)
            )
            # Word arc multiset of acoustic scores is preserved (expansion may copy arcs).
            before_words = {w for w, _ in before}
            for word, ac in mapped:
                if word != EPSILON:
                    assert (word, ac) in before

    def test_needs_finite_order(self, l1):
        with pytest.raises(ValueError):
            rescore_lattice(l1, SequenceTableScorer({}), CFG)


class TestRescoreNBest:
    def test_identity_scorer_keeps_order(self, l1):
        scorer = SequenceTableScorer({("a", "c"): -2.0, ("b", "c"): -0.7})
        result = rescore_nbest(l1, scorer, 2, CFG)
        assert result.utterance_id == "utt1"
        assert [h.words for h in result.hypotheses] == [("a", "c"), ("b", "c")]
        assert result.hypotheses[0].combined == pytest.approx(-4.0)
        assert result.hypotheses[1].combined == pytest.approx(-4.2)
        assert [(h.rank_before, h.rank_after) for h in result.hypotheses] == [(1, 1), (2, 2)]

    def test_promotion_by_new_scores(self, l1):
        scorer = SequenceTableScorer({("a", "c"): -5.0, ("b", "c"): -0.1})
        result = rescore_nbest(l1, scorer, 2, CFG)
        top, runner = result.hypotheses
        assert top.words == ("b", "c")
        assert top.combined == pytest.approx(-3.6)
        assert runner.combined == pytest.approx(-7.0)
        assert (top.rank_before, top.rank_after) == (2, 1)
        assert (runner.rank_before, runner.rank_after) == (1, 2)

    def test_interpolation_blends_original_and_new(self, l1):
        scorer = SequenceTableScorer({("a", "c"): -5.0, ("b", "c"): -0.1})
        cfg = RescoreConfig(lm_scale=1.0, wip=0.0, lm_interp=0.5)
        result = rescore_nbest(l1, scorer, 2, cfg)
        by_words = {h.words: h for h in result.hypotheses}
        expected_ac = -2.0 + (0.5 * -2.0 + 0.5 * -5.0)
        assert by_words[("a", "c")].combined == pytest.approx(expected_ac)

    def test_agreement_with_lattice_rescoring(self, l1, fixture_corpus):
        lm = train_ngram(fixture_corpus, order=2)
        for scale, wip, interp in [(1.0, 0.0, 1.0), (7.0, 0.5, 1.0), (2.0, 0.5, 0.3)]:
            cfg = RescoreConfig(lm_scale=scale, wip=wip, lm_interp=interp)
            via_lattice = n_best(rescore_lattice(l1, lm, cfg), 2, cfg)
            via_nbest = rescore_nbest(l1, lm, 2, cfg).hypotheses
            assert [p.words for p in via_lattice] == [h.words for h in via_nbest]
            for p, h in zip(via_lattice, via_nbest):
                assert p.score.combined == pytest.approx(h.combined, rel=1e-9, abs=1e-9)

    def test_wip_applies_to_new_ranking(self, l2):
        scorer = SequenceTableScorer({("hi",): -1.0, ("h", "i"): -1.0})
        no_wip = rescore_nbest(l2, scorer, 2, RescoreConfig(lm_scale=1.0, wip=0.0, lm_interp=1.0))
        assert no_wip.hypotheses[0].words == ("h", "i")  # acoustics -2.0 beat -3.0
        wip = rescore_nbest(l2, scorer, 2, RescoreConfig(lm_scale=1.0, wip=1.5, lm_interp=1.0))
        assert wip.hypotheses[0].words == ("hi",)

    def test_nbest_from_paths_wraps_without_rescoring(self, l1):
        paths = n_best(l1, 2, CFG)
        wrapped = nbest_from_paths(l1, paths)
        assert wrapped.utterance_id == "utt1"
        for i, hyp in enumerate(wrapped.hypotheses):
            assert hyp.words == paths[i].words
            assert hyp.new_lm_total == hyp.original_lm_total
            assert hyp.rank_before == hyp.rank_after == i + 1


class TestExternalScorer:
    def test_handshake_and_vocab_size(self):
        with ExternalScorer(mock_scorer_command(), timeout=10.0) as scorer:
            assert scorer.vocab_size == 9

    def test_score_batch_shape_and_values(self):
        with ExternalScorer(mock_scorer_command(), timeout=10.0) as scorer:
            batch = scorer.score_batch(["a"], ["b", "c", "b"])
            assert len(batch.logprobs) == 3
            assert batch.logprobs[0] == batch.logprobs[2]
            assert all(lp < 0 for lp in batch.logprobs)
            again = scorer.score_batch(["a"], ["b", "c", "b"])
            assert again.logprobs == batch.logprobs

    def test_full_vocab_normalizes(self):
        vocab = ["<unk>", "</s>", "a", "b", "c", "d", "h", "i", "hi"]
        with ExternalScorer(mock_scorer_command(), timeout=10.0) as scorer:
            batch = scorer.score_batch(["b"], vocab)
            assert sum(math.exp(lp) for lp in batch.logprobs) == pytest.approx(1.0, abs=1e-5)

    def test_table_mode(self, tmp_path):
        table = {"|b": -0.03, "b|c": -0.03, "b c|</s>": -0.04}
        table_path = tmp_path / "table.json"
        table_path.write_text(json.dumps(table))
        with ExternalScorer(mock_scorer_command("--table", str(table_path)), timeout=10.0) as scorer:
            assert scorer.score_word([], "b") == pytest.approx(-0.03)
            assert scorer.score_word(["b"], "c") == pytest.approx(-0.03)

    def test_score_sequence_chains_client_side(self):
        with ExternalScorer(mock_scorer_command(), timeout=10.0) as scorer:
            words = ["a", "b"]
            expected = (
                scorer.score_word([], "a")
                + scorer.score_word(["a"], "b")
                + scorer.score_word(["a", "b"], "</s>")
            )
            assert scorer.score_sequence(words) == pytest.approx(expected, abs=1e-12)

    def test_stale_response_ids_skipped(self):
        with ExternalScorer(mock_scorer_command("--stale-id-first"), timeout=10.0) as scorer:
            batch = scorer.score_batch(["a"], ["b"])
            assert batch.logprobs[0] != 0.0

    def test_error_response_raises(self):
        with ExternalScorer(mock_scorer_command("--error-word", "b"), timeout=10.0) as scorer:
            with pytest.raises(ScorerUnavailable):
                scorer.score_batch([], ["b"])
            # The process stays alive for later requests.
            assert scorer.score_batch([], ["c"]).logprobs[0] < 0

    def test_malformed_response_raises(self):
        with ExternalScorer(mock_scorer_command("--malformed-response"), timeout=2.0) as scorer:
            with pytest.raises(ScorerUnavailable):
                scorer.score_batch([], ["b"])

    def test_missing_hello_times_out(self):
        with pytest.raises(ScorerUnavailable):
            ExternalScorer(mock_scorer_command("--no-hello"), timeout=0.5)

    def test_bad_hello_rejected(self):
        with pytest.raises(ScorerUnavailable):
            ExternalScorer(mock_scorer_command("--bad-hello"), timeout=5.0)

    def test_dead_process_detected(self):
        scorer = ExternalScorer(mock_scorer_command("--exit-after-hello"), timeout=2.0)
        with pytest.raises(ScorerUnavailable):
            scorer.score_batch([], ["a"])
        scorer.close()

    def test_hang_times_out(self):
        with ExternalScorer(mock_scorer_command("--hang"), timeout=0.5) as scorer:
            with pytest.raises(ScorerUnavailable):
                scorer.score_batch([], ["a"])

    def test_close_idempotent(self):
        scorer = ExternalScorer(mock_scorer_command(), timeout=10.0)
        scorer.close()
        scorer.close()
        with pytest.raises(ScorerUnavailable):
            scorer.score_batch([], ["a"])

    def test_drives_nbest_rescoring(self, l1, tmp_path):
        table = {
            "|b": -0.03, "b|c": -0.03, "b c|</s>": -0.04,
            "|a": -2.0, "a|c": -1.5, "a c|</s>": -1.5,
        }
        table_path = tmp_path / "table.json"
        table_path.write_text(json.dumps(table))
        with ExternalScorer(mock_scorer_command("--table", str(table_path)), timeout=10.0) as scorer:
            result = rescore_nbest(l1, scorer, 2, CFG)
        assert result.hypotheses[0].words == ("b", "c")
        assert result.hypotheses[0].combined == pytest.approx(-3.6)
        assert result.hypotheses[1].combined == pytest.approx(-7.0)
