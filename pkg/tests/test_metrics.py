"""Metric behaviour against the independent brute-force oracles."""

import math

import numpy as np
import pytest

from oracles import (
    oracle_bleu_corpus, oracle_meteor, oracle_meteor_chunks, oracle_rouge,
    oracle_smoothed, random_pairs as _random_pairs,
)

from comgen.metrics import (
    EvalPair, MetricReport, bleu_corpus, evaluate, evaluate_pairs, meteor,
    meteor_alignment, rouge_l, smoothed_bleu,
)


def random_pairs(n, rng, max_len=20, vocab=10):
    return _random_pairs(n, rng, max_len, vocab, pair_cls=EvalPair)

# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------


class TestWorkedExamples:
    def test_bleu2_partial_overlap(self):
        pair = EvalPair("returns the file name".split(), "returns the name".split())
        scores = bleu_corpus([pair])
        # p1 = 1, p2 = 1/2, bp = exp(-1/3)
        assert scores[1] == pytest.approx(50.67, abs=0.01)

    def test_identity_pair_all_100(self):
        pair = EvalPair(list("abcd"), list("abcd"))
        assert bleu_corpus([pair]) == [100.0] * 4
        assert smoothed_bleu(pair) == pytest.approx(100.0)
        assert rouge_l(pair) == pytest.approx(100.0)

    def test_disjoint_vocab_bleu1_zero(self):
        assert bleu_corpus([EvalPair(list("ab"), list("cd"))])[0] == 0.0

    def test_rouge_transposition(self):
        assert rouge_l(EvalPair("a b c d".split(), "a c b d".split())) \
            == pytest.approx(75.0, abs=0.01)

    def test_rouge_empty_hypothesis(self):
        assert rouge_l(EvalPair(["a"], [])) == 0.0

    def test_meteor_identity_with_penalty(self):
        score = meteor(EvalPair("returns the name".split(),
                                "returns the name".split()))
        assert score == pytest.approx(98.15, abs=0.01)

    def test_meteor_zero_overlap(self):
        assert meteor(EvalPair(list("ab"), list("cd"))) == 0.0

    def test_meteor_fragmentation_penalty_monotone(self):
        ref = "a b c d e f".split()
        one_chunk = meteor(EvalPair(ref, "a b c".split()))
        three_chunks = meteor(EvalPair(ref, "a x c y e z".split()))
        # hyp lengths differ; compare equal-m equal-length arrangements
        contiguous = meteor(EvalPair(ref, "a b c x y z".split()))
        assert contiguous > three_chunks
        assert one_chunk > three_chunks

    def test_smoothed_short_hyp_positive(self):
        assert smoothed_bleu(EvalPair("a b c d".split(), ["a"])) > 0.0

    def test_smoothed_direct_arithmetic(self):
        got = smoothed_bleu(EvalPair(list("abcd"), list("abc")))
        assert got == pytest.approx(100 * math.exp(1 - 4 / 3), abs=1e-9)


# ---------------------------------------------------------------------------
# oracle sweeps and properties
# ---------------------------------------------------------------------------


class TestOracleAgreement:
    def test_bleu_against_oracle(self):
        rng = np.random.default_rng(10)
        pairs = random_pairs(60, rng)
        got = bleu_corpus(pairs)
        want = oracle_bleu_corpus(pairs)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_sentence_metrics_against_oracles(self):
        rng = np.random.default_rng(11)
        for pair in random_pairs(60, rng):
            assert smoothed_bleu(pair) == pytest.approx(
                oracle_smoothed(pair.reference, pair.hypothesis), abs=1e-9)
            assert rouge_l(pair) == pytest.approx(
                oracle_rouge(pair.reference, pair.hypothesis), abs=1e-9)

    def test_meteor_against_exhaustive_oracle(self):
        rng = np.random.default_rng(12)
        for pair in random_pairs(40, rng, max_len=9, vocab=5):
            got = meteor(pair)
            want = oracle_meteor(pair.reference, pair.hypothesis)
            assert got == pytest.approx(want, abs=1e-9), \
                (pair.reference, pair.hypothesis)

    def test_meteor_alignment_matches_exhaustive(self):
        rng = np.random.default_rng(13)
        for pair in random_pairs(40, rng, max_len=8, vocab=4):
            if not pair.hypothesis:
                continue
            assert meteor_alignment(pair.reference, pair.hypothesis) \
                == oracle_meteor_chunks(pair.reference, pair.hypothesis)


class TestProperties:
    def test_bleu_monotone_nonincreasing_in_n(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            pairs = random_pairs(8, rng)
            scores = bleu_corpus(pairs)
            assert all(a >= b - 1e-9 for a, b in zip(scores, scores[1:]))

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(15)
        pairs = random_pairs(20, rng)
        mapping = {f"w{i}": f"q{(i * 7) % 10}x" for i in range(10)}
        relabeled = [EvalPair([mapping[t] for t in p.reference],
                              [mapping[t] for t in p.hypothesis])
                     for p in pairs]
        a, b = evaluate_pairs(pairs), evaluate_pairs(relabeled)
        assert a.to_dict() == b.to_dict()

    def test_rouge_symmetric_at_beta_one(self):
        rng = np.random.default_rng(16)
        for pair in random_pairs(30, rng):
            if not pair.hypothesis:
                continue
            fwd = rouge_l(pair)
            rev = rouge_l(EvalPair(pair.hypothesis, pair.reference))
            assert fwd == pytest.approx(rev, abs=1e-9)

    def test_scores_bounded(self):
        rng = np.random.default_rng(17)
        report = evaluate_pairs(random_pairs(30, rng))
        for key, value in report.to_dict().items():
            if key != "n_pairs":
                assert 0.0 <= value <= 100.0


class TestEvaluate:
    def test_identical_files_all_100(self, tmp_path):
        lines = "returns the first name\nadds two small numbers\n"
        refs = tmp_path / "r.txt"
        hyps = tmp_path / "h.txt"
        refs.write_text(lines)
        hyps.write_text(lines)
        report = evaluate(refs, hyps)
        assert report.n_pairs == 2
        assert report.bleu == [100.0] * 4
        assert report.rouge_l == pytest.approx(100.0)

    def test_single_pair_report(self, tmp_path):
        refs = tmp_path / "r.txt"
        hyps = tmp_path / "h.txt"
        refs.write_text("counts the items\n")
        hyps.write_text("counts all items\n")
        report = evaluate(refs, hyps)
        assert isinstance(report, MetricReport) and report.n_pairs == 1

    def test_line_count_mismatch_names_both(self, tmp_path):
        refs = tmp_path / "r.txt"
        hyps = tmp_path / "h.txt"
        refs.write_text("a b c\nd e f\n")
        hyps.write_text("a b c\n")
        with pytest.raises(ValueError, match="2.*1"):
            evaluate(refs, hyps)

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            EvalPair([], ["a"])

