"""Tests for accuracy/retrieval metrics and the non-neural baselines."""

import math

import numpy as np
import pytest

from kbvqa.encoding import reference_profile
from kbvqa.errors import DataError
from kbvqa.evaluation import (
    EvaluationReport,
    accuracy_by_type,
    baseline_length,
    baseline_similarity,
    baseline_tfidf_train,
    format_accuracy_table,
    format_retrieval_table,
    rank_of_gold,
    retrieval_metrics,
    tfidf_loss,
)
from kbvqa.retrieval import RankedKnowledge
from kbvqa.samples import QASample

PROFILE = reference_profile()


def _sample(sid, gold=0, qtype=None, split="test", answers=None, question="what"):
    return QASample(
        id=sid,
        question=question,
        answers=answers or ["alpha one", "beta two", "gamma three", "delta four"],
        gold_index=gold,
        split=split,
        question_type=qtype,
    )


class TestAccuracyByType:
    def test_all_correct(self):
        samples = [
            _sample(f"s{i}", gold=i % 4, qtype=t)
            for i, t in enumerate(["visual", "textual", "temporal", "knowledge"])
        ]
        predictions = {s.id: s.gold_index for s in samples}
        report = accuracy_by_type(predictions, samples)
        assert report.overall == 1.0
        assert all(v == 1.0 for v in report.per_type_accuracy.values())

    def test_crafted_half_correct_per_type(self):
        samples, predictions = [], {}
        i = 0
        for qtype in ["visual", "textual", "temporal", "knowledge"]:
            for correct in (True, False):
                s = _sample(f"s{i}", gold=1, qtype=qtype)
                samples.append(s)
                predictions[s.id] = 1 if correct else 2
                i += 1
        report = accuracy_by_type(predictions, samples)
        assert report.overall == 0.5
        assert all(v == 0.5 for v in report.per_type_accuracy.values())
        assert report.n_samples == 8

    def test_random_predictions_near_quarter(self):
        rng = np.random.default_rng(0)
        samples = [
            _sample(f"s{i}", gold=int(rng.integers(4))) for i in range(4000)
        ]
        predictions = {s.id: int(rng.integers(4)) for s in samples}
        report = accuracy_by_type(predictions, samples)
        assert abs(report.overall - 0.25) < 0.03

    def test_untyped_samples_count_in_overall_only(self):
        typed = _sample("s0", gold=0, qtype="visual")
        untyped = _sample("s1", gold=0, split="train")
        report = accuracy_by_type({"s0": 1, "s1": 0}, [typed, untyped])
        assert report.overall == 0.5
        assert report.per_type_accuracy["visual"] == 0.0

    def test_missing_prediction_rejected(self):
        with pytest.raises(DataError):
            accuracy_by_type({}, [_sample("s0")])

    def test_overall_decomposes_into_type_counts(self):
        rng = np.random.default_rng(1)
        types = ["visual", "textual", "temporal", "knowledge", None]
        samples, predictions = [], {}
        for i in range(500):
            qtype = types[int(rng.integers(5))]
            s = _sample(
                f"s{i}",
                gold=int(rng.integers(4)),
                qtype=qtype,
                split="test" if qtype else "train",
            )
            samples.append(s)
            predictions[s.id] = int(rng.integers(4))
        report = accuracy_by_type(predictions, samples)
        typed_correct = sum(
            predictions[s.id] == s.gold_index
            for s in samples
            if s.question_type is not None
        )
        untyped_correct = sum(
            predictions[s.id] == s.gold_index
            for s in samples
            if s.question_type is None
        )
        assert report.overall * report.n_samples == pytest.approx(
            typed_correct + untyped_correct
        )


class TestRetrievalMetrics:
    def test_by_definition_example(self):
        report = retrieval_metrics([1, 3, 10])
        assert report.recall_at[1] == pytest.approx(1 / 3)
        assert report.recall_at[5] == pytest.approx(2 / 3)
        assert report.median_rank == 3

    def test_perfect_ranking(self):
        report = retrieval_metrics([1] * 7)
        assert all(v == 1.0 for v in report.recall_at.values())
        assert report.median_rank == 1

    def test_even_count_uses_lower_middle(self):
        assert retrieval_metrics([2, 4]).median_rank == 2
        assert retrieval_metrics([1, 2, 3, 4]).median_rank == 2

    def test_none_ranks_excluded_with_count(self):
        report = retrieval_metrics([1, None, 3, None])
        assert report.excluded == 2
        assert report.n_samples == 2
        assert report.median_rank == 1

    def test_all_excluded_rejected(self):
        with pytest.raises(DataError):
            retrieval_metrics([None, None])

    def test_recall_monotone_in_k(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ranks = list(rng.integers(1, 200, size=30))
            report = retrieval_metrics(ranks)
            ks = sorted(report.recall_at)
            values = [report.recall_at[k] for k in ks]
            assert values == sorted(values)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            ranks = [int(r) for r in rng.integers(1, 150, size=n)]
            report = retrieval_metrics(ranks)
            for k in report.recall_at:
                expected = sum(1 for r in ranks if r <= k) / n
                assert report.recall_at[k] == pytest.approx(expected)
            assert report.median_rank == sorted(ranks)[(n - 1) // 2]


class TestRankOfGold:
    def test_position_is_one_based(self):
        ranked = RankedKnowledge(entries=[(7, 0.9), (3, 0.5), (1, 0.2)], k=3)
        assert rank_of_gold(ranked, 7) == 1
        assert rank_of_gold(ranked, 1) == 3

    def test_absent_gold_is_none(self):
        ranked = RankedKnowledge(entries=[(7, 0.9)], k=1)
        assert rank_of_gold(ranked, 42) is None


class TestBaselineLength:
    def test_longest_with_tie_to_lowest_index(self):
        sample = _sample(
            "s0", answers=["one two three", "a b c d e", "x y", "p q r s t"]
        )
        assert baseline_length(sample, "longest") == 1

    def test_shortest(self):
        sample = _sample(
            "s0", answers=["one two three", "a b c d e", "x y", "p q r s t"]
        )
        assert baseline_length(sample, "shortest") == 2

    def test_unknown_mode_rejected(self):
        with pytest.raises(DataError):
            baseline_length(_sample("s0"), "widest")


class TestBaselineSimilarity:
    def test_answer_equal_to_question_wins_qa_mode(self):
        sample = _sample(
            "s0",
            question="the answer is here",
            answers=["the answer is here", "something else", "another", "more"],
        )
        assert baseline_similarity(sample, PROFILE, mode="qa") == 0

    def test_identical_trio_beats_distinct_in_answers_only_mode(self):
        sample = _sample(
            "s0",
            answers=["same words here", "same words here", "same words here", "odd"],
        )
        assert baseline_similarity(sample, PROFILE, mode="answers-only") == 0

    def test_unknown_mode_rejected(self):
        with pytest.raises(DataError):
            baseline_similarity(_sample("s0"), PROFILE, mode="best")


def _yes_dataset(n, seed):
    """Gold answer always contains the token 'yes'."""
    rng = np.random.default_rng(seed)
    fillers = ["apple", "river", "stone", "cloud", "lamp", "chair", "music"]
    samples = []
    for i in range(n):
        gold = int(rng.integers(4))
        answers = [
            f"{rng.choice(fillers)} {rng.choice(fillers)}" for _ in range(3)
        ]
        answers.insert(gold, f"yes {rng.choice(fillers)}")
        samples.append(
            QASample(
                id=f"s{i}",
                question=f"is the {rng.choice(fillers)} there",
                answers=answers,
                gold_index=gold,
            )
        )
    return samples


class TestTfidfBaseline:
    def test_idf_zero_for_ubiquitous_token(self):
        samples = [
            QASample(
                id=f"s{i}",
                question=f"common question {i}",
                answers=[f"common answer {i} {c}" for c in "abcd"],
                gold_index=0,
            )
            for i in range(10)
        ]
        model = baseline_tfidf_train(samples, epochs=1)
        assert model.idf[model.vocabulary["common"]] == 0.0
        assert model.idf[model.vocabulary["question"]] > 0.0

    def test_learns_keyword_rule(self):
        train = _yes_dataset(200, seed=5)
        test = _yes_dataset(80, seed=6)
        model = baseline_tfidf_train(train, epochs=30, learning_rate=0.05, seed=7)
        accuracy = np.mean([model.predict(s) == s.gold_index for s in test])
        assert accuracy >= 0.9

    def test_training_reduces_loss(self):
        samples = _yes_dataset(100, seed=8)
        before = baseline_tfidf_train(samples, epochs=0)
        after = baseline_tfidf_train(samples, epochs=10, learning_rate=0.05)
        assert tfidf_loss(after, samples) < tfidf_loss(before, samples)

    def test_empty_vocabulary_rejected(self):
        # construct directly to bypass record validation: no tokenizable text
        bad = QASample(
            id="s0", question="", answers=[" "] * 4, gold_index=0
        )
        with pytest.raises(DataError):
            baseline_tfidf_train([bad])

    def test_determinism(self):
        samples = _yes_dataset(30, seed=9)
        a = baseline_tfidf_train(samples, epochs=2, seed=3)
        b = baseline_tfidf_train(samples, epochs=2, seed=3)
        np.testing.assert_array_equal(a.projection, b.projection)
        np.testing.assert_array_equal(a.classifier, b.classifier)

    def test_vocabulary_indexed_by_first_occurrence(self):
        # index order must not depend on set iteration order, which varies
        # with interpreter hash randomization and would desync the random
        # projection rows from their tokens between runs
        samples = [
            QASample(
                id="s0",
                question="zebra yak zebra",
                answers=["apple", "yak mango", "apple fig", "zebra"],
                gold_index=0,
            )
        ]
        model = baseline_tfidf_train(samples, epochs=0)
        expected = ["zebra", "yak", "apple", "mango", "fig"]
        assert list(model.vocabulary) == expected
        assert [model.vocabulary[t] for t in expected] == [0, 1, 2, 3, 4]


class TestTables:
    def test_accuracy_table_columns(self):
        report = EvaluationReport(
            per_type_accuracy={
                "visual": 0.5, "textual": 0.25, "temporal": 1.0, "knowledge": 0.0,
            },
            overall=0.4375,
            n_samples=16,
            model_id="demo",
        )
        table = format_accuracy_table([report])
        lines = table.splitlines()
        assert "Vis." in lines[0] and "All" in lines[0]
        assert "demo" in lines[2]
        assert "0.438" in lines[2]

    def test_retrieval_table_columns(self):
        report = retrieval_metrics([1, 3, 10])
        table = format_retrieval_table(report)
        assert "R@1" in table and "MR" in table
        assert "3" in table.splitlines()[2]
