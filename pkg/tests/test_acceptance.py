"""Acceptance suite: one test per release criterion, at pinned tolerance.

Each test exercises one end-to-end guarantee the package ships with and
finishes by printing a single ``[ACCEPT]`` line with the measured
outcome; ``pytest -v`` then shows one pass/fail verdict per criterion.
Criteria that need resources this environment lacks (the licensed
full dataset, a real encoder service) are skipped, not faked.
"""

import itertools
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from kbvqa.encoding import reference_profile
from kbvqa.evaluation import (
    RECALL_KS,
    accuracy_by_type,
    rank_of_gold,
    retrieval_metrics,
)
from kbvqa.ingestion import (
    SKIP_COST,
    SubtitleLine,
    TranscriptLine,
    alignment_score,
    jaccard,
    segment_scene,
)
from kbvqa.knowledge import KnowledgeBase, KnowledgeInstance, dedup, embed_kb
from kbvqa.nn import (
    LinearHead,
    cross_entropy,
    init_weights,
    logistic_loss_and_grads,
    sigmoid,
    softmax,
)
from kbvqa.reasoning import (
    PROJECTION_DIM,
    ProjectionLayer,
    reasoning_loss_and_grads,
    run_variant,
    train_reasoning,
)
from kbvqa.retrieval import (
    build_retrieval_input,
    canonical_answers,
    resolve_gold_ids,
    retrieve,
    train_prior_head,
    train_scoring_head,
)
from kbvqa.samples import QASample, QUESTION_TYPES, split_samples
from kbvqa.synthetic import (
    make_synthetic_dataset,
    synthetic_reasoning_config,
    synthetic_retrieval_config,
)


def accept(criterion: str, detail: str) -> None:
    print(f"[ACCEPT] {criterion}: PASS ({detail})")


def closure_partition(embeddings: np.ndarray, threshold: float) -> set[frozenset]:
    """Brute-force oracle: threshold the cosine matrix, close transitively."""
    unit = embeddings / np.linalg.norm(embeddings, axis=1, keepdims=True)
    adjacency = (unit @ unit.T) > threshold
    np.fill_diagonal(adjacency, True)
    reach = adjacency.astype(np.int64)
    while True:
        grown = ((reach @ reach) > 0).astype(np.int64)
        if np.array_equal(grown, reach):
            break
        reach = grown
    return {frozenset(np.flatnonzero(row).tolist()) for row in reach}


class TestDedupOracle:
    def test_partition_matches_transitive_closure_on_200_random_kbs(self):
        rng = np.random.default_rng(991)
        started = time.perf_counter()
        for _ in range(200):
            n = int(rng.integers(1, 51))
            dim = int(rng.integers(3, 9))
            n_centers = int(rng.integers(1, n + 1))
            centers = rng.normal(size=(n_centers, dim))
            spread = float(rng.uniform(0.02, 0.8))
            embeddings = (
                centers[rng.integers(n_centers, size=n)]
                + spread * rng.normal(size=(n, dim))
            )
            threshold = float(rng.uniform(0.05, 0.999))
            kb = KnowledgeBase(
                [
                    KnowledgeInstance(id=i, text=f"item {i}", embedding=embeddings[i])
                    for i in range(n)
                ],
                reference_profile(dim),
            )
            _, report = dedup(kb, threshold=threshold)
            got = {frozenset(cluster) for cluster in report.clusters}
            assert got == closure_partition(embeddings, threshold)
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0
        accept("dedup-oracle", f"200 KBs identical partitions in {elapsed:.2f}s")


class TestOrderInvariance:
    def test_all_24_answer_permutations_leave_pipeline_unchanged(self):
        profile = reference_profile()
        samples, kb, features = make_synthetic_dataset(
            n_train=100, n_val=0, n_test=0, kb_size=40
        )
        memo: dict = {}
        embed_kb(kb, memo=memo)
        rng = np.random.default_rng(7)
        prior = LinearHead(init_weights(rng, profile.dim, profile.dim), 0.1)
        scoring = LinearHead(init_weights(rng, profile.dim, profile.dim), -0.05)
        config = synthetic_retrieval_config(top_k=5)
        reasoning_config = synthetic_reasoning_config(epochs=1)

        baseline = {
            s.id: retrieve(s, kb, prior, scoring, config, profile, memo=memo)
            for s in samples
        }
        retrieved_texts = {
            sid: [kb.instances[i].text for i in ranking.ids()]
            for sid, ranking in baseline.items()
        }
        model = train_reasoning(
            samples[:12],
            features,
            retrieved_texts,
            reasoning_config,
            profile,
            variant="full",
            memo=memo,
        )
        base_preds = {
            s.id: p.predicted
            for s, p in zip(
                samples,
                run_variant(
                    samples, model, reasoning_config, "full",
                    features, retrieved_texts, memo=memo,
                ),
            )
        }

        checked = 0
        for sample in samples:
            canon = canonical_answers(sample, prior, profile, memo=memo)
            reference_seq = build_retrieval_input(
                sample.question, canon, "probe knowledge", config.token_budget
            )
            for perm in itertools.permutations(range(4)):
                shuffled = replace(
                    sample,
                    answers=[sample.answers[c] for c in perm],
                    gold_index=perm.index(sample.gold_index),
                )
                seq = build_retrieval_input(
                    shuffled.question,
                    canonical_answers(shuffled, prior, profile, memo=memo),
                    "probe knowledge",
                    config.token_budget,
                )
                assert seq.ids == reference_seq.ids
                ranked = retrieve(
                    shuffled, kb, prior, scoring, config, profile, memo=memo
                )
                assert ranked.entries == baseline[sample.id].entries
                pred = run_variant(
                    [shuffled], model, reasoning_config, "full",
                    features, retrieved_texts, memo=memo,
                )[0].predicted
                assert pred == perm.index(base_preds[sample.id])
                checked += 1
        accept("order-invariance", f"{checked} sample-permutations, zero drift")


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return np.abs(analytic - numeric) / denom


def central_difference(loss_fn, params: np.ndarray, step: float) -> np.ndarray:
    """Numeric gradient of a scalar loss over a flat parameter vector."""
    numeric = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += step
        plus = loss_fn(bumped)
        bumped[i] -= 2 * step
        minus = loss_fn(bumped)
        numeric[i] = (plus - minus) / (2 * step)
    return numeric


class TestGradientChecks:
    STEP = 1e-5
    TOLERANCE = 1e-4

    def test_both_losses_on_20_random_batches(self):
        rng = np.random.default_rng(1203)
        worst = 0.0

        for _ in range(10):
            batch, dim = int(rng.integers(2, 12)), int(rng.integers(3, 16))
            u = rng.normal(size=(batch, dim))
            y = rng.integers(0, 2, size=batch).astype(np.float64)
            weights = rng.normal(size=dim)
            bias = float(rng.normal())
            _, grads = logistic_loss_and_grads(u, y, weights, bias)
            analytic = np.concatenate([grads["w"], grads["b"]])

            def loss_fn(flat):
                return logistic_loss_and_grads(u, y, flat[:-1], float(flat[-1]))[0]

            numeric = central_difference(
                loss_fn, np.concatenate([weights, [bias]]), self.STEP
            )
            worst = max(worst, float(relative_errors(analytic, numeric).max()))

        for trial in range(10):
            batch, enc = int(rng.integers(2, 8)), int(rng.integers(3, 10))
            gold = rng.integers(0, 4, size=batch)
            fused = trial % 2 == 1
            if not fused:
                u = rng.normal(size=(batch, 4, enc))
                head = LinearHead(rng.normal(size=enc), float(rng.normal()))
                _, grads = reasoning_loss_and_grads(u, None, gold, head)
                analytic = np.concatenate([grads["w"], grads["b"]])

                def loss_fn(flat):
                    return reasoning_loss_and_grads(
                        u, None, gold, LinearHead(flat[:-1], float(flat[-1]))
                    )[0]

                packed = np.concatenate([head.weights, [head.bias]])
            else:
                in_dim = int(rng.integers(2, 5))
                u = rng.normal(size=(batch, 4, enc))
                x = rng.normal(size=(batch, in_dim))
                head = LinearHead(
                    rng.normal(size=PROJECTION_DIM + enc), float(rng.normal())
                )
                projection = ProjectionLayer(
                    rng.normal(size=(in_dim, PROJECTION_DIM)),
                    rng.normal(size=PROJECTION_DIM),
                )
                _, grads = reasoning_loss_and_grads(u, x, gold, head, projection)
                analytic = np.concatenate(
                    [
                        grads["w"],
                        grads["b"],
                        grads["matrix"].ravel(),
                        grads["p_bias"],
                    ]
                )
                w_size = PROJECTION_DIM + enc
                m_size = in_dim * PROJECTION_DIM

                def loss_fn(flat):
                    w = flat[:w_size]
                    b = float(flat[w_size])
                    matrix = flat[w_size + 1 : w_size + 1 + m_size].reshape(
                        in_dim, PROJECTION_DIM
                    )
                    p_bias = flat[w_size + 1 + m_size :]
                    return reasoning_loss_and_grads(
                        u, x, gold, LinearHead(w, b), ProjectionLayer(matrix, p_bias)
                    )[0]

                packed = np.concatenate(
                    [head.weights, [head.bias], projection.matrix.ravel(),
                     projection.bias]
                )
            numeric = central_difference(loss_fn, packed, self.STEP)
            worst = max(worst, float(relative_errors(analytic, numeric).max()))

        assert worst < self.TOLERANCE
        accept("gradient-checks", f"20 batches, max relative error {worst:.2e}")


class TestMetricOracles:
    def test_1000_random_fixtures_match_naive_reimplementations(self):
        rng = np.random.default_rng(314)

        for _ in range(500):
            kb_size = int(rng.integers(2, 80))
            n = int(rng.integers(1, 30))
            ranks = [
                None if rng.random() < 0.1 else int(rng.integers(1, kb_size + 1))
                for _ in range(n)
            ]
            resolved = [r for r in ranks if r is not None]
            if not resolved:
                resolved = [1]
                ranks.append(1)
            report = retrieval_metrics(ranks)
            for k in RECALL_KS:
                naive = sum(1 for r in resolved if r <= k) / len(resolved)
                assert report.recall_at[k] == naive
            ordered = sorted(resolved)
            assert report.median_rank == ordered[(len(ordered) - 1) // 2]
            assert report.excluded == len(ranks) - len(resolved)

        answers = ["a", "b", "c", "d"]
        for trial in range(500):
            n = int(rng.integers(1, 50))
            samples = []
            predictions = {}
            for i in range(n):
                qt = rng.choice(list(QUESTION_TYPES) + [None])
                samples.append(
                    QASample(
                        id=f"f{trial}-{i}",
                        question="q",
                        answers=answers,
                        gold_index=int(rng.integers(4)),
                        split="test",
                        question_type=None if qt is None else str(qt),
                    )
                )
                predictions[f"f{trial}-{i}"] = int(rng.integers(4))
            report = accuracy_by_type(predictions, samples)
            hits = [
                int(predictions[s.id] == s.gold_index) for s in samples
            ]
            assert report.overall == sum(hits) / n
            for qt in QUESTION_TYPES:
                typed = [
                    h
                    for h, s in zip(hits, samples)
                    if s.question_type == qt
                ]
                naive = float(np.mean(typed)) if typed else 0.0
                assert report.per_type_accuracy[qt] == naive

        accept("metric-oracles", "1000 fixtures, exact agreement")


class TestSyntheticEndToEnd:
    def test_generator_contract_and_pipeline_quality(self):
        started = time.perf_counter()
        profile = reference_profile()
        samples, kb, features = make_synthetic_dataset()
        splits = split_samples(samples)
        assert (len(splits["train"]), len(splits["val"]), len(splits["test"])) == (
            400,
            100,
            100,
        )
        assert kb.size == 150
        memo: dict = {}
        embed_kb(kb, memo=memo)
        kb, _ = dedup(kb)

        config = synthetic_retrieval_config()
        prior = train_prior_head(splits["train"], config, profile, memo=memo)
        scoring = train_scoring_head(
            splits["train"], kb, config, prior, profile, memo=memo
        )

        rankings = {
            s.id: retrieve(s, kb, prior, scoring, config, profile, memo=memo)
            for s in samples
        }
        gold_ids = resolve_gold_ids(samples, kb, memo=memo)
        full_config = replace(config, top_k=kb.size)
        test = splits["test"]
        ranks = [
            rank_of_gold(
                retrieve(s, kb, prior, scoring, full_config, profile, memo=memo),
                gold_ids[s.id],
            )
            for s in test
        ]
        retrieval_report = retrieval_metrics(ranks)

        retrieved_texts = {
            sid: [kb.instances[i].text for i in ranking.ids()]
            for sid, ranking in rankings.items()
        }
        reasoning_config = synthetic_reasoning_config()
        model = train_reasoning(
            splits["train"],
            features,
            retrieved_texts,
            reasoning_config,
            profile,
            variant="full",
            val_samples=splits["val"],
            memo=memo,
        )
        predictions = run_variant(
            test, model, reasoning_config, "full", features, retrieved_texts, memo=memo
        )
        accuracy = float(
            np.mean([p.predicted == s.gold_index for p, s in zip(predictions, test)])
        )
        elapsed = time.perf_counter() - started

        assert retrieval_report.recall_at[5] >= 0.80
        assert accuracy >= 0.90
        assert elapsed < 120.0
        accept(
            "synthetic-end-to-end",
            f"accuracy {accuracy:.3f}, R@5 {retrieval_report.recall_at[5]:.3f}, "
            f"{elapsed:.1f}s",
        )


class TestTrivialValues:
    def test_fixed_points_of_the_numeric_kernels(self):
        assert sigmoid(0.0) == 0.5
        assert abs(cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3])) - np.log(4)) <= 1e-9
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(50, 4)) * 30
        sums = softmax(logits, axis=-1).sum(axis=-1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-9
        from kbvqa.knowledge import similarity

        for _ in range(50):
            v = rng.normal(size=8)
            assert abs(similarity(v, v) - 1.0) <= 1e-9
        accept("trivial-values", "sigmoid/cross-entropy/softmax/cosine fixed points")


def enumerate_alignment_best(overlap: np.ndarray) -> float:
    """Exponential enumeration of every monotone alignment, no memoization."""
    n, m = overlap.shape

    def best(i, j):
        if i == n and j == m:
            return 0.0
        options = []
        if i < n and j < m and overlap[i, j] > 0.0:
            options.append(overlap[i, j] + best(i + 1, j + 1))
        if j < m:
            options.append(SKIP_COST + best(i, j + 1))
        if i < n:
            options.append(SKIP_COST + best(i + 1, j))
        return max(options)

    return best(0, 0)


class TestSegmentationAndAlignment:
    def test_clip_tiling_is_exact(self):
        rng = np.random.default_rng(55)
        durations = [0.5, 5.0, 19.99, 20.0, 20.01, 24.99, 25.0, 40.0, 60.0, 62.0, 65.0]
        durations += list(rng.uniform(0.2, 400.0, size=300))
        checked = 0
        for duration in durations:
            start = float(rng.uniform(0.0, 5000.0))
            end = start + float(duration)
            clips = segment_scene(7, start, end)
            assert clips[0].start == start
            assert clips[-1].end == end
            for left, right in zip(clips, clips[1:]):
                assert left.end == right.start
            for clip in clips[:-1]:
                assert abs((clip.end - clip.start) - 20.0) < 1e-9
            last = clips[-1].end - clips[-1].start
            if len(clips) > 1:
                assert 5.0 - 1e-9 <= last <= 25.0 + 1e-9
            else:
                assert last <= 25.0 + 1e-9
            checked += len(clips)
        accept("segmentation-tiling", f"{len(durations)} scenes, {checked} clips exact")

    def test_alignment_equals_exhaustive_enumeration_up_to_8x8(self):
        rng = np.random.default_rng(56)
        words = ["alpha", "beta", "gamma", "delta", "epsilon"]

        def random_text():
            k = int(rng.integers(1, 4))
            return " ".join(rng.choice(words, size=k))

        cases = 0
        for n in range(1, 9):
            for m in range(1, 9):
                subs = [
                    SubtitleLine(start=float(i), end=i + 0.5, text=random_text())
                    for i in range(n)
                ]
                transcript = [
                    TranscriptLine(speaker=f"s{j}", text=random_text())
                    for j in range(m)
                ]
                overlap = np.array(
                    [
                        [jaccard(s.text, t.text) for t in transcript]
                        for s in subs
                    ]
                )
                expected = enumerate_alignment_best(overlap)
                got = alignment_score(subs, transcript)
                assert abs(got - expected) <= 1e-9
                cases += 1
        assert cases == 64
        accept("alignment-oracle", "all sizes 1..8 x 1..8 equal exhaustive search")


FULL_DATA_READY = bool(
    os.environ.get("KBVQA_DATASET") and os.environ.get("KBVQA_BACKEND")
)


@pytest.mark.skipif(
    not FULL_DATA_READY,
    reason="set KBVQA_DATASET and KBVQA_BACKEND to run full-data target checks",
)
class TestFullDataTargets:
    """Documented targets for runs on the licensed dataset with a real backend.

    These numbers are recorded expectations for the complete corpus and
    a trained contextual encoder; they cannot be reached with the
    in-process reference encoder and are therefore gated on the
    environment providing both resources.
    """

    def test_documented_full_data_targets(self, tmp_path):
        from kbvqa.pipeline import PipelineConfig, PipelineContext, run_pipeline

        report_by_variant = {}
        for variant in ("full", "gt"):
            config = PipelineConfig(
                dataset=os.environ["KBVQA_DATASET"],
                features=os.environ.get("KBVQA_FEATURES"),
                backend=os.environ["KBVQA_BACKEND"],
                workdir=str(tmp_path / variant),
                variant=variant,
            )
            run_pipeline(PipelineContext(config))
            import json

            report_by_variant[variant] = json.loads(
                (tmp_path / variant / "report.json").read_text()
            )

        full = report_by_variant["full"]
        accuracy = {r["model_id"]: r["overall"] for r in full["accuracy"]}
        assert abs(accuracy["full"] - 0.652) <= 0.02
        assert abs(accuracy["longest"] - 0.336) <= 0.01
        assert abs(accuracy["random"] - 0.250) <= 0.01
        retrieval = full["retrieval"]
        assert abs(retrieval["recall_at"]["1"] - 0.114) <= 0.02
        assert abs(retrieval["median_rank"] - 53) <= 0.2 * 53

        gt = report_by_variant["gt"]
        gt_accuracy = {r["model_id"]: r["overall"] for r in gt["accuracy"]}
        assert abs(gt_accuracy["gt"] - 0.731) <= 0.02
        accept("full-data-targets", "documented targets reproduced")
