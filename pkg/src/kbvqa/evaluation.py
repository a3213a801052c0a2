"""Evaluation metrics and non-neural baselines.

Answer accuracy is reported overall and per question type (visual,
textual, temporal, knowledge).  Retrieval quality is reported as recall
at K and the median rank of the gold knowledge instance.  The baselines
are answer-length selection, embedding-similarity selection, and a
tf-idf 4-way softmax classifier over the question and candidate texts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .encoding import EncoderProfile, mean_word_embedding, tokenize
from .errors import DataError
from .nn import (
    MomentumSGD,
    cross_entropy,
    cross_entropy_grad_logits,
    init_weights,
)
from .retrieval import RankedKnowledge
from .samples import N_ANSWERS, QASample, QUESTION_TYPES

RECALL_KS = (1, 5, 10, 100)
TFIDF_PROJECTION_DIM = 512


@dataclass
class EvaluationReport:
    """Answer accuracy overall and per question type."""

    per_type_accuracy: dict[str, float]
    overall: float
    n_samples: int
    model_id: str

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_samples": self.n_samples,
            "per_type_accuracy": self.per_type_accuracy,
            "overall": self.overall,
        }


@dataclass
class RetrievalEvalReport:
    """Recall at K and median gold rank over evaluated queries."""

    recall_at: dict[int, float]
    median_rank: int
    n_samples: int = 0
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "median_rank": self.median_rank,
            "n_samples": self.n_samples,
            "excluded": self.excluded,
        }


def accuracy_by_type(
    predictions: dict[str, int], samples: list[QASample], model_id: str = ""
) -> EvaluationReport:
    """Accuracy per question type plus overall correct/total.

    Samples without a question type count toward the overall number
    only.  Every sample must have a prediction.
    """
    missing = [s.id for s in samples if s.id not in predictions]
    if missing:
        raise DataError("samples without predictions", offending=missing)
    untyped_gold = [s.id for s in samples if s.gold_index is None]
    if untyped_gold:
        raise DataError("samples without gold_index", offending=untyped_gold)
    correct_total = 0
    by_type: dict[str, list[int]] = {t: [] for t in QUESTION_TYPES}
    for sample in samples:
        hit = int(predictions[sample.id] == sample.gold_index)
        correct_total += hit
        if sample.question_type is not None:
            by_type[sample.question_type].append(hit)
    per_type = {
        t: (float(np.mean(hits)) if hits else 0.0) for t, hits in by_type.items()
    }
    return EvaluationReport(
        per_type_accuracy=per_type,
        overall=correct_total / len(samples) if samples else 0.0,
        n_samples=len(samples),
        model_id=model_id,
    )


def rank_of_gold(ranked: RankedKnowledge, gold_id: int) -> int | None:
    """1-based position of the gold instance in a ranking; None if absent."""
    for position, (kb_id, _) in enumerate(ranked.entries, start=1):
        if kb_id == gold_id:
            return position
    return None


def retrieval_metrics(
    ranks: list[int | None], ks: tuple[int, ...] = RECALL_KS
) -> RetrievalEvalReport:
    """R@K and median rank over resolved gold ranks.

    ``None`` entries (gold never resolved) are excluded and counted.
    The median uses the lower-middle value for even counts, so it is
    always an attained integer rank.
    """
    resolved = sorted(r for r in ranks if r is not None)
    excluded = len(ranks) - len(resolved)
    if not resolved:
        raise DataError("no resolved gold ranks to evaluate")
    recall = {
        k: float(np.mean([r <= k for r in resolved])) for k in ks
    }
    median = resolved[(len(resolved) - 1) // 2]
    return RetrievalEvalReport(
        recall_at=recall,
        median_rank=int(median),
        n_samples=len(resolved),
        excluded=excluded,
    )


def baseline_length(sample: QASample, mode: str = "longest") -> int:
    """Pick the answer with the most (or fewest) whitespace words."""
    counts = [len(answer.split()) for answer in sample.answers]
    if mode == "longest":
        return int(np.argmax(counts))
    if mode == "shortest":
        return int(np.argmin(counts))
    raise DataError(f"unknown length mode {mode!r}")


def _safe_cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def baseline_similarity(
    sample: QASample,
    profile: EncoderProfile,
    mode: str = "qa",
    client=None,
) -> int:
    """Pick the answer most similar to the question or to the other answers.

    Texts are embedded as the mean of their per-word vectors.
    """
    answer_vecs = [
        mean_word_embedding(answer, profile, client=client)
        for answer in sample.answers
    ]
    if mode == "qa":
        question_vec = mean_word_embedding(sample.question, profile, client=client)
        sims = [_safe_cosine(question_vec, v) for v in answer_vecs]
    elif mode == "answers-only":
        sims = []
        for c, vec in enumerate(answer_vecs):
            others = [
                _safe_cosine(vec, other)
                for j, other in enumerate(answer_vecs)
                if j != c
            ]
            sims.append(float(np.mean(others)))
    else:
        raise DataError(f"unknown similarity mode {mode!r}")
    return int(np.argmax(sims))


@dataclass
class TfidfModel:
    """tf-idf text classifier: texts projected to 512 dims, 4-way softmax.

    The question and each candidate answer are tf-idf encoded, projected
    through one shared linear layer, concatenated, and classified.
    """

    vocabulary: dict[str, int]
    idf: np.ndarray
    projection: np.ndarray  # (V, 512)
    classifier: np.ndarray  # (5 * 512, 4)
    classifier_bias: np.ndarray  # (4,)

    def tfidf_vector(self, text: str) -> np.ndarray:
        """Raw-count tf times idf, L2-normalized; zero if nothing known."""
        vec = np.zeros(len(self.vocabulary), dtype=np.float64)
        for token in tokenize(text):
            idx = self.vocabulary.get(token)
            if idx is not None:
                vec[idx] += 1.0
        vec *= self.idf
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec

    def _field_matrix(self, sample: QASample) -> np.ndarray:
        texts = [sample.question, *sample.answers]
        return np.stack([self.tfidf_vector(t) for t in texts])

    def logits(self, sample: QASample) -> np.ndarray:
        z = (self._field_matrix(sample) @ self.projection).reshape(-1)
        return z @ self.classifier + self.classifier_bias

    def predict(self, sample: QASample) -> int:
        return int(np.argmax(self.logits(sample)))


def _tfidf_documents(samples: list[QASample]) -> list[list[str]]:
    docs = []
    for sample in samples:
        for text in (sample.question, *sample.answers):
            docs.append(tokenize(text))
    return docs


def baseline_tfidf_train(
    samples: list[QASample],
    epochs: int = 30,
    learning_rate: float = 0.001,
    momentum: float = 0.9,
    batch_size: int = 32,
    seed: int = 17,
) -> TfidfModel:
    """Fit the tf-idf vocabulary/idf and train projection + classifier.

    Each question or answer text of the training split is one document:
    tf is the raw in-text count and idf = ln(N/df) with no smoothing.
    """
    missing = [s.id for s in samples if s.gold_index is None]
    if missing:
        raise DataError("samples lack gold_index", offending=missing)
    docs = _tfidf_documents(samples)
    vocabulary: dict[str, int] = {}
    df_counts: dict[str, int] = {}
    for doc in docs:
        # index assignment follows first occurrence, not set iteration,
        # so projection rows line up with tokens across interpreter runs
        for token in doc:
            if token not in vocabulary:
                vocabulary[token] = len(vocabulary)
        for token in set(doc):
            df_counts[token] = df_counts.get(token, 0) + 1
    if not vocabulary:
        raise DataError("empty tf-idf vocabulary: no tokens in training texts")
    n_docs = len(docs)
    idf = np.zeros(len(vocabulary))
    for token, idx in vocabulary.items():
        idf[idx] = math.log(n_docs / df_counts[token])

    rng = np.random.default_rng(seed)
    v_size = len(vocabulary)
    model = TfidfModel(
        vocabulary=vocabulary,
        idf=idf,
        projection=init_weights(rng, (v_size, TFIDF_PROJECTION_DIM), v_size),
        classifier=init_weights(
            rng,
            ((1 + N_ANSWERS) * TFIDF_PROJECTION_DIM, N_ANSWERS),
            (1 + N_ANSWERS) * TFIDF_PROJECTION_DIM,
        ),
        classifier_bias=np.zeros(N_ANSWERS),
    )

    t = np.stack([model._field_matrix(s) for s in samples])  # (n, 5, V)
    gold = np.array([s.gold_index for s in samples], dtype=np.int64)
    optim = MomentumSGD(
        {
            "projection": model.projection,
            "classifier": model.classifier,
            "bias": model.classifier_bias,
        },
        lr=learning_rate,
        momentum=momentum,
    )
    n = len(samples)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            tb, gb = t[idx], gold[idx]
            z = tb @ model.projection  # (B, 5, 512)
            flat = z.reshape(len(idx), -1)
            logits = flat @ model.classifier + model.classifier_bias
            d = cross_entropy_grad_logits(logits, gb) / len(idx)
            d_flat = d @ model.classifier.T
            d_z = d_flat.reshape(z.shape)
            optim.step(
                {
                    "projection": np.einsum("bfv,bfd->vd", tb, d_z),
                    "classifier": flat.T @ d,
                    "bias": d.sum(axis=0),
                }
            )
    return model


def tfidf_loss(model: TfidfModel, samples: list[QASample]) -> float:
    logits = np.stack([model.logits(s) for s in samples])
    gold = np.array([s.gold_index for s in samples], dtype=np.int64)
    return cross_entropy(logits, gold)


def format_accuracy_table(reports: list[EvaluationReport]) -> str:
    """Aligned text table: one row per model, accuracy columns by type."""
    headers = ["Method", "Vis.", "Text.", "Temp.", "Know.", "All"]
    rows = []
    for report in reports:
        rows.append(
            [
                report.model_id or "-",
                *(
                    f"{report.per_type_accuracy.get(t, 0.0):.3f}"
                    for t in QUESTION_TYPES
                ),
                f"{report.overall:.3f}",
            ]
        )
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines)


def format_retrieval_table(report: RetrievalEvalReport) -> str:
    """Aligned text table of R@K columns and the median rank."""
    headers = [f"R@{k}" for k in sorted(report.recall_at)] + ["MR"]
    values = [f"{report.recall_at[k]:.3f}" for k in sorted(report.recall_at)]
    values.append(str(report.median_rank))
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    return "\n".join(
        [
            "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "  ".join("-" * w for w in widths),
            "  ".join(v.ljust(w) for v, w in zip(values, widths)),
        ]
    )


def save_report(report, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
