"""Knowledge retrieval: rank every knowledge instance for a QA query.

A query is a question plus its four candidate answers.  To make ranking
independent of the order in which candidate answers arrive, answers are
first canonicalized: a prior head scores each answer from a
(question, answer) encoding, and answers are re-ordered by descending
prior score before they enter the retrieval input.  A scoring head then
maps the encoded (query, knowledge) pair to a relevance in (0, 1)
through a sigmoid, and the top-k instances by score are returned.

Both heads are linear layers over a frozen encoder, trained with a
pairwise matching loss: matching (gold) pairs push scores toward 1,
sampled non-matching pairs toward 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoding import (
    EncoderProfile,
    build_marked_sequence,
    encode_cls,
    encode_texts_cls,
)
from .errors import ConfigError, DataError
from .knowledge import (
    DEFAULT_DEDUP_THRESHOLD,
    KB_EMBED_BUDGET,
    KnowledgeBase,
    similarity,
)
from .nn import (
    LinearHead,
    MomentumSGD,
    init_weights,
    logistic_loss_and_grads,
    sigmoid,
)
from .samples import QASample

RETRIEVAL_MODES = ("prior-score", "param-sharing", "question-only")

PRIOR_BUDGET = 120


@dataclass
class RetrievalConfig:
    """Hyperparameters for retrieval input building and head training."""

    token_budget: int = 128
    top_k: int = 5
    mode: str = "prior-score"
    negatives_per_positive: int = 1
    epochs: int = 10
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 17

    def __post_init__(self):
        if self.token_budget < 16:
            raise ConfigError(f"token_budget must be >= 16, got {self.token_budget}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.negatives_per_positive < 1:
            raise ConfigError(
                f"negatives_per_positive must be >= 1, "
                f"got {self.negatives_per_positive}"
            )
        if self.mode not in RETRIEVAL_MODES:
            raise ConfigError(f"unknown retrieval mode {self.mode!r}")


@dataclass
class RankedKnowledge:
    """Descending-score ranking of knowledge instances for one query."""

    entries: list[tuple[int, float]]
    k: int
    k_exceeds_n: bool = False

    def ids(self) -> list[int]:
        return [kb_id for kb_id, _ in self.entries]


def prior_scores(
    question: str,
    answers: list[str],
    head: LinearHead,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> np.ndarray:
    """Raw affine score of each candidate answer given the question.

    Input per candidate is the (question, answer) pair at the prior
    budget; no sigmoid is applied, as only the ordering matters.
    """
    vectors = encode_texts_cls(
        [[question, answer] for answer in answers],
        PRIOR_BUDGET,
        profile,
        client=client,
        memo=memo,
    )
    return np.array([head.apply(v) for v in vectors], dtype=np.float64)


def order_answers(xi: np.ndarray) -> tuple[int, ...]:
    """Original answer indices sorted by descending score, ties by index."""
    xi = np.asarray(xi, dtype=np.float64)
    return tuple(sorted(range(len(xi)), key=lambda c: (-xi[c], c)))


def retrieval_segments(
    question: str, ordered_answers: list[str], knowledge_text: str, mode: str
) -> list[str]:
    """The two text segments of a retrieval input: query block, knowledge."""
    if mode == "question-only":
        block = question
    elif mode == "param-sharing":
        if len(ordered_answers) != 1:
            raise ConfigError("param-sharing mode scores one answer at a time")
        block = f"{question} {ordered_answers[0]}"
    elif mode == "prior-score":
        block = " ".join([question, *ordered_answers])
    else:
        raise ConfigError(f"unknown retrieval mode {mode!r}")
    return [block, knowledge_text]


def build_retrieval_input(
    question: str,
    ordered_answers: list[str],
    knowledge_text: str,
    n: int,
    mode: str = "prior-score",
):
    """Token sequence for one (query, knowledge) pair at budget ``n``."""
    return build_marked_sequence(
        retrieval_segments(question, ordered_answers, knowledge_text, mode), n
    )


def score(seq, head: LinearHead, profile: EncoderProfile, client=None) -> float:
    """Sigmoid relevance of one retrieval input, strictly inside (0, 1)."""
    return float(sigmoid(head.apply(encode_cls(seq, profile, client=client))))


def canonical_answers(
    sample: QASample,
    prior_head: LinearHead,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> list[str]:
    """Sample answers re-ordered by descending prior score."""
    xi = prior_scores(
        sample.question, sample.answers, prior_head, profile, client=client, memo=memo
    )
    return [sample.answers[c] for c in order_answers(xi)]


def _query_blocks(
    sample: QASample,
    mode: str,
    prior_head: LinearHead | None,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> list[list[str]]:
    """Answer-ordering per mode; returns one or four [question+answers] blocks."""
    if mode == "prior-score":
        if prior_head is None:
            raise ConfigError("prior-score mode requires a trained prior head")
        ordered = canonical_answers(
            sample, prior_head, profile, client=client, memo=memo
        )
        return [ordered]
    if mode == "question-only":
        return [[]]
    if mode == "param-sharing":
        return [[answer] for answer in sample.answers]
    raise ConfigError(f"unknown retrieval mode {mode!r}")


def resolve_gold_ids(
    samples: list[QASample],
    kb: KnowledgeBase,
    client=None,
    memo: dict | None = None,
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
) -> dict[str, int]:
    """Map each sample's gold knowledge text to a KB instance id.

    Exact text match wins; otherwise the most similar embedded instance
    above the dedup threshold (covering texts whose duplicate was the
    removed one).  Samples that resolve nowhere are reported together.
    """
    by_text: dict[str, int] = {}
    for kb_id in kb.ids():
        by_text.setdefault(kb.instances[kb_id].text, kb_id)
    matrix = None
    ids = kb.ids()
    resolved: dict[str, int] = {}
    unresolved: list[str] = []
    for sample in samples:
        text = sample.gold_knowledge
        if not text:
            unresolved.append(sample.id)
            continue
        kb_id = by_text.get(text)
        if kb_id is not None:
            resolved[sample.id] = kb_id
            continue
        if matrix is None:
            matrix = kb.embedding_matrix()
        vec = encode_texts_cls(
            [[text]], KB_EMBED_BUDGET, kb.encoder_profile, client=client, memo=memo
        )[0]
        sims = np.array([similarity(vec, row) for row in matrix])
        best = int(np.argmax(sims))
        if sims[best] > threshold:
            resolved[sample.id] = ids[best]
        else:
            unresolved.append(sample.id)
    if unresolved:
        raise DataError(
            f"{len(unresolved)} sample(s) have unresolvable gold knowledge",
            offending=unresolved,
        )
    return resolved


def _train_pairwise(
    pair_vectors: list[np.ndarray],
    labels: list[float],
    epoch_pair_indices,
    dim: int,
    config: RetrievalConfig,
    loss_history: list | None,
) -> LinearHead:
    """Shared mini-batch loop for both retrieval heads.

    ``epoch_pair_indices`` yields, per epoch, the index order (into
    ``pair_vectors``) of that epoch's training pairs.
    """
    rng = np.random.default_rng(config.seed)
    weights = init_weights(rng, dim, dim)
    bias = np.zeros(1)
    optim = MomentumSGD(
        {"w": weights, "b": bias}, lr=config.learning_rate, momentum=config.momentum
    )
    for epoch_indices in epoch_pair_indices(rng):
        total_loss = 0.0
        count = 0
        for start in range(0, len(epoch_indices), config.batch_size):
            batch = epoch_indices[start : start + config.batch_size]
            u = np.vstack([pair_vectors[i] for i in batch])
            y = np.array([labels[i] for i in batch], dtype=np.float64)
            loss, grads = logistic_loss_and_grads(u, y, weights, bias[0])
            total_loss += loss * len(batch)
            count += len(batch)
            optim.step(grads)
        if loss_history is not None:
            loss_history.append(total_loss / max(count, 1))
    return LinearHead(weights, float(bias[0]))


def train_prior_head(
    samples: list[QASample],
    config: RetrievalConfig,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
    loss_history: list | None = None,
) -> LinearHead:
    """Train the answer-ordering head on gold vs wrong answers.

    Positives are (question, gold answer) pairs; each epoch samples
    fresh wrong-answer negatives for every positive.
    """
    missing = [s.id for s in samples if s.gold_index is None]
    if missing:
        raise DataError("samples lack gold_index", offending=missing)
    vectors: list[np.ndarray] = []
    labels: list[float] = []
    index_of: dict[tuple[int, int], int] = {}
    for si, sample in enumerate(samples):
        encoded = encode_texts_cls(
            [[sample.question, answer] for answer in sample.answers],
            PRIOR_BUDGET,
            profile,
            client=client,
            memo=memo,
        )
        for c, vec in enumerate(encoded):
            index_of[(si, c)] = len(vectors)
            vectors.append(vec)
            labels.append(1.0 if c == sample.gold_index else 0.0)

    rho = config.negatives_per_positive

    def epochs(rng):
        for _ in range(config.epochs):
            order = rng.permutation(len(samples))
            indices = []
            for si in order:
                gold = samples[si].gold_index
                indices.append(index_of[(si, gold)])
                wrong = [c for c in range(len(samples[si].answers)) if c != gold]
                for c in rng.choice(wrong, size=rho, replace=rho > len(wrong)):
                    indices.append(index_of[(si, int(c))])
            yield indices

    return _train_pairwise(vectors, labels, epochs, profile.dim, config, loss_history)


def train_scoring_head(
    samples: list[QASample],
    kb: KnowledgeBase,
    config: RetrievalConfig,
    prior_head: LinearHead | None,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
    loss_history: list | None = None,
) -> LinearHead:
    """Train the relevance head on matching vs non-matching knowledge pairs.

    Gold knowledge must resolve to a KB id for every sample.  Answer
    order is canonicalized once, before training, and held fixed.  Each
    epoch draws fresh uniform negatives from the rest of the KB.
    """
    gold_ids = resolve_gold_ids(samples, kb, client=client, memo=memo)
    kb_ids = kb.ids()
    pos_of_id = {kb_id: pos for pos, kb_id in enumerate(kb_ids)}
    if memo is None:
        memo = {}

    blocks_per_sample = [
        _query_blocks(s, config.mode, prior_head, profile, client=client, memo=memo)
        for s in samples
    ]

    vectors: list[np.ndarray] = []
    labels: list[float] = []
    index_of: dict[tuple[int, int, int], int] = {}

    def pair_index(si: int, bi: int, kb_pos: int) -> int:
        """Encode lazily: only (sample, knowledge) pairs actually drawn."""
        key = (si, bi, kb_pos)
        idx = index_of.get(key)
        if idx is None:
            segments = retrieval_segments(
                samples[si].question,
                blocks_per_sample[si][bi],
                kb.instances[kb_ids[kb_pos]].text,
                config.mode,
            )
            vec = encode_texts_cls(
                [segments], config.token_budget, profile, client=client, memo=memo
            )[0]
            idx = len(vectors)
            index_of[key] = idx
            vectors.append(vec)
            labels.append(
                1.0 if kb_ids[kb_pos] == gold_ids[samples[si].id] else 0.0
            )
        return idx

    rho = config.negatives_per_positive
    n_kb = len(kb_ids)

    def epochs(rng):
        for _ in range(config.epochs):
            order = rng.permutation(len(samples))
            indices = []
            for si in order:
                gold_pos = pos_of_id[gold_ids[samples[si].id]]
                for bi in range(len(blocks_per_sample[si])):
                    indices.append(pair_index(si, bi, gold_pos))
                    for _ in range(rho):
                        neg = int(rng.integers(n_kb - 1))
                        if neg >= gold_pos:
                            neg += 1
                        indices.append(pair_index(si, bi, neg))
            yield indices

    return _train_pairwise(vectors, labels, epochs, profile.dim, config, loss_history)


def retrieve(
    sample: QASample,
    kb: KnowledgeBase,
    prior_head: LinearHead | None,
    scoring_head: LinearHead,
    config: RetrievalConfig,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> RankedKnowledge:
    """Score every KB instance for the sample and return the top-k.

    Ranking is total: ties break by ascending instance id, and the
    result is a prefix of the full descending sort.  In param-sharing
    mode each answer is scored separately and the per-instance maximum
    is ranked.
    """
    kb_ids = kb.ids()
    blocks = _query_blocks(
        sample, config.mode, prior_head, profile, client=client, memo=memo
    )
    per_block_scores = []
    for block in blocks:
        segment_lists = [
            retrieval_segments(
                sample.question, block, kb.instances[kb_id].text, config.mode
            )
            for kb_id in kb_ids
        ]
        vectors = encode_texts_cls(
            segment_lists, config.token_budget, profile, client=client, memo=memo
        )
        z = np.vstack(vectors) @ scoring_head.weights + scoring_head.bias
        per_block_scores.append(sigmoid(z))
    scores = np.max(per_block_scores, axis=0)
    order = sorted(range(len(kb_ids)), key=lambda i: (-scores[i], kb_ids[i]))
    k_exceeds = config.top_k > len(kb_ids)
    top = order[: config.top_k]
    return RankedKnowledge(
        entries=[(kb_ids[i], float(scores[i])) for i in top],
        k=config.top_k,
        k_exceeds_n=k_exceeds,
    )


def save_head(head: LinearHead, role: str, profile: EncoderProfile, path) -> None:
    """Persist a trained head with its role and encoder identity."""
    record = {
        "role": role,
        "encoder_profile": profile.to_dict(),
        "dim": head.dim,
        "weights": head.weights.tolist(),
        "bias": head.bias,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_head(path, expected_profile: EncoderProfile | None = None):
    """Load a head; returns (head, role). Rejects encoder mismatches."""
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    profile = EncoderProfile.from_dict(record["encoder_profile"])
    if expected_profile is not None and profile.backend_id != expected_profile.backend_id:
        raise DataError(
            f"{path}: head was trained with backend {profile.backend_id!r}, "
            f"expected {expected_profile.backend_id!r}"
        )
    head = LinearHead(np.asarray(record["weights"], dtype=np.float64), record["bias"])
    return head, record["role"]


def save_retrievals(rankings: dict[str, RankedKnowledge], path) -> None:
    """One JSONL record per sample: its ranked (kb_id, score) entries."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, ranked in rankings.items():
            record = {
                "sample_id": sample_id,
                "entries": [
                    {"kb_id": kb_id, "score": s} for kb_id, s in ranked.entries
                ],
            }
            fh.write(json.dumps(record) + "\n")


def load_retrievals(path) -> dict[str, RankedKnowledge]:
    rankings: dict[str, RankedKnowledge] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            entries = [(int(e["kb_id"]), float(e["score"])) for e in record["entries"]]
            rankings[str(record["sample_id"])] = RankedKnowledge(
                entries=entries, k=len(entries)
            )
    return rankings
