"""Multimodal reasoning: score four candidate answers and pick one.

Each candidate answer is encoded together with the clip's captions,
subtitles, the question, and the retrieved knowledge into one language
vector.  A clip-level visual feature (frame features, bag of concepts,
or bag of faces) is linearly condensed to 512 dimensions and
concatenated with the language vector; a linear head maps the fused
vector to a score per candidate.  Softmax over the four scores gives the
answer distribution, trained with cross-entropy on the gold index.

Caption features carry no vector pathway: caption text joins the
language input instead, so the fused vector is the language vector
alone.  Ablation variants control which inputs are present (answers
only, plus subtitles, plus visual, plus knowledge, or gold knowledge).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoding import EncoderProfile, build_marked_sequence, encode_texts_cls
from .errors import (
    ConfigError,
    ContractViolationError,
    DataError,
    FeatureKindError,
    FormatError,
)
from .nn import (
    LinearHead,
    MomentumSGD,
    cross_entropy,
    cross_entropy_grad_logits,
    init_weights,
    softmax,
)
from .samples import QASample

VISUAL_KINDS = ("image", "concepts", "facial", "caption", "none")
IMAGE_FRAME_DIM = 2048
PROJECTION_DIM = 512
DEFAULT_FRAMES = 5


@dataclass
class VisualFeatures:
    """Clip-level visual representation of one declared kind."""

    kind: str
    raw: object  # per kind: (n_f, 2048) array | count vector | list of strings
    n_f: int = DEFAULT_FRAMES

    def __post_init__(self):
        if self.kind not in VISUAL_KINDS:
            raise FeatureKindError(f"unknown visual kind {self.kind!r}")
        if self.kind == "image":
            self.raw = np.asarray(self.raw, dtype=np.float64)
            if self.raw.shape != (self.n_f, IMAGE_FRAME_DIM):
                raise FeatureKindError(
                    f"image features must be ({self.n_f}, {IMAGE_FRAME_DIM}), "
                    f"got {self.raw.shape}"
                )
        elif self.kind in ("concepts", "facial"):
            self.raw = np.asarray(self.raw, dtype=np.float64)
            if self.raw.ndim != 1:
                raise FeatureKindError(f"{self.kind} features must be a count vector")
            if np.any(self.raw < 0) or np.any(self.raw != np.round(self.raw)):
                raise FeatureKindError(f"{self.kind} counts must be non-negative integers")
        elif self.kind == "caption":
            if not isinstance(self.raw, list) or len(self.raw) != self.n_f:
                raise FeatureKindError(
                    f"caption features must be a list of {self.n_f} strings"
                )
        elif self.kind == "none":
            self.raw = None

    @property
    def in_dim(self) -> int:
        """Flattened input width of the projection layer for this kind."""
        if self.kind == "image":
            return self.n_f * IMAGE_FRAME_DIM
        if self.kind in ("concepts", "facial"):
            return int(self.raw.shape[0])
        raise FeatureKindError(f"kind {self.kind!r} has no vector pathway")

    def flat(self) -> np.ndarray:
        if self.kind == "image":
            return self.raw.reshape(-1)
        if self.kind in ("concepts", "facial"):
            return self.raw
        raise FeatureKindError(f"kind {self.kind!r} has no vector pathway")

    def caption_text(self) -> str:
        """Frame captions joined in timestamp order; empty for other kinds."""
        if self.kind == "caption":
            return " ".join(self.raw)
        return ""


class ProjectionLayer:
    """Affine condense of a flattened visual feature into 512 dims."""

    def __init__(self, matrix: np.ndarray, bias: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != PROJECTION_DIM:
            raise ConfigError(
                f"projection matrix must be (in_dim, {PROJECTION_DIM})"
            )
        if self.bias.shape != (PROJECTION_DIM,):
            raise ConfigError(f"projection bias must be ({PROJECTION_DIM},)")
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.bias))):
            raise ConfigError("projection parameters must be finite")

    @classmethod
    def init(cls, in_dim: int, rng: np.random.Generator) -> "ProjectionLayer":
        return cls(
            init_weights(rng, (in_dim, PROJECTION_DIM), in_dim),
            np.zeros(PROJECTION_DIM),
        )

    @classmethod
    def zeros(cls, in_dim: int) -> "ProjectionLayer":
        return cls(np.zeros((in_dim, PROJECTION_DIM)), np.zeros(PROJECTION_DIM))

    @property
    def in_dim(self) -> int:
        return int(self.matrix.shape[0])

    def apply(self, flat: np.ndarray) -> np.ndarray:
        """flat may be (in_dim,) or (batch, in_dim)."""
        return np.asarray(flat, dtype=np.float64) @ self.matrix + self.bias

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectionLayer":
        return cls(np.asarray(d["matrix"]), np.asarray(d["bias"]))


def project_visual(vf: VisualFeatures, layer: ProjectionLayer) -> np.ndarray:
    """512-dim visual vector; caption/none kinds have no vector pathway."""
    if vf.kind in ("caption", "none"):
        raise FeatureKindError(
            f"kind {vf.kind!r} flows through the language path, not the projection"
        )
    flat = vf.flat()
    if flat.shape[0] != layer.in_dim:
        raise ContractViolationError(
            f"feature width {flat.shape[0]} does not match projection "
            f"in_dim {layer.in_dim}"
        )
    return layer.apply(flat)


def reasoning_segments(
    caps: str, subs: str, question: str, answer: str, knowledge_texts: list[str]
) -> list[str]:
    """Two segments: context block (caps subs question), answer+knowledge."""
    context = " ".join(part for part in (caps, subs, question) if part)
    tail = " ".join([answer, *knowledge_texts])
    return [context, tail]


def build_reasoning_input(
    caps: str,
    subs: str,
    question: str,
    answer: str,
    knowledge_texts: list[str],
    m: int,
):
    """Token sequence for one candidate at budget ``m``.

    Knowledge texts are concatenated in rank order after the answer.
    """
    return build_marked_sequence(
        reasoning_segments(caps, subs, question, answer, knowledge_texts), m
    )


@dataclass
class Prediction:
    """Per-candidate scores, the argmax answer, and softmax probabilities."""

    scores: np.ndarray
    predicted: int
    probabilities: np.ndarray


def fuse_and_score(
    v: np.ndarray | None, u: np.ndarray, head: LinearHead
) -> float:
    """Score one candidate from the concatenated (visual, language) vector."""
    z = u if v is None else np.concatenate([v, u])
    if z.shape[0] != head.dim:
        raise ContractViolationError(
            f"fused vector dim {z.shape[0]} does not match head dim {head.dim}"
        )
    return float(head.apply(z))


def predict(scores: np.ndarray) -> Prediction:
    """Argmax with ties to the lowest index; probabilities via softmax."""
    scores = np.asarray(scores, dtype=np.float64)
    return Prediction(
        scores=scores,
        predicted=int(np.argmax(scores)),
        probabilities=softmax(scores),
    )


@dataclass
class VariantSettings:
    """Which inputs a pipeline variant feeds to the reasoning module."""

    name: str
    token_budget: int
    use_subtitles: bool
    use_visual: bool
    knowledge_source: str  # "none" | "retrieved" | "gold"


VARIANTS: dict[str, VariantSettings] = {
    "qa": VariantSettings("qa", 120, False, False, "none"),
    "sqa": VariantSettings("sqa", 120, True, False, "none"),
    "vsqa": VariantSettings("vsqa", 120, True, True, "none"),
    "full": VariantSettings("full", 512, True, True, "retrieved"),
    "gt": VariantSettings("gt", 512, True, True, "gold"),
}


def variant_settings(name: str) -> VariantSettings:
    try:
        return VARIANTS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}") from None


@dataclass
class ReasoningConfig:
    """Hyperparameters for reasoning input building and training."""

    token_budget: int = 512
    n_f: int = DEFAULT_FRAMES
    visual_kind: str = "none"
    epochs: int = 30
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    patience: int = 5
    seed: int = 17

    def __post_init__(self):
        if self.visual_kind not in VISUAL_KINDS:
            raise ConfigError(f"unknown visual kind {self.visual_kind!r}")
        if self.token_budget < 16:
            raise ConfigError(f"token_budget must be >= 16, got {self.token_budget}")


@dataclass
class ReasoningModel:
    """Trained parameters plus the layout they were trained for."""

    head: LinearHead
    projection: ProjectionLayer | None
    visual_kind: str
    token_budget: int
    encoder_profile: EncoderProfile

    def to_dict(self) -> dict:
        return {
            "visual_kind": self.visual_kind,
            "token_budget": self.token_budget,
            "encoder_profile": self.encoder_profile.to_dict(),
            "head": self.head.to_dict(),
            "projection": None if self.projection is None else self.projection.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningModel":
        return cls(
            head=LinearHead.from_dict(d["head"]),
            projection=None
            if d.get("projection") is None
            else ProjectionLayer.from_dict(d["projection"]),
            visual_kind=d["visual_kind"],
            token_budget=int(d["token_budget"]),
            encoder_profile=EncoderProfile.from_dict(d["encoder_profile"]),
        )


def save_reasoning_model(model: ReasoningModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_reasoning_model(path) -> ReasoningModel:
    with open(path, encoding="utf-8") as fh:
        return ReasoningModel.from_dict(json.load(fh))


def _knowledge_for(
    sample: QASample, settings: VariantSettings, retrieved_texts: dict | None
) -> list[str]:
    if settings.knowledge_source == "none":
        return []
    if settings.knowledge_source == "gold":
        if not sample.gold_knowledge:
            raise DataError(
                f"sample {sample.id} lacks gold knowledge for the gt variant",
                offending=[sample.id],
            )
        return [sample.gold_knowledge]
    if retrieved_texts is None or sample.id not in retrieved_texts:
        raise DataError(
            f"sample {sample.id} has no retrieved knowledge",
            offending=[sample.id],
        )
    return list(retrieved_texts[sample.id])


def _visual_for(
    sample: QASample,
    settings: VariantSettings,
    config: ReasoningConfig,
    features: dict | None,
) -> VisualFeatures:
    if not settings.use_visual or config.visual_kind == "none":
        return VisualFeatures(kind="none", raw=None, n_f=config.n_f)
    if features is None or sample.clip_ref not in features:
        raise DataError(
            f"sample {sample.id} has no visual features for clip "
            f"{sample.clip_ref!r}",
            offending=[sample.id],
        )
    vf = features[sample.clip_ref]
    if vf.kind != config.visual_kind:
        raise ConfigError(
            f"clip {sample.clip_ref!r} has kind {vf.kind!r}, "
            f"run is configured for {config.visual_kind!r}"
        )
    return vf


def candidate_segment_lists(
    sample: QASample,
    settings: VariantSettings,
    config: ReasoningConfig,
    features: dict | None,
    retrieved_texts: dict | None,
) -> tuple[list[list[str]], VisualFeatures]:
    """Language segments for all four candidates plus the clip's features."""
    vf = _visual_for(sample, settings, config, features)
    caps = vf.caption_text()
    subs = sample.subtitles if settings.use_subtitles else ""
    knowledge = _knowledge_for(sample, settings, retrieved_texts)
    segment_lists = [
        reasoning_segments(caps, subs, sample.question, answer, knowledge)
        for answer in sample.answers
    ]
    return segment_lists, vf


def _encode_candidates(
    samples: list[QASample],
    settings: VariantSettings,
    config: ReasoningConfig,
    features: dict | None,
    retrieved_texts: dict | None,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
):
    """Language matrix U (n, 4, dim), flattened visual X or None, gold vector."""
    all_segments = []
    visuals = []
    for sample in samples:
        segment_lists, vf = candidate_segment_lists(
            sample, settings, config, features, retrieved_texts
        )
        all_segments.extend(segment_lists)
        visuals.append(vf)
    vectors = encode_texts_cls(
        all_segments, settings.token_budget, profile, client=client, memo=memo
    )
    n = len(samples)
    u = np.stack(vectors).reshape(n, len(samples[0].answers), profile.dim)

    kinds = {vf.kind for vf in visuals}
    if len(kinds) > 1:
        raise ConfigError(f"mixed visual kinds in one run: {sorted(kinds)}")
    kind = kinds.pop()
    if kind in ("none", "caption"):
        x = None
    else:
        x = np.stack([vf.flat() for vf in visuals])
    gold = np.array(
        [-1 if s.gold_index is None else s.gold_index for s in samples], dtype=np.int64
    )
    return u, x, gold


def _forward(u, x, head, projection):
    """Scores o (n, 4) from language matrix and optional visual matrix."""
    if x is None:
        return np.einsum("ncd,d->nc", u, head.weights) + head.bias
    v = projection.apply(x)
    w_v = head.weights[:PROJECTION_DIM]
    w_u = head.weights[PROJECTION_DIM:]
    return (v @ w_v)[:, None] + np.einsum("ncd,d->nc", u, w_u) + head.bias


def reasoning_loss_and_grads(
    u: np.ndarray,
    x: np.ndarray | None,
    gold: np.ndarray,
    head: LinearHead,
    projection: ProjectionLayer | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy of a batch and its exact parameter gradients.

    Gradient keys: "w" and "b" for the head; with a visual matrix also
    "matrix" and "p_bias" for the projection layer.
    """
    o = _forward(u, x, head, projection)
    loss = cross_entropy(o, gold, reduction="mean")
    d = cross_entropy_grad_logits(o, gold) / len(gold)
    grads: dict[str, np.ndarray] = {"b": np.array([d.sum()])}
    if x is None:
        grads["w"] = np.einsum("nc,ncd->d", d, u)
    else:
        w_v = head.weights[:PROJECTION_DIM]
        v = projection.apply(x)
        dw_v = d.sum(axis=1) @ v
        dw_u = np.einsum("nc,ncd->d", d, u)
        grads["w"] = np.concatenate([dw_v, dw_u])
        dv = d.sum(axis=1)[:, None] * w_v
        grads["matrix"] = x.T @ dv
        grads["p_bias"] = dv.sum(axis=0)
    return loss, grads


def train_reasoning(
    samples: list[QASample],
    features: dict | None,
    retrieved_texts: dict | None,
    config: ReasoningConfig,
    profile: EncoderProfile,
    variant: str = "full",
    val_samples: list[QASample] | None = None,
    client=None,
    memo: dict | None = None,
    loss_history: list | None = None,
) -> ReasoningModel:
    """Jointly train the projection layer and scoring head.

    The encoder is frozen, so all candidate encodings are computed once
    up front.  With a validation set, training keeps the parameters of
    the best validation accuracy and stops early after ``patience``
    epochs without improvement.
    """
    settings = variant_settings(variant)
    if not samples:
        raise DataError("no training samples")
    missing = [s.id for s in samples if s.gold_index is None]
    if missing:
        raise DataError("training samples lack gold_index", offending=missing)

    u, x, gold = _encode_candidates(
        samples, settings, config, features, retrieved_texts, profile,
        client=client, memo=memo,
    )
    val = None
    if val_samples:
        val = _encode_candidates(
            val_samples, settings, config, features, retrieved_texts, profile,
            client=client, memo=memo,
        )

    rng = np.random.default_rng(config.seed)
    if x is None:
        projection = None
        head_dim = profile.dim
        params = {}
    else:
        projection = ProjectionLayer.init(x.shape[1], rng)
        head_dim = PROJECTION_DIM + profile.dim
        params = {"matrix": projection.matrix, "p_bias": projection.bias}
    weights = init_weights(rng, head_dim, head_dim)
    bias = np.zeros(1)
    params.update({"w": weights, "b": bias})
    optim = MomentumSGD(params, lr=config.learning_rate, momentum=config.momentum)

    def current_head():
        return LinearHead(weights, float(bias[0]))

    def val_accuracy():
        o = _forward(val[0], val[1], current_head(), projection)
        return float(np.mean(np.argmax(o, axis=1) == val[2]))

    best = None
    best_acc = -1.0
    stale = 0
    n = len(samples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            ub, gb = u[idx], gold[idx]
            xb = None if x is None else x[idx]
            loss, grads = reasoning_loss_and_grads(
                ub, xb, gb, current_head(), projection
            )
            total += loss * len(idx)
            optim.step(grads)
        if loss_history is not None:
            loss_history.append(total / n)
        if val is not None:
            acc = val_accuracy()
            if acc > best_acc:
                best_acc = acc
                best = (
                    weights.copy(),
                    float(bias[0]),
                    None if projection is None else projection.matrix.copy(),
                    None if projection is None else projection.bias.copy(),
                )
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best is not None:
        weights[:] = best[0]
        bias[0] = best[1]
        if projection is not None:
            projection.matrix[:] = best[2]
            projection.bias[:] = best[3]

    return ReasoningModel(
        head=current_head(),
        projection=projection,
        visual_kind="none" if x is None else config.visual_kind,
        token_budget=settings.token_budget,
        encoder_profile=profile,
    )


def run_variant(
    samples: list[QASample],
    model: ReasoningModel,
    config: ReasoningConfig,
    variant: str = "full",
    features: dict | None = None,
    retrieved_texts: dict | None = None,
    client=None,
    memo: dict | None = None,
) -> list[Prediction]:
    """Predict every sample with a trained model under one variant."""
    settings = variant_settings(variant)
    u, x, _ = _encode_candidates(
        samples, settings, config, features, retrieved_texts,
        model.encoder_profile, client=client, memo=memo,
    )
    o = _forward(u, x, model.head, model.projection)
    return [predict(row) for row in o]


def save_features(features: dict[str, VisualFeatures], path) -> None:
    """One JSONL record per clip: {clip_ref, kind, n_f, data}."""
    with open(path, "w", encoding="utf-8") as fh:
        for clip_ref in sorted(features):
            vf = features[clip_ref]
            if vf.kind == "none":
                data = None
            elif vf.kind == "caption":
                data = list(vf.raw)
            else:
                data = vf.raw.tolist()
            record = {
                "clip_ref": clip_ref,
                "kind": vf.kind,
                "n_f": vf.n_f,
                "data": data,
            }
            fh.write(json.dumps(record) + "\n")


def load_features(path) -> dict[str, VisualFeatures]:
    features: dict[str, VisualFeatures] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                features[str(record["clip_ref"])] = VisualFeatures(
                    kind=record["kind"],
                    raw=record["data"],
                    n_f=int(record.get("n_f", DEFAULT_FRAMES)),
                )
            except (KeyError, TypeError, ValueError, FeatureKindError) as exc:
                raise FormatError(f"{path}:{lineno}: bad feature record ({exc})") from exc
    return features


def save_predictions(
    predictions: list[Prediction], samples: list[QASample], path
) -> None:
    """One JSONL record per sample: scores, predicted index, gold index."""
    with open(path, "w", encoding="utf-8") as fh:
        for pred, sample in zip(predictions, samples):
            record = {
                "sample_id": sample.id,
                "scores": pred.scores.tolist(),
                "predicted": pred.predicted,
                "gold": sample.gold_index,
            }
            fh.write(json.dumps(record) + "\n")


def load_predictions(path) -> dict[str, dict]:
    records: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            records[str(record["sample_id"])] = record
    if not records:
        raise FormatError(f"{path}: no prediction records")
    return records
