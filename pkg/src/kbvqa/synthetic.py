"""Synthetic QA corpus generator for end-to-end pipeline exercises.

Every sample is built around one topic keyword.  The keyword appears
twice in the question and twice in the topic's knowledge sentence, and
the gold answer repeats it once more, so the gold chain
question -> knowledge -> answer is tied together by token overlap.
Wrong answers use throwaway keywords that never enter the knowledge
base.

Why this is learnable by a linear head over the frozen reference
encoder: when query and knowledge share a keyword, its position-weight
coefficients add coherently, inflating the pre-normalization norm of
the encoded pair and shrinking every other coordinate after
normalization.  Both question and knowledge templates START with a
fixed scaffold word ("ask"/"tell") carrying the largest position
weight, which pins a stable direction whose shrinkage the head can
read off; without such an anchor the dilution signal drowns in the
random keyword directions.

All answers are single tokens, which keeps length-based baselines at
chance level.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .encoding import EncoderProfile
from .knowledge import KnowledgeBase, KnowledgeInstance
from .reasoning import ReasoningConfig, VisualFeatures, save_features
from .retrieval import RetrievalConfig
from .samples import KNOWLEDGE_TYPES, N_ANSWERS, QASample, QUESTION_TYPES, save_samples

SYNTHETIC_CONCEPT_DIM = 16


def _knowledge_text(topic: int) -> str:
    return f"tell key{topic} key{topic}"


def _question_text(topic: int) -> str:
    return f"ask ask key{topic} key{topic}"


def _balanced_shuffled_golds(n: int, rng: np.random.Generator) -> list[int]:
    """Exactly balanced gold positions in a seeded random order.

    Shuffling decorrelates the gold position from the question-type
    cycle, so position-picking baselines stay at chance per type.
    """
    golds = np.tile(np.arange(N_ANSWERS), (n + N_ANSWERS - 1) // N_ANSWERS)[:n]
    rng.shuffle(golds)
    return [int(g) for g in golds]


def make_synthetic_dataset(
    n_train: int = 400,
    n_val: int = 100,
    n_test: int = 100,
    kb_size: int = 150,
    seed: int = 17,
    profile: EncoderProfile | None = None,
) -> tuple[list[QASample], KnowledgeBase, dict[str, VisualFeatures]]:
    """Build (samples, unembedded KB, per-clip concept features).

    Topics cycle through all splits, gold positions are balanced, and
    test samples cycle through the four question types.
    """
    rng = np.random.default_rng(seed)
    if profile is None:
        from .encoding import reference_profile

        profile = reference_profile()

    instances = [
        KnowledgeInstance(id=j, text=_knowledge_text(j)) for j in range(kb_size)
    ]
    kb = KnowledgeBase(instances, profile)

    split_plan = (
        [("train", i) for i in range(n_train)]
        + [("val", i) for i in range(n_val)]
        + [("test", i) for i in range(n_test)]
    )
    gold_plan = {
        split: _balanced_shuffled_golds(n, rng)
        for split, n in (("train", n_train), ("val", n_val), ("test", n_test))
    }
    samples: list[QASample] = []
    features: dict[str, VisualFeatures] = {}
    for index, (split, within) in enumerate(split_plan):
        topic = index % kb_size
        gold_index = gold_plan[split][within]
        answers = []
        for slot in range(N_ANSWERS):
            if slot == gold_index:
                answers.append(f"key{topic}")
            else:
                answers.append(f"alt{index}x{slot}")
        clip_ref = f"scene{index}_clip0"
        samples.append(
            QASample(
                id=f"{split}-{within:04d}",
                question=_question_text(topic),
                answers=answers,
                gold_index=gold_index,
                split=split,
                scene_ref=f"scene{index}",
                clip_ref=clip_ref,
                subtitles="they discuss it",
                gold_knowledge=_knowledge_text(topic),
                knowledge_type=KNOWLEDGE_TYPES[index % len(KNOWLEDGE_TYPES)],
                question_type=QUESTION_TYPES[within % len(QUESTION_TYPES)]
                if split == "test"
                else None,
            )
        )
        features[clip_ref] = VisualFeatures(
            kind="concepts",
            raw=rng.integers(0, 6, size=SYNTHETIC_CONCEPT_DIM),
        )
    return samples, kb, features


def synthetic_retrieval_config(**overrides) -> RetrievalConfig:
    """Retrieval hyperparameters tuned for the synthetic corpus.

    The learning rate is far above the full-data default because the
    reference encoder is frozen and the separable keyword signal is
    small in norm; a handful of epochs suffices.
    """
    params = dict(epochs=15, learning_rate=0.5, seed=17)
    params.update(overrides)
    return RetrievalConfig(**params)


def synthetic_reasoning_config(**overrides) -> ReasoningConfig:
    """Reasoning hyperparameters tuned for the synthetic corpus."""
    params = dict(
        visual_kind="concepts",
        epochs=30,
        learning_rate=0.05,
        patience=5,
        seed=17,
    )
    params.update(overrides)
    return ReasoningConfig(**params)


def write_synthetic_workspace(
    directory,
    n_train: int = 400,
    n_val: int = 100,
    n_test: int = 100,
    kb_size: int = 150,
    seed: int = 17,
) -> Path:
    """Write dataset.jsonl, features.jsonl, and config.json for CLI runs.

    Returns the config path.  The config points the pipeline at the
    written files with the tuned synthetic hyperparameters.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples, _, features = make_synthetic_dataset(
        n_train=n_train, n_val=n_val, n_test=n_test, kb_size=kb_size, seed=seed
    )
    save_samples(samples, directory / "dataset.jsonl")
    save_features(features, directory / "features.jsonl")
    config = {
        "seed": seed,
        "workdir": "artifacts",
        "dataset": "dataset.jsonl",
        "features": "features.jsonl",
        "variant": "full",
        "retrieval": dataclasses.asdict(synthetic_retrieval_config(seed=seed)),
        "reasoning": dataclasses.asdict(synthetic_reasoning_config(seed=seed)),
    }
    config_path = directory / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return config_path

