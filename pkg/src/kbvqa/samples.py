"""QA sample records and the dataset JSONL format.

One dataset record is a multiple-choice question about a video clip:
four candidate answers, an optional gold index, the clip's subtitles,
and an optional knowledge sentence explaining the answer.  Test-split
records additionally carry a question-type label used by evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError, FormatError

SPLITS = ("train", "val", "test")
QUESTION_TYPES = ("visual", "textual", "temporal", "knowledge")
KNOWLEDGE_TYPES = ("episode-specific", "recurrent")
N_ANSWERS = 4


def _subtitle_text(value) -> str:
    """Normalize a subtitles field: line lists are joined into one string."""
    if value is None:
        return ""
    if isinstance(value, list):
        return " ".join(value)
    return value


@dataclass
class QASample:
    """One multiple-choice question grounded in a video clip."""

    id: str
    question: str
    answers: list[str]
    gold_index: int | None = None
    split: str = "train"
    scene_ref: str = ""
    clip_ref: str = ""
    subtitles: str = ""
    gold_knowledge: str | None = None
    knowledge_type: str | None = None
    question_type: str | None = None

    def validate(self) -> None:
        if len(self.answers) != N_ANSWERS:
            raise DataError(
                f"sample {self.id}: expected {N_ANSWERS} answers, "
                f"got {len(self.answers)}",
                offending=[self.id],
            )
        if any(not a.strip() for a in self.answers):
            raise DataError(
                f"sample {self.id}: empty answer text", offending=[self.id]
            )
        if self.gold_index is not None and not 0 <= self.gold_index < N_ANSWERS:
            raise DataError(
                f"sample {self.id}: gold_index {self.gold_index} out of range",
                offending=[self.id],
            )
        if self.split not in SPLITS:
            raise DataError(
                f"sample {self.id}: unknown split {self.split!r}", offending=[self.id]
            )
        if self.question_type is not None:
            if self.question_type not in QUESTION_TYPES:
                raise DataError(
                    f"sample {self.id}: unknown question_type "
                    f"{self.question_type!r}",
                    offending=[self.id],
                )
            if self.split != "test":
                raise DataError(
                    f"sample {self.id}: question_type is only valid on the "
                    "test split",
                    offending=[self.id],
                )
        if self.knowledge_type is not None and self.knowledge_type not in KNOWLEDGE_TYPES:
            raise DataError(
                f"sample {self.id}: unknown knowledge_type {self.knowledge_type!r}",
                offending=[self.id],
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "scene_ref": self.scene_ref,
            "clip_ref": self.clip_ref,
            "question": self.question,
            "answers": list(self.answers),
            "gold_index": self.gold_index,
            "subtitles": self.subtitles,
            "knowledge": self.gold_knowledge,
            "knowledge_type": self.knowledge_type,
            "question_type": self.question_type,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QASample":
        sample = cls(
            id=str(d["id"]),
            question=d["question"],
            answers=list(d["answers"]),
            gold_index=None if d.get("gold_index") is None else int(d["gold_index"]),
            split=d.get("split", "train"),
            scene_ref=d.get("scene_ref", ""),
            clip_ref=d.get("clip_ref", ""),
            subtitles=_subtitle_text(d.get("subtitles")),
            gold_knowledge=d.get("knowledge"),
            knowledge_type=d.get("knowledge_type"),
            question_type=d.get("question_type"),
        )
        sample.validate()
        return sample


def load_samples(path) -> list[QASample]:
    """Read dataset JSONL; errors carry the 1-based offending line number."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                samples.append(QASample.from_dict(record))
            except (DataError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad record ({exc})") from exc
    return samples


def save_samples(samples: list[QASample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_dict()) + "\n")


def split_samples(samples: list[QASample]) -> dict[str, list[QASample]]:
    """Group samples by split label, preserving file order."""
    groups: dict[str, list[QASample]] = {name: [] for name in SPLITS}
    for sample in samples:
        groups[sample.split].append(sample)
    return groups
