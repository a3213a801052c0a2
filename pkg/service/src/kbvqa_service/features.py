"""Visual feature payloads: stub synthesis, vocabularies, feature stores.

Stub mode derives every payload deterministically from a hash of the
clip reference, so the same request always yields the same response and
no media or model weights are needed.  Full mode serves precomputed
features from a JSONL store keyed by (clip_ref, kind).
"""

from __future__ import annotations

import json
from pathlib import Path

from .encoder import fnv1a_64, splitmix64_unit

FEATURE_KINDS = ("image", "concepts", "facial", "caption")
IMAGE_FRAME_DIM = 2048

STUB_CONCEPT_VOCAB = tuple(f"concept{i:02d}" for i in range(16))
STUB_FACE_VOCAB = tuple(f"face{i:02d}" for i in range(16))

FULL_FACE_VOCAB = (
    "Amy",
    "Barry",
    "Bernadette",
    "Dr. Beverly Hofstadter",
    "Dr. VM Koothrappali",
    "Emily",
    "Howard",
    "Leonard",
    "Leslie",
    "Lucy",
    "Mary Cooper",
    "Penny",
    "Priya",
    "Raj",
    "Sheldon",
    "Stuart",
    "Wil Wheaton",
)

_CAPTION_SUBJECTS = ("two people", "a group", "someone", "the host")
_CAPTION_ACTIONS = ("talk near", "sit by", "argue about", "point at")
_CAPTION_OBJECTS = ("a whiteboard", "the couch", "a doorway", "the table")


def _stream(clip_ref: str, kind: str, count: int):
    """Deterministic uniform stream tied to one (clip, kind) pair."""
    return splitmix64_unit(fnv1a_64(f"{clip_ref}|{kind}"), count)


def stub_payload(clip_ref: str, kind: str, n_f: int):
    """Pseudo-feature payload for one clip, stable across calls."""
    if kind == "image":
        values = _stream(clip_ref, kind, n_f * IMAGE_FRAME_DIM)
        frames = values.reshape(n_f, IMAGE_FRAME_DIM)
        return frames.tolist()
    if kind == "concepts":
        values = _stream(clip_ref, kind, len(STUB_CONCEPT_VOCAB))
        return [int(v * 6) for v in values]
    if kind == "facial":
        values = _stream(clip_ref, kind, len(STUB_FACE_VOCAB))
        return [int(v * 4) for v in values]
    if kind == "caption":
        values = _stream(clip_ref, kind, 3 * n_f)
        captions = []
        for i in range(n_f):
            subject = _CAPTION_SUBJECTS[int(values[3 * i] * len(_CAPTION_SUBJECTS))]
            action = _CAPTION_ACTIONS[int(values[3 * i + 1] * len(_CAPTION_ACTIONS))]
            obj = _CAPTION_OBJECTS[int(values[3 * i + 2] * len(_CAPTION_OBJECTS))]
            captions.append(f"frame {i}: {subject} {action} {obj}")
        return captions
    raise ValueError(f"unknown feature kind {kind!r}")


class FeatureStore:
    """Precomputed features loaded from JSONL, keyed by (clip_ref, kind).

    One record per line: {"clip_ref", "kind", "n_f", "data"}.
    """

    def __init__(self, records: dict[tuple[str, str], dict]):
        self._records = records

    @classmethod
    def load(cls, path: str | Path) -> "FeatureStore":
        records: dict[tuple[str, str], dict] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = (str(record["clip_ref"]), str(record["kind"]))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad feature record ({exc})")
                records[key] = record
        return cls(records)

    @classmethod
    def empty(cls) -> "FeatureStore":
        return cls({})

    def get(self, clip_ref: str, kind: str) -> dict | None:
        return self._records.get((clip_ref, kind))
