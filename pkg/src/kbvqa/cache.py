"""Persistent encoding cache shared across pipeline stages.

The in-memory memo passed around the encoders is a plain mapping from
(segments, budget, backend_id) to vectors.  This module adds a
file-backed version so repeated pipeline runs (and runs against a paid
external backend) never re-encode the same input twice.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError


class EncodingCache:
    """Dict-compatible memo with JSONL persistence.

    Keys are (segments tuple, budget, backend_id); values are float64
    vectors.  Only the mapping methods the encoder helpers use are
    implemented.
    """

    def __init__(self):
        self._store: dict = {}
        self._dirty = False

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, key) -> bool:
        return key in self._store

    def get(self, key, default=None):
        return self._store.get(key, default)

    def __getitem__(self, key):
        return self._store[key]

    def __setitem__(self, key, value) -> None:
        self._store[key] = value
        self._dirty = True

    @property
    def dirty(self) -> bool:
        """True when entries were added since load/save."""
        return self._dirty

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (segments, budget, backend_id), vector in self._store.items():
                record = {
                    "segments": list(segments),
                    "budget": budget,
                    "backend_id": backend_id,
                    "vector": np.asarray(vector).tolist(),
                }
                fh.write(json.dumps(record) + "\n")
        self._dirty = False

    @classmethod
    def load(cls, path) -> "EncodingCache":
        cache = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    key = (
                        tuple(record["segments"]),
                        int(record["budget"]),
                        str(record["backend_id"]),
                    )
                    vector = np.asarray(record["vector"], dtype=np.float64)
                except (KeyError, TypeError, ValueError) as exc:
                    raise FormatError(
                        f"{path}:{lineno}: bad cache record ({exc})"
                    ) from exc
                cache._store[key] = vector
        cache._dirty = False
        return cache
