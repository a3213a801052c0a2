"""Tokenization, marked token sequences, and sentence encoders.

Every piece of text entering the pipeline is lowercased, split into word
and punctuation tokens, and assembled into a fixed-budget sequence framed
by ``[CLS]``/``[SEP]`` markers with zero padding.  An encoder then maps a
sequence to a single fixed-dimension vector.  Two encoder kinds exist:

* ``reference``: an in-process, fully deterministic encoder built on a
  stable 64-bit token hash.  It has no model dependencies, so every
  pipeline stage (and every test) can run offline.
* ``external-service``: an HTTP backend speaking the wire protocol
  implemented by :mod:`kbvqa.backend_client`, for deployments with real
  contextual models.

The reference encoder maps each token to a pseudo-random unit vector
seeded by the FNV-1a 64 hash of the token string, weights tokens by
``1/(position+1)``, and L2-normalizes the weighted sum.  Marker and
padding tokens are excluded, which makes the encoding invariant to
padding and gives order sensitivity through the position weights.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, InvalidBudgetError

PAD_ID, CLS_ID, SEP_ID = 0, 1, 2
PAD_TOKEN, CLS_TOKEN, SEP_TOKEN = "[PAD]", "[CLS]", "[SEP]"
MARKER_TOKENS = frozenset({PAD_TOKEN, CLS_TOKEN, SEP_TOKEN})

REFERENCE_DIM = 32

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(text: str) -> int:
    """Stable 64-bit FNV-1a hash of a string (UTF-8 bytes)."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64_unit(seed: int, count: int) -> np.ndarray:
    """``count`` doubles in [0, 1) from a splitmix64 stream.

    Self-contained so the stream never depends on the numpy version.
    """
    out = np.empty(count, dtype=np.float64)
    state = seed & _MASK64
    for i in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        out[i] = (z >> 11) * 2.0**-53
    return out


_token_vector_cache: dict[tuple[str, int], np.ndarray] = {}


def token_vector(token: str, dim: int = REFERENCE_DIM) -> np.ndarray:
    """Deterministic unit vector for a token; identical on any platform."""
    key = (token, dim)
    cached = _token_vector_cache.get(key)
    if cached is None:
        raw = 2.0 * _splitmix64_unit(fnv1a_64(token), dim) - 1.0
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:  # unreachable in practice, keep the contract total
            raw[0] = 1.0
            norm = 1.0
        cached = raw / norm
        cached.flags.writeable = False
        _token_vector_cache[key] = cached
    return cached


def reference_encode(tokens: list[str], dim: int = REFERENCE_DIM) -> np.ndarray:
    """Encode a token list: position-weighted sum of token vectors, L2-normalized.

    Empty input returns the zero vector.
    """
    if not tokens:
        return np.zeros(dim, dtype=np.float64)
    acc = np.zeros(dim, dtype=np.float64)
    for pos, token in enumerate(tokens):
        acc += token_vector(token, dim) / (pos + 1)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        return np.zeros(dim, dtype=np.float64)
    return acc / norm


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word tokens and standalone punctuation."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Interns token strings to integer ids; ids 0..2 are reserved markers."""

    def __init__(self):
        self._ids = {PAD_TOKEN: PAD_ID, CLS_TOKEN: CLS_ID, SEP_TOKEN: SEP_ID}
        self._tokens = [PAD_TOKEN, CLS_TOKEN, SEP_TOKEN]

    def id_for(self, token: str) -> int:
        token_id = self._ids.get(token)
        if token_id is None:
            token_id = len(self._tokens)
            self._ids[token] = token_id
            self._tokens.append(token)
        return token_id

    def token_for(self, token_id: int) -> str:
        return self._tokens[token_id]

    def __len__(self) -> int:
        return len(self._tokens)


DEFAULT_VOCAB = Vocabulary()


@dataclass
class TokenSequence:
    """Fixed-budget token id sequence: ``[CLS] ... [SEP]`` plus padding."""

    ids: list[int]
    budget: int
    attention_len: int
    vocab: Vocabulary = field(default=DEFAULT_VOCAB, repr=False, compare=False)

    def tokens(self) -> list[str]:
        """Non-padding tokens, markers included."""
        return [self.vocab.token_for(i) for i in self.ids[: self.attention_len]]

    def content_tokens(self) -> list[str]:
        """Tokens with markers and padding stripped."""
        return [t for t in self.tokens() if t not in MARKER_TOKENS]

    def wire_text(self) -> str:
        """Wire form for external backends: segments joined by ``[SEP]``."""
        parts = self.tokens()[1:]  # drop leading [CLS]
        if parts and parts[-1] == SEP_TOKEN:
            parts = parts[:-1]  # final marker is re-added by the receiver
        return " ".join(parts)


def build_marked_sequence(
    segments: list[str], budget: int, vocab: Vocabulary | None = None
) -> TokenSequence:
    """Assemble ``[CLS] seg [SEP] seg [SEP] ...`` into a fixed-budget sequence.

    One ``[SEP]`` follows each segment.  Sequences over budget are
    tail-truncated with the final ``[SEP]`` re-appended; short sequences
    are padded with ``[PAD]`` (id 0).
    """
    if vocab is None:
        vocab = DEFAULT_VOCAB
    if not segments:
        segments = [""]
    if budget < len(segments) + 2:
        raise InvalidBudgetError(
            f"budget {budget} cannot hold markers for {len(segments)} segment(s)"
        )
    tokens = [CLS_TOKEN]
    for segment in segments:
        tokens.extend(tokenize(segment))
        tokens.append(SEP_TOKEN)
    if len(tokens) > budget:
        tokens = tokens[: budget - 1] + [SEP_TOKEN]
    attention_len = len(tokens)
    ids = [vocab.id_for(t) for t in tokens]
    ids.extend([PAD_ID] * (budget - attention_len))
    return TokenSequence(ids=ids, budget=budget, attention_len=attention_len, vocab=vocab)


@dataclass(frozen=True)
class EncoderProfile:
    """Identity and output dimension of an encoder backend."""

    backend_id: str
    dim: int
    kind: str  # "reference" | "external-service"

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("encoder dim must be positive")
        if self.kind not in ("reference", "external-service"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"backend_id": self.backend_id, "dim": self.dim, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderProfile":
        return cls(backend_id=d["backend_id"], dim=int(d["dim"]), kind=d["kind"])


def reference_profile(dim: int = REFERENCE_DIM) -> EncoderProfile:
    return EncoderProfile(backend_id=f"reference-{dim}", dim=dim, kind="reference")


def encode_cls(seq: TokenSequence, profile: EncoderProfile, client=None) -> np.ndarray:
    """Sequence-level vector for a marked sequence.

    Reference backends encode in-process; external backends go through
    ``client`` (a :class:`kbvqa.backend_client.HttpEncoderClient`).
    """
    if profile.kind == "reference":
        vec = reference_encode(seq.content_tokens(), profile.dim)
    else:
        if client is None:
            raise ContractViolationError(
                "external-service profile requires an HTTP client"
            )
        vec = client.encode([seq.wire_text()], mode="cls", budget=seq.budget)[0]
    if vec.shape != (profile.dim,):
        raise ContractViolationError(
            f"backend {profile.backend_id} returned dim {vec.shape}, "
            f"profile declares {profile.dim}"
        )
    return vec


def encode_text_cls(
    segments,
    budget: int,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> np.ndarray:
    """Encode raw text segments: build the marked sequence, then ``encode_cls``.

    ``memo`` is an optional caller-owned cache keyed by the exact input;
    pass one dict across many calls to deduplicate repeated encodes.
    """
    if isinstance(segments, str):
        segments = [segments]
    else:
        segments = list(segments)
    if memo is not None:
        key = (tuple(segments), budget, profile.backend_id)
        cached = memo.get(key)
        if cached is not None:
            return cached
    vec = encode_cls(build_marked_sequence(segments, budget), profile, client=client)
    if memo is not None:
        memo[key] = vec
    return vec


def encode_texts_cls(
    segment_lists,
    budget: int,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
    batch: int = 64,
) -> list[np.ndarray]:
    """Encode many segment lists at one budget; batches external calls.

    Equivalent to calling :func:`encode_text_cls` per entry, but external
    backends receive chunked batch requests for the cache misses.
    """
    normalized = [
        [s] if isinstance(s, str) else list(s) for s in segment_lists
    ]
    if profile.kind == "reference" or client is None:
        return [
            encode_text_cls(segments, budget, profile, client=client, memo=memo)
            for segments in normalized
        ]
    results: list[np.ndarray | None] = [None] * len(normalized)
    misses: list[int] = []
    for idx, segments in enumerate(normalized):
        key = (tuple(segments), budget, profile.backend_id)
        cached = None if memo is None else memo.get(key)
        if cached is not None:
            results[idx] = cached
        else:
            misses.append(idx)
    for start in range(0, len(misses), batch):
        chunk = misses[start : start + batch]
        texts = [
            build_marked_sequence(normalized[i], budget).wire_text() for i in chunk
        ]
        vectors = client.encode(texts, mode="cls", budget=budget)
        for i, vec in zip(chunk, vectors):
            if vec.shape != (profile.dim,):
                raise ContractViolationError(
                    f"backend {profile.backend_id} returned dim {vec.shape}, "
                    f"profile declares {profile.dim}"
                )
            results[i] = vec
            if memo is not None:
                memo[(tuple(normalized[i]), budget, profile.backend_id)] = vec
    return results  # type: ignore[return-value]


def mean_word_embedding(text: str, profile: EncoderProfile, client=None) -> np.ndarray:
    """Mean of per-token vectors; the word-level view used by similarity baselines."""
    if profile.kind == "reference":
        tokens = tokenize(text)
        if not tokens:
            return np.zeros(profile.dim, dtype=np.float64)
        return np.mean([token_vector(t, profile.dim) for t in tokens], axis=0)
    if client is None:
        raise ContractViolationError("external-service profile requires an HTTP client")
    vec = client.encode([text], mode="mean-word", budget=512)[0]
    if vec.shape != (profile.dim,):
        raise ContractViolationError(
            f"backend {profile.backend_id} returned dim {vec.shape}, "
            f"profile declares {profile.dim}"
        )
    return vec
