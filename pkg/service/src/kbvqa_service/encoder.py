"""Deterministic stub encoder, independent of the core package.

This is a standalone reimplementation of the ``kbvqa`` reference
encoder: lowercase word/punctuation tokenization, fixed-budget marker
framing, FNV-1a-seeded pseudo-random token vectors, position weighting
by 1/(position+1), and L2 normalization.  It must stay bit-identical to
the core implementation; the shared conformance fixture generated by
the core guards every release against drift.

Wire format: a request text is a sequence of whitespace-separated
tokens in which the literal word ``[SEP]`` separates segments.  The
leading ``[CLS]`` and final ``[SEP]`` are implicit and re-added here.
"""

from __future__ import annotations

import re

import numpy as np

DIM = 32
MIN_BUDGET = 3

PAD_TOKEN, CLS_TOKEN, SEP_TOKEN = "[PAD]", "[CLS]", "[SEP]"
_MARKERS = frozenset({PAD_TOKEN, CLS_TOKEN, SEP_TOKEN})

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class EncodeError(ValueError):
    """Malformed encode input (bad budget, bad mode, bad text)."""


def fnv1a_64(text: str) -> int:
    """Stable 64-bit FNV-1a hash of a string (UTF-8 bytes)."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def splitmix64_unit(seed: int, count: int) -> np.ndarray:
    """``count`` doubles in [0, 1) from a splitmix64 stream."""
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


_token_cache: dict[str, np.ndarray] = {}


def token_vector(token: str) -> np.ndarray:
    """Deterministic unit vector for one token."""
    cached = _token_cache.get(token)
    if cached is None:
        raw = 2.0 * splitmix64_unit(fnv1a_64(token), DIM) - 1.0
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raw[0] = 1.0
            norm = 1.0
        cached = raw / norm
        cached.flags.writeable = False
        _token_cache[token] = cached
    return cached


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word tokens and standalone punctuation."""
    return _TOKEN_RE.findall(text.lower())


def weighted_encode(tokens: list[str]) -> np.ndarray:
    """Position-weighted sum of token vectors, L2-normalized; empty is zero."""
    if not tokens:
        return np.zeros(DIM, dtype=np.float64)
    acc = np.zeros(DIM, dtype=np.float64)
    for pos, token in enumerate(tokens):
        acc += token_vector(token) / (pos + 1)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        return np.zeros(DIM, dtype=np.float64)
    return acc / norm


def split_segments(text: str) -> list[str]:
    """Split a wire text on the literal ``[SEP]`` delimiter."""
    return text.split(SEP_TOKEN)


def cls_vector(text: str, budget: int) -> np.ndarray:
    """Sequence-level vector of one wire text at a token budget.

    Rebuilds the marked sequence ([CLS], per-segment [SEP]s, final
    [SEP]), applies tail truncation to the budget, strips markers, and
    encodes the remaining content tokens.
    """
    segments = split_segments(text)
    if budget < len(segments) + 2:
        raise EncodeError(
            f"budget {budget} cannot hold markers for {len(segments)} segment(s)"
        )
    tokens = [CLS_TOKEN]
    for segment in segments:
        tokens.extend(tokenize(segment))
        tokens.append(SEP_TOKEN)
    if len(tokens) > budget:
        tokens = tokens[: budget - 1] + [SEP_TOKEN]
    content = [t for t in tokens if t not in _MARKERS]
    return weighted_encode(content)


def mean_word_vector(text: str) -> np.ndarray:
    """Unweighted mean of per-token vectors; the static word-level view."""
    tokens = tokenize(text)
    if not tokens:
        return np.zeros(DIM, dtype=np.float64)
    return np.mean([token_vector(t) for t in tokens], axis=0)


def encode_batch(texts: list[str], mode: str, budget: int) -> list[np.ndarray]:
    """Encode a batch of wire texts in one of the supported modes."""
    if mode == "cls":
        if budget < MIN_BUDGET:
            raise EncodeError(f"budget must be at least {MIN_BUDGET}, got {budget}")
        return [cls_vector(text, budget) for text in texts]
    if mode == "mean-word":
        return [mean_word_vector(text) for text in texts]
    raise EncodeError(f"unknown encode mode {mode!r}")
