"""Knowledge base: storage, embedding, and near-duplicate removal.

A knowledge base is an id-indexed collection of natural-language
sentences ("knowledge instances").  Instances are embedded with a
sequence budget of 60 tokens.  Near-duplicates are removed by building
an undirected graph with an edge wherever cosine similarity exceeds a
threshold, finding connected components, and keeping one representative
per component (the lowest id, for reproducibility).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .encoding import EncoderProfile, encode_text_cls
from .errors import (
    DataError,
    DegenerateVectorError,
    FormatError,
    PreconditionError,
)

KB_EMBED_BUDGET = 60
KB_FORMAT_VERSION = 1
DEFAULT_DEDUP_THRESHOLD = 0.998


@dataclass
class KnowledgeInstance:
    """One sentence of show knowledge, optionally with its embedding."""

    id: int
    text: str
    embedding: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, KnowledgeInstance):
            return NotImplemented
        if self.id != other.id or self.text != other.text:
            return False
        if self.embedding is None or other.embedding is None:
            return self.embedding is None and other.embedding is None
        return np.array_equal(self.embedding, other.embedding)


class KnowledgeBase:
    """Immutable-by-convention store of knowledge instances."""

    def __init__(self, instances: list[KnowledgeInstance], encoder_profile: EncoderProfile):
        seen: set[int] = set()
        for inst in instances:
            if not inst.text.strip():
                raise DataError(
                    f"knowledge instance {inst.id} has empty text", offending=[inst.id]
                )
            if inst.id in seen:
                raise DataError(
                    f"duplicate knowledge id {inst.id}", offending=[inst.id]
                )
            seen.add(inst.id)
        self.instances: dict[int, KnowledgeInstance] = {
            inst.id: inst for inst in instances
        }
        self.encoder_profile = encoder_profile

    @property
    def size(self) -> int:
        return len(self.instances)

    def ids(self) -> list[int]:
        return sorted(self.instances)

    def texts(self) -> list[str]:
        return [self.instances[i].text for i in self.ids()]

    def embedding_matrix(self) -> np.ndarray:
        """(N, dim) matrix in ascending-id order; requires all embedded."""
        rows = []
        for i in self.ids():
            emb = self.instances[i].embedding
            if emb is None:
                raise PreconditionError(f"knowledge instance {i} is not embedded")
            rows.append(emb)
        if not rows:
            return np.zeros((0, self.encoder_profile.dim), dtype=np.float64)
        return np.vstack(rows)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (
            self.encoder_profile == other.encoder_profile
            and self.ids() == other.ids()
            and all(self.instances[i] == other.instances[i] for i in self.instances)
        )

    def __repr__(self):
        return (
            f"KnowledgeBase(size={self.size}, "
            f"backend={self.encoder_profile.backend_id!r})"
        )


@dataclass
class DedupReport:
    """Outcome of one dedup pass: component partition and survivors."""

    clusters: list[list[int]]
    kept: list[int]
    removed_count: int
    threshold: float

    def to_dict(self) -> dict:
        return {
            "clusters": self.clusters,
            "kept": self.kept,
            "removed_count": self.removed_count,
            "threshold": self.threshold,
        }


def embed_instance(
    inst: KnowledgeInstance,
    profile: EncoderProfile,
    client=None,
    memo: dict | None = None,
) -> np.ndarray:
    """Embed one instance at the knowledge budget; caches on the instance."""
    if not inst.text.strip():
        raise PreconditionError(f"knowledge instance {inst.id} has empty text")
    if inst.embedding is None:
        inst.embedding = encode_text_cls(
            [inst.text], KB_EMBED_BUDGET, profile, client=client, memo=memo
        )
    return inst.embedding


def embed_kb(kb: KnowledgeBase, client=None, memo: dict | None = None) -> KnowledgeBase:
    """Embed every instance in place (no-op for already-embedded ones)."""
    for inst in kb.instances.values():
        embed_instance(inst, kb.encoder_profile, client=client, memo=memo)
    return kb


def similarity(p_i: np.ndarray, p_j: np.ndarray) -> float:
    """Cosine similarity of two vectors; rejects zero-norm inputs."""
    n_i = float(np.linalg.norm(p_i))
    n_j = float(np.linalg.norm(p_j))
    if n_i == 0.0 or n_j == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero vectors")
    return float(np.dot(p_i, p_j) / (n_i * n_j))


def _similarity_edges(matrix: np.ndarray, threshold: float, block: int = 2048):
    """Yield (i, j) index pairs with cosine similarity > threshold, i < j.

    Works blockwise so the full N x N similarity matrix is never
    materialized; peak extra memory is block x N floats.
    """
    n = matrix.shape[0]
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms == 0.0).tolist()
        raise DegenerateVectorError(f"zero-norm embeddings at rows {bad}")
    unit = matrix / norms[:, None]
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = unit[start:stop] @ unit.T
        rows, cols = np.nonzero(sims > threshold)
        for r, c in zip(rows.tolist(), cols.tolist()):
            i = start + r
            if i < c:
                yield i, c


def dedup(
    kb: KnowledgeBase, threshold: float = DEFAULT_DEDUP_THRESHOLD
) -> tuple[KnowledgeBase, DedupReport]:
    """Remove near-duplicates via connected components of the similarity graph.

    Every instance belongs to exactly one reported cluster (singletons
    included); the lowest id in each cluster survives.
    """
    if not (0.0 < threshold <= 1.0):
        raise PreconditionError(f"threshold must be in (0, 1], got {threshold}")
    ids = kb.ids()
    n = len(ids)
    if n == 0:
        return KnowledgeBase([], kb.encoder_profile), DedupReport([], [], 0, threshold)
    matrix = kb.embedding_matrix()

    edges = list(_similarity_edges(matrix, threshold))
    if edges:
        rows, cols = zip(*edges)
        data = np.ones(len(edges), dtype=np.int8)
        graph = coo_matrix((data, (rows, cols)), shape=(n, n))
    else:
        graph = coo_matrix((n, n), dtype=np.int8)
    n_components, labels = connected_components(graph, directed=False)

    clusters_by_label: dict[int, list[int]] = {}
    for idx, label in enumerate(labels.tolist()):
        clusters_by_label.setdefault(label, []).append(ids[idx])
    clusters = sorted(clusters_by_label.values(), key=lambda c: c[0])
    kept = [min(c) for c in clusters]

    survivors = [kb.instances[i] for i in kept]
    cleaned = KnowledgeBase(survivors, kb.encoder_profile)
    report = DedupReport(
        clusters=clusters,
        kept=kept,
        removed_count=kb.size - cleaned.size,
        threshold=threshold,
    )
    return cleaned, report


def persist_kb(kb: KnowledgeBase, path) -> None:
    """Write a KB as JSONL: one header record, then one record per instance."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "version": KB_FORMAT_VERSION,
            "encoder_profile": kb.encoder_profile.to_dict(),
        }
        fh.write(json.dumps(header) + "\n")
        for i in kb.ids():
            inst = kb.instances[i]
            record = {
                "id": inst.id,
                "text": inst.text,
                "embedding": None
                if inst.embedding is None
                else inst.embedding.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def load_kb(path, expected_profile: EncoderProfile | None = None) -> KnowledgeBase:
    """Load a persisted KB; rejects version or backend mismatches."""
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise FormatError(f"{path}: missing KB header record")
        header = json.loads(header_line)
        if header.get("version") != KB_FORMAT_VERSION:
            raise FormatError(
                f"{path}: unsupported KB format version {header.get('version')}"
            )
        profile = EncoderProfile.from_dict(header["encoder_profile"])
        if expected_profile is not None and profile.backend_id != expected_profile.backend_id:
            raise FormatError(
                f"{path}: KB was embedded with backend "
                f"{profile.backend_id!r}, expected {expected_profile.backend_id!r}"
            )
        instances = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            emb = rec.get("embedding")
            instances.append(
                KnowledgeInstance(
                    id=int(rec["id"]),
                    text=rec["text"],
                    embedding=None if emb is None else np.asarray(emb, dtype=np.float64),
                )
            )
    return KnowledgeBase(instances, profile)
