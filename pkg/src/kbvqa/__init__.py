"""Knowledge-grounded multiple-choice question answering over video clips.

The package covers the full chain: ingesting subtitles, transcripts,
and QA datasets; building and deduplicating a knowledge base; training
a retrieval scorer that ranks knowledge for each question; training a
late-fusion reasoning head over language and visual features; and
evaluating answer accuracy and retrieval quality against non-neural
baselines.  ``kbvqa.cli`` exposes the same chain as a staged,
idempotent command-line pipeline.
"""

from .encoding import (
    EncoderProfile,
    TokenSequence,
    build_marked_sequence,
    encode_text_cls,
    encode_texts_cls,
    reference_encode,
    reference_profile,
    tokenize,
)
from .errors import (
    BackendError,
    ConfigError,
    ContractViolationError,
    DataError,
    FormatError,
    KbvqaError,
    MissingInputError,
    PreconditionError,
)
from .evaluation import (
    EvaluationReport,
    RetrievalEvalReport,
    accuracy_by_type,
    baseline_length,
    baseline_similarity,
    baseline_tfidf_train,
    rank_of_gold,
    retrieval_metrics,
)
from .ingestion import (
    ClipRecord,
    SubtitleLine,
    TranscriptLine,
    align_subtitles_transcript,
    alignment_score,
    parse_dataset,
    parse_srt,
    parse_transcript,
    segment_scene,
)
from .knowledge import (
    DedupReport,
    KnowledgeBase,
    KnowledgeInstance,
    dedup,
    embed_kb,
    load_kb,
    persist_kb,
    similarity,
)
from .pipeline import PipelineConfig, PipelineContext, run_pipeline, run_stage
from .reasoning import (
    Prediction,
    ReasoningConfig,
    ReasoningModel,
    VisualFeatures,
    run_variant,
    train_reasoning,
    variant_settings,
)
from .retrieval import (
    RankedKnowledge,
    RetrievalConfig,
    canonical_answers,
    resolve_gold_ids,
    retrieve,
    train_prior_head,
    train_scoring_head,
)
from .samples import QASample, load_samples, save_samples, split_samples
from .synthetic import make_synthetic_dataset, write_synthetic_workspace

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ClipRecord",
    "ConfigError",
    "ContractViolationError",
    "DataError",
    "DedupReport",
    "EncoderProfile",
    "EvaluationReport",
    "FormatError",
    "KbvqaError",
    "KnowledgeBase",
    "KnowledgeInstance",
    "MissingInputError",
    "PipelineConfig",
    "PipelineContext",
    "PreconditionError",
    "Prediction",
    "QASample",
    "RankedKnowledge",
    "ReasoningConfig",
    "ReasoningModel",
    "RetrievalConfig",
    "RetrievalEvalReport",
    "SubtitleLine",
    "TokenSequence",
    "TranscriptLine",
    "VisualFeatures",
    "accuracy_by_type",
    "align_subtitles_transcript",
    "alignment_score",
    "baseline_length",
    "baseline_similarity",
    "baseline_tfidf_train",
    "build_marked_sequence",
    "canonical_answers",
    "dedup",
    "embed_kb",
    "encode_text_cls",
    "encode_texts_cls",
    "load_kb",
    "load_samples",
    "make_synthetic_dataset",
    "parse_dataset",
    "parse_srt",
    "parse_transcript",
    "persist_kb",
    "rank_of_gold",
    "reference_encode",
    "reference_profile",
    "resolve_gold_ids",
    "retrieval_metrics",
    "retrieve",
    "run_pipeline",
    "run_stage",
    "run_variant",
    "save_samples",
    "segment_scene",
    "similarity",
    "split_samples",
    "tokenize",
    "train_prior_head",
    "train_reasoning",
    "train_scoring_head",
    "variant_settings",
    "write_synthetic_workspace",
]
