"""Pipeline orchestration: configuration, stages, artifacts, idempotence.

Each stage reads declared input files, writes declared output files
under the working directory, and records a meta file carrying the
config hash and input timestamps.  A stage is skipped when its outputs
exist, are at least as new as every input, and the config hash is
unchanged; ``force`` overrides.  Changing the seed changes the hash, so
retraining is triggered automatically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend_client import HttpEncoderClient
from .cache import EncodingCache
from .encoding import EncoderProfile, reference_profile
from .errors import ConfigError, DataError, MissingInputError
from .evaluation import (
    EvaluationReport,
    accuracy_by_type,
    baseline_length,
    baseline_similarity,
    baseline_tfidf_train,
    format_accuracy_table,
    format_retrieval_table,
    rank_of_gold,
    retrieval_metrics,
)
from .ingestion import (
    align_subtitles_transcript,
    parse_dataset,
    parse_srt,
    parse_transcript,
    save_aligned_subtitles,
    save_clips,
    segment_scene,
    SubtitleLine,
)
from .knowledge import (
    DEFAULT_DEDUP_THRESHOLD,
    dedup,
    embed_kb,
    load_kb,
    persist_kb,
)
from .reasoning import (
    ReasoningConfig,
    load_features,
    load_predictions,
    load_reasoning_model,
    run_variant,
    save_predictions,
    save_reasoning_model,
    train_reasoning,
    variant_settings,
)
from .retrieval import (
    RetrievalConfig,
    load_head,
    load_retrievals,
    resolve_gold_ids,
    retrieve,
    save_head,
    save_retrievals,
    train_prior_head,
    train_scoring_head,
)
from .samples import SPLITS, load_samples, save_samples, split_samples

PIPELINE_STAGES = (
    "ingest",
    "build-kb",
    "dedup-kb",
    "train-retrieval",
    "retrieve",
    "train-reasoning",
    "predict",
    "evaluate",
)
UTILITY_STAGES = ("align", "segment")
ALL_STAGES = PIPELINE_STAGES + UTILITY_STAGES

ARTIFACT_NAMES = {
    "samples": "samples.jsonl",
    "kb_seed": "kb_seed.jsonl",
    "kb_embedded": "kb_embedded.jsonl",
    "kb_clean": "kb_clean.jsonl",
    "dedup_report": "dedup_report.json",
    "prior_head": "prior_head.json",
    "scoring_head": "scoring_head.json",
    "retrievals": "retrievals.jsonl",
    "retrievals_eval": "retrievals_eval.jsonl",
    "reasoning_model": "reasoning_model.json",
    "predictions": "predictions.jsonl",
    "report": "report.json",
    "aligned": "aligned.jsonl",
    "clips": "clips.jsonl",
    "cache": "encode_cache.jsonl",
}


def _sub_config(cls, data: dict, label: str):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {label} config: {exc}") from exc


@dataclass
class PipelineConfig:
    """Declarative run configuration; flags override file values."""

    seed: int = 17
    backend: str | None = None
    workdir: str = "artifacts"
    variant: str = "full"
    eval_split: str = "test"
    output_format: str = "table"
    baselines: bool = True
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    dataset: str | None = None
    features: str | None = None
    subtitles: str | None = None
    transcript: str | None = None
    scenes: str | None = None
    paths: dict = field(default_factory=dict)
    retrieval: RetrievalConfig | None = None
    reasoning: ReasoningConfig | None = None

    def __post_init__(self):
        if self.retrieval is None:
            self.retrieval = RetrievalConfig(seed=self.seed)
        if self.reasoning is None:
            self.reasoning = ReasoningConfig(seed=self.seed)
        variant_settings(self.variant)
        if self.eval_split not in SPLITS:
            raise ConfigError(f"unknown eval split {self.eval_split!r}")
        if self.output_format not in ("table", "json"):
            raise ConfigError(f"unknown output format {self.output_format!r}")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        seed = int(data.get("seed", 17))
        retrieval = dict(data.pop("retrieval", {}))
        reasoning = dict(data.pop("reasoning", {}))
        retrieval.setdefault("seed", seed)
        reasoning.setdefault("seed", seed)
        data["retrieval"] = _sub_config(RetrievalConfig, retrieval, "retrieval")
        data["reasoning"] = _sub_config(ReasoningConfig, reasoning, "reasoning")

        base = Path(base_dir)
        for key in ("workdir", "dataset", "features", "subtitles", "transcript", "scenes"):
            if data.get(key) is not None:
                data[key] = str(base / data[key])
        data["paths"] = {
            name: str(base / p) for name, p in dict(data.get("paths", {})).items()
        }
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def set_seed(self, seed: int) -> None:
        """Propagate one seed to every trainable component."""
        self.seed = int(seed)
        self.retrieval = dataclasses.replace(self.retrieval, seed=self.seed)
        self.reasoning = dataclasses.replace(self.reasoning, seed=self.seed)

    def artifact(self, name: str) -> Path:
        if name not in ARTIFACT_NAMES:
            raise ConfigError(f"unknown artifact {name!r}")
        if name in self.paths:
            return Path(self.paths[name])
        return Path(self.workdir) / ARTIFACT_NAMES[name]

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        return data

    def config_hash(self) -> str:
        """Hash of everything that affects artifacts (not presentation)."""
        data = self.to_dict()
        data.pop("output_format", None)
        payload = json.dumps(data, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class PipelineContext:
    """Shared state for one run: config, encoder profile, encode cache."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.workdir = Path(config.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        (self.workdir / "meta").mkdir(exist_ok=True)
        if config.backend:
            self.client = HttpEncoderClient(config.backend)
            self.profile: EncoderProfile = self.client.profile()
        else:
            self.client = None
            self.profile = reference_profile()
        cache_path = config.artifact("cache")
        if cache_path.exists():
            self.memo = EncodingCache.load(cache_path)
        else:
            self.memo = EncodingCache()

    def save_cache(self) -> None:
        if self.memo.dirty:
            self.memo.save(self.config.artifact("cache"))

    def meta_path(self, stage: str) -> Path:
        return self.workdir / "meta" / f"{stage}.json"


def _require(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise MissingInputError(f"missing input {path} ({hint})")
    return Path(path)


def _retrieved_texts(ctx: PipelineContext, kb) -> dict[str, list[str]]:
    rankings = load_retrievals(ctx.config.artifact("retrievals"))
    return {
        sample_id: [kb.instances[i].text for i in ranked.ids()]
        for sample_id, ranked in rankings.items()
    }


def _features_if_needed(ctx: PipelineContext, settings):
    if not settings.use_visual or ctx.config.reasoning.visual_kind == "none":
        return None
    path = _require(
        Path(ctx.config.features or ""),
        "features file required for visual variants; set 'features' in the config",
    )
    return load_features(path)


def stage_ingest(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    if not config.dataset:
        raise MissingInputError("no dataset configured; set 'dataset' in the config")
    dataset = _require(Path(config.dataset), "dataset JSONL")
    samples, kb = parse_dataset(dataset, ctx.profile)
    out_samples = config.artifact("samples")
    out_kb = config.artifact("kb_seed")
    save_samples(samples, out_samples)
    persist_kb(kb, out_kb)
    return [out_samples, out_kb]


def stage_build_kb(ctx: PipelineContext) -> list[Path]:
    seed_path = _require(ctx.config.artifact("kb_seed"), "run ingest first")
    kb = load_kb(seed_path, expected_profile=ctx.profile)
    embed_kb(kb, client=ctx.client, memo=ctx.memo)
    out = ctx.config.artifact("kb_embedded")
    persist_kb(kb, out)
    return [out]


def stage_dedup_kb(ctx: PipelineContext) -> list[Path]:
    kb_path = _require(ctx.config.artifact("kb_embedded"), "run build-kb first")
    kb = load_kb(kb_path, expected_profile=ctx.profile)
    cleaned, report = dedup(kb, threshold=ctx.config.dedup_threshold)
    out_kb = ctx.config.artifact("kb_clean")
    out_report = ctx.config.artifact("dedup_report")
    persist_kb(cleaned, out_kb)
    payload = report.to_dict()
    payload["size_before"] = kb.size
    payload["size_after"] = cleaned.size
    out_report.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return [out_kb, out_report]


def stage_train_retrieval(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    samples = load_samples(_require(config.artifact("samples"), "run ingest first"))
    kb = load_kb(
        _require(config.artifact("kb_clean"), "run dedup-kb first"),
        expected_profile=ctx.profile,
    )
    train = split_samples(samples)["train"]
    outputs: list[Path] = []
    prior = None
    if config.retrieval.mode == "prior-score":
        prior = train_prior_head(
            train, config.retrieval, ctx.profile, client=ctx.client, memo=ctx.memo
        )
        prior_path = config.artifact("prior_head")
        save_head(prior, "prior", ctx.profile, prior_path)
        outputs.append(prior_path)
    scoring = train_scoring_head(
        train, kb, config.retrieval, prior, ctx.profile,
        client=ctx.client, memo=ctx.memo,
    )
    scoring_path = config.artifact("scoring_head")
    save_head(scoring, "scoring", ctx.profile, scoring_path)
    outputs.append(scoring_path)
    return outputs


def stage_retrieve(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    samples = load_samples(_require(config.artifact("samples"), "run ingest first"))
    kb = load_kb(
        _require(config.artifact("kb_clean"), "run dedup-kb first"),
        expected_profile=ctx.profile,
    )
    scoring, _ = load_head(
        _require(config.artifact("scoring_head"), "run train-retrieval first"),
        expected_profile=ctx.profile,
    )
    prior = None
    if config.retrieval.mode == "prior-score":
        prior, _ = load_head(
            _require(config.artifact("prior_head"), "run train-retrieval first"),
            expected_profile=ctx.profile,
        )
    rankings = {}
    for sample in samples:
        rankings[sample.id] = retrieve(
            sample, kb, prior, scoring, config.retrieval, ctx.profile,
            client=ctx.client, memo=ctx.memo,
        )
    out = config.artifact("retrievals")
    save_retrievals(rankings, out)

    full_config = dataclasses.replace(config.retrieval, top_k=max(kb.size, 1))
    eval_rankings = {}
    for sample in split_samples(samples)[config.eval_split]:
        eval_rankings[sample.id] = retrieve(
            sample, kb, prior, scoring, full_config, ctx.profile,
            client=ctx.client, memo=ctx.memo,
        )
    out_eval = config.artifact("retrievals_eval")
    save_retrievals(eval_rankings, out_eval)
    return [out, out_eval]


def stage_train_reasoning(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    samples = load_samples(_require(config.artifact("samples"), "run ingest first"))
    settings = variant_settings(config.variant)
    features = _features_if_needed(ctx, settings)
    retrieved = None
    if settings.knowledge_source == "retrieved":
        _require(config.artifact("retrievals"), "run retrieve first")
        kb = load_kb(
            _require(config.artifact("kb_clean"), "run dedup-kb first"),
            expected_profile=ctx.profile,
        )
        retrieved = _retrieved_texts(ctx, kb)
    splits = split_samples(samples)
    model = train_reasoning(
        splits["train"], features, retrieved, config.reasoning, ctx.profile,
        variant=config.variant, val_samples=splits["val"] or None,
        client=ctx.client, memo=ctx.memo,
    )
    out = config.artifact("reasoning_model")
    save_reasoning_model(model, out)
    return [out]


def stage_predict(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    samples = load_samples(_require(config.artifact("samples"), "run ingest first"))
    model = load_reasoning_model(
        _require(config.artifact("reasoning_model"), "run train-reasoning first")
    )
    settings = variant_settings(config.variant)
    features = _features_if_needed(ctx, settings)
    retrieved = None
    if settings.knowledge_source == "retrieved":
        _require(config.artifact("retrievals"), "run retrieve first")
        kb = load_kb(
            _require(config.artifact("kb_clean"), "run dedup-kb first"),
            expected_profile=ctx.profile,
        )
        retrieved = _retrieved_texts(ctx, kb)
    eval_samples = split_samples(samples)[config.eval_split]
    predictions = run_variant(
        eval_samples, model, config.reasoning, config.variant,
        features=features, retrieved_texts=retrieved,
        client=ctx.client, memo=ctx.memo,
    )
    out = config.artifact("predictions")
    save_predictions(predictions, eval_samples, out)
    return [out]


def _baseline_reports(ctx, eval_samples, train_samples) -> list[EvaluationReport]:
    """Accuracy reports for the non-neural baselines on the eval split."""
    config = ctx.config
    reports = []
    rng = np.random.default_rng(config.seed)
    random_preds = {
        s.id: int(rng.integers(len(s.answers))) for s in eval_samples
    }
    reports.append(accuracy_by_type(random_preds, eval_samples, model_id="random"))
    longest = {s.id: baseline_length(s, "longest") for s in eval_samples}
    reports.append(accuracy_by_type(longest, eval_samples, model_id="longest"))
    shortest = {s.id: baseline_length(s, "shortest") for s in eval_samples}
    reports.append(accuracy_by_type(shortest, eval_samples, model_id="shortest"))
    similar = {
        s.id: baseline_similarity(s, ctx.profile, mode="qa", client=ctx.client)
        for s in eval_samples
    }
    reports.append(accuracy_by_type(similar, eval_samples, model_id="similarity"))
    if train_samples:
        tfidf = baseline_tfidf_train(train_samples, seed=config.seed)
        tfidf_preds = {s.id: tfidf.predict(s) for s in eval_samples}
        reports.append(accuracy_by_type(tfidf_preds, eval_samples, model_id="tf-idf"))
    return reports


def stage_evaluate(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    samples = load_samples(_require(config.artifact("samples"), "run ingest first"))
    records = load_predictions(
        _require(config.artifact("predictions"), "run predict first")
    )
    splits = split_samples(samples)
    eval_samples = splits[config.eval_split]
    predictions = {sid: int(rec["predicted"]) for sid, rec in records.items()}
    model_report = accuracy_by_type(
        predictions, eval_samples, model_id=config.variant
    )
    reports = [model_report]
    if config.baselines:
        reports.extend(_baseline_reports(ctx, eval_samples, splits["train"]))

    retrieval_report = None
    eval_rank_path = config.artifact("retrievals_eval")
    if eval_rank_path.exists():
        kb = load_kb(
            _require(config.artifact("kb_clean"), "run dedup-kb first"),
            expected_profile=ctx.profile,
        )
        rankings = load_retrievals(eval_rank_path)
        with_gold = [s for s in eval_samples if s.gold_knowledge]
        if with_gold:
            gold_ids = resolve_gold_ids(
                with_gold, kb, client=ctx.client, memo=ctx.memo
            )
            ranks = [
                rank_of_gold(rankings[s.id], gold_ids[s.id])
                for s in with_gold
                if s.id in rankings
            ]
            if ranks:
                retrieval_report = retrieval_metrics(ranks)

    payload = {
        "variant": config.variant,
        "seed": config.seed,
        "eval_split": config.eval_split,
        "accuracy": [r.to_dict() for r in reports],
        "retrieval": None if retrieval_report is None else retrieval_report.to_dict(),
    }
    out = config.artifact("report")
    out.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    if config.output_format == "table":
        print(format_accuracy_table(reports))
        if retrieval_report is not None:
            print()
            print(format_retrieval_table(retrieval_report))
    else:
        print(json.dumps(payload))
    return [out]


def stage_align(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    if not config.subtitles or not config.transcript:
        raise MissingInputError(
            "align needs 'subtitles' and 'transcript' paths in the config"
        )
    srt_path = _require(Path(config.subtitles), "subtitle file")
    transcript_path = _require(Path(config.transcript), "transcript file")
    subs = parse_srt(srt_path.read_text(encoding="utf-8"), source=str(srt_path))
    transcript = parse_transcript(
        transcript_path.read_text(encoding="utf-8"), source=str(transcript_path)
    )
    aligned = align_subtitles_transcript(subs, transcript)
    out = config.artifact("aligned")
    save_aligned_subtitles(aligned, out)
    return [out]


def _load_scene_list(path: Path) -> list[dict]:
    data = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("scenes")
    if not isinstance(data, list):
        raise DataError(f"{path}: expected a list of scenes")
    return data


def stage_segment(ctx: PipelineContext) -> list[Path]:
    config = ctx.config
    if not config.scenes:
        raise MissingInputError("segment needs a 'scenes' path in the config")
    scenes = _load_scene_list(_require(Path(config.scenes), "scene list JSON"))

    subs: list[SubtitleLine] = []
    aligned_path = config.artifact("aligned")
    if aligned_path.exists():
        for line in aligned_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                subs.append(SubtitleLine(**rec))
    elif config.subtitles and Path(config.subtitles).exists():
        subs = parse_srt(
            Path(config.subtitles).read_text(encoding="utf-8"),
            source=str(config.subtitles),
        )

    clips = []
    last = len(scenes) - 1
    for idx, scene in enumerate(scenes):
        start, end = float(scene["start"]), float(scene["end"])
        scene_id = int(scene.get("scene_id", idx))
        in_scene = [
            s
            for s in subs
            if start <= (s.start + s.end) / 2.0
            and ((s.start + s.end) / 2.0 < end or (idx == last and (s.start + s.end) / 2.0 <= end))
        ]
        clips.extend(segment_scene(scene_id, start, end, subtitles=in_scene))
    out = config.artifact("clips")
    save_clips(clips, out)
    return [out]


STAGE_FUNCTIONS = {
    "ingest": stage_ingest,
    "build-kb": stage_build_kb,
    "dedup-kb": stage_dedup_kb,
    "train-retrieval": stage_train_retrieval,
    "retrieve": stage_retrieve,
    "train-reasoning": stage_train_reasoning,
    "predict": stage_predict,
    "evaluate": stage_evaluate,
    "align": stage_align,
    "segment": stage_segment,
}

STAGE_INPUTS = {
    "ingest": lambda c: [c.dataset],
    "build-kb": lambda c: [c.artifact("kb_seed")],
    "dedup-kb": lambda c: [c.artifact("kb_embedded")],
    "train-retrieval": lambda c: [c.artifact("samples"), c.artifact("kb_clean")],
    "retrieve": lambda c: [
        c.artifact("samples"),
        c.artifact("kb_clean"),
        c.artifact("scoring_head"),
    ],
    "train-reasoning": lambda c: [
        c.artifact("samples"),
        c.artifact("retrievals"),
        c.features,
    ],
    "predict": lambda c: [
        c.artifact("samples"),
        c.artifact("reasoning_model"),
        c.artifact("retrievals"),
    ],
    "evaluate": lambda c: [c.artifact("samples"), c.artifact("predictions")],
    "align": lambda c: [c.subtitles, c.transcript],
    "segment": lambda c: [c.scenes, c.subtitles],
}

STAGE_OUTPUTS = {
    "ingest": ("samples", "kb_seed"),
    "build-kb": ("kb_embedded",),
    "dedup-kb": ("kb_clean", "dedup_report"),
    "train-retrieval": ("scoring_head",),
    "retrieve": ("retrievals", "retrievals_eval"),
    "train-reasoning": ("reasoning_model",),
    "predict": ("predictions",),
    "evaluate": ("report",),
    "align": ("aligned",),
    "segment": ("clips",),
}


def _declared_outputs(config: PipelineConfig, stage: str) -> list[Path]:
    names = list(STAGE_OUTPUTS[stage])
    if stage == "train-retrieval" and config.retrieval.mode == "prior-score":
        names.insert(0, "prior_head")
    return [config.artifact(n) for n in names]


def _should_skip(ctx: PipelineContext, stage: str) -> bool:
    meta_path = ctx.meta_path(stage)
    if not meta_path.exists():
        return False
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except ValueError:
        return False
    if meta.get("config_hash") != ctx.config.config_hash():
        return False
    outputs = _declared_outputs(ctx.config, stage)
    if not all(Path(o).exists() for o in outputs):
        return False
    inputs = [Path(p) for p in STAGE_INPUTS[stage](ctx.config) if p]
    inputs = [p for p in inputs if p.exists()]
    newest_input = max((p.stat().st_mtime for p in inputs), default=0.0)
    oldest_output = min(Path(o).stat().st_mtime for o in outputs)
    return oldest_output >= newest_input


def run_stage(ctx: PipelineContext, stage: str, force: bool = False) -> dict:
    """Execute (or skip) one stage; returns the machine-readable summary."""
    if stage not in STAGE_FUNCTIONS:
        raise ConfigError(
            f"unknown stage {stage!r}; choose from {', '.join(ALL_STAGES)}"
        )
    started = time.time()
    if not force and _should_skip(ctx, stage):
        summary = {"stage": stage, "status": "skipped", "elapsed_s": 0.0}
        print(json.dumps(summary))
        return summary
    outputs = STAGE_FUNCTIONS[stage](ctx)
    ctx.save_cache()
    elapsed = round(time.time() - started, 3)
    meta = {
        "stage": stage,
        "config_hash": ctx.config.config_hash(),
        "outputs": [str(o) for o in outputs],
        "elapsed_s": elapsed,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    ctx.meta_path(stage).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    summary = {
        "stage": stage,
        "status": "ok",
        "elapsed_s": elapsed,
        "outputs": [str(o) for o in outputs],
    }
    print(json.dumps(summary))
    return summary


def run_pipeline(ctx: PipelineContext, force: bool = False) -> list[dict]:
    """Run the eight pipeline stages in order; first failure aborts."""
    return [run_stage(ctx, stage, force=force) for stage in PIPELINE_STAGES]
