"""Data ingestion: subtitle cues, transcripts, alignment, clip segmentation.

Subtitle files carry timestamps but no speakers; transcript files carry
speakers and scene markers but no timestamps.  A global dynamic-program
alignment (match / skip-subtitle / skip-transcript moves) transfers
speakers onto timestamped subtitles.  Scenes are then tiled into
uniform ~20-second clips, and the dataset file is parsed into QA
samples plus the seed of the knowledge base.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .encoding import EncoderProfile, tokenize
from .errors import DataError, FormatError, PreconditionError
from .knowledge import KnowledgeBase, KnowledgeInstance
from .samples import QASample, load_samples

UNKNOWN_SPEAKER = "unknown"
SKIP_COST = -0.1
CLIP_SECONDS = 20.0
MIN_REMAINDER_SECONDS = 5.0

_TIME_RE = re.compile(
    r"(\d{2}):(\d{2}):(\d{2})[,.](\d{3})\s*-->\s*(\d{2}):(\d{2}):(\d{2})[,.](\d{3})"
)


@dataclass
class SubtitleLine:
    """One timestamped subtitle cue; speaker is filled by alignment."""

    start: float
    end: float
    text: str
    speaker: str | None = None

    def __post_init__(self):
        if not self.start < self.end:
            raise DataError(
                f"subtitle timestamps must satisfy start < end, "
                f"got [{self.start}, {self.end}]"
            )
        if not self.text.strip():
            raise DataError("subtitle text must be non-empty")


@dataclass
class TranscriptLine:
    """One speaker-attributed transcript utterance within a scene."""

    speaker: str
    text: str
    scene_id: int = 0

    def __post_init__(self):
        if not self.speaker.strip():
            raise DataError("transcript speaker must be non-empty")


@dataclass
class ClipRecord:
    """A uniform ~20s segment of a scene with its contained subtitles."""

    clip_ref: str
    scene_id: int
    start: float
    end: float
    subtitles: list[SubtitleLine] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "clip_ref": self.clip_ref,
            "scene_id": self.scene_id,
            "start": self.start,
            "end": self.end,
            "subtitles": [
                {
                    "start": s.start,
                    "end": s.end,
                    "text": s.text,
                    "speaker": s.speaker,
                }
                for s in self.subtitles
            ],
        }


def _timestamp_seconds(h: str, m: str, s: str, ms: str) -> float:
    return int(h) * 3600 + int(m) * 60 + int(s) + int(ms) / 1000.0


def parse_srt(text: str, source: str = "<srt>") -> list[SubtitleLine]:
    """Parse timestamped cue blocks: index line, time range, text lines."""
    subtitles: list[SubtitleLine] = []
    lines = text.splitlines()
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        index_line = i
        if not lines[i].strip().isdigit():
            raise FormatError(f"{source}:{i + 1}: expected cue index")
        i += 1
        if i >= n:
            raise FormatError(f"{source}:{index_line + 1}: truncated cue")
        match = _TIME_RE.match(lines[i].strip())
        if not match:
            raise FormatError(f"{source}:{i + 1}: bad time range {lines[i]!r}")
        start = _timestamp_seconds(*match.groups()[:4])
        end = _timestamp_seconds(*match.groups()[4:])
        i += 1
        body: list[str] = []
        while i < n and lines[i].strip():
            body.append(lines[i].strip())
            i += 1
        if not body:
            raise FormatError(f"{source}:{index_line + 1}: cue has no text")
        try:
            subtitles.append(SubtitleLine(start=start, end=end, text=" ".join(body)))
        except DataError as exc:
            raise FormatError(f"{source}:{index_line + 1}: {exc}") from exc
    return subtitles


def format_srt(subtitles: list[SubtitleLine]) -> str:
    """Render cues back to the timestamped block format."""

    def stamp(seconds: float) -> str:
        ms = round(seconds * 1000)
        h, rem = divmod(ms, 3600_000)
        m, rem = divmod(rem, 60_000)
        s, ms = divmod(rem, 1000)
        return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"

    blocks = [
        f"{i}\n{stamp(sub.start)} --> {stamp(sub.end)}\n{sub.text}\n"
        for i, sub in enumerate(subtitles, start=1)
    ]
    return "\n".join(blocks)


def parse_transcript(text: str, source: str = "<transcript>") -> list[TranscriptLine]:
    """Parse "Speaker: utterance" lines; "Scene:" lines advance the scene id."""
    lines_out: list[TranscriptLine] = []
    scene_id = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.lower().startswith("scene:"):
            scene_id += 1
            continue
        if ":" not in line:
            raise FormatError(
                f"{source}:{lineno}: expected 'Speaker: utterance', got {line!r}"
            )
        speaker, utterance = line.split(":", 1)
        try:
            lines_out.append(
                TranscriptLine(
                    speaker=speaker.strip(),
                    text=utterance.strip(),
                    scene_id=scene_id,
                )
            )
        except DataError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from exc
    return lines_out


def _token_set(text: str) -> frozenset:
    return frozenset(t for t in tokenize(text) if any(c.isalnum() for c in t))


def jaccard(a: str, b: str) -> float:
    """Word-token-set overlap of two texts; 0 when either side is empty.

    Punctuation tokens are excluded so surface differences like trailing
    periods do not dilute the overlap between otherwise identical lines.
    """
    sa, sb = _token_set(a), _token_set(b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def _alignment_table(subs, transcript):
    """Score table and move table for the global alignment DP.

    Moves: 0 = match (requires positive overlap), 1 = skip transcript
    line, 2 = skip subtitle.  Ties prefer match, then skip-transcript.
    """
    n_s, n_t = len(subs), len(transcript)
    score = [[0.0] * (n_t + 1) for _ in range(n_s + 1)]
    move = [[-1] * (n_t + 1) for _ in range(n_s + 1)]
    for j in range(1, n_t + 1):
        score[0][j] = score[0][j - 1] + SKIP_COST
        move[0][j] = 1
    for i in range(1, n_s + 1):
        score[i][0] = score[i - 1][0] + SKIP_COST
        move[i][0] = 2
        for j in range(1, n_t + 1):
            overlap = jaccard(subs[i - 1].text, transcript[j - 1].text)
            candidates = []
            if overlap > 0.0:
                candidates.append((score[i - 1][j - 1] + overlap, 0))
            candidates.append((score[i][j - 1] + SKIP_COST, 1))
            candidates.append((score[i - 1][j] + SKIP_COST, 2))
            best = max(candidates, key=lambda c: (c[0], -c[1]))
            score[i][j], move[i][j] = best
    return score, move


def alignment_score(subs, transcript) -> float:
    """Optimal total alignment score for the two line sequences."""
    if not subs or not transcript:
        raise PreconditionError("alignment requires non-empty line lists")
    score, _ = _alignment_table(subs, transcript)
    return score[len(subs)][len(transcript)]


def align_subtitles_transcript(
    subs: list[SubtitleLine], transcript: list[TranscriptLine]
) -> list[SubtitleLine]:
    """Fill subtitle speakers from the best-scoring global alignment.

    Returns new SubtitleLine objects in input order; subtitles that the
    optimal alignment leaves unmatched get the unknown speaker.
    """
    if not subs or not transcript:
        raise PreconditionError("alignment requires non-empty line lists")
    _, move = _alignment_table(subs, transcript)
    matched_speaker: dict[int, str] = {}
    i, j = len(subs), len(transcript)
    while i > 0 or j > 0:
        m = move[i][j]
        if m == 0:
            matched_speaker[i - 1] = transcript[j - 1].speaker
            i -= 1
            j -= 1
        elif m == 1:
            j -= 1
        else:
            i -= 1
    return [
        SubtitleLine(
            start=sub.start,
            end=sub.end,
            text=sub.text,
            speaker=matched_speaker.get(idx, UNKNOWN_SPEAKER),
        )
        for idx, sub in enumerate(subs)
    ]


def segment_scene(
    scene_id: int,
    start: float,
    end: float,
    subtitles: list[SubtitleLine] | None = None,
    clip_len: float = CLIP_SECONDS,
    min_remainder: float = MIN_REMAINDER_SECONDS,
) -> list[ClipRecord]:
    """Tile [start, end] with ``clip_len`` windows.

    A final remainder of at least ``min_remainder`` seconds becomes its
    own clip; a smaller one merges into the previous clip.  A scene
    shorter than ``clip_len`` is a single clip.  Subtitles are assigned
    to the clip containing their midpoint (clamped to the scene).
    """
    if not end > start:
        raise PreconditionError(f"scene must have end > start, got [{start}, {end}]")
    duration = end - start
    bounds: list[tuple[float, float]] = []
    if duration <= clip_len:
        bounds.append((start, end))
    else:
        n_full = int(duration // clip_len)
        remainder = duration - n_full * clip_len
        if remainder < 1e-9:
            edges = [start + k * clip_len for k in range(n_full)] + [end]
        elif remainder >= min_remainder:
            edges = [start + k * clip_len for k in range(n_full + 1)] + [end]
        else:
            edges = [start + k * clip_len for k in range(n_full)] + [end]
        bounds = list(zip(edges[:-1], edges[1:]))

    clips = [
        ClipRecord(
            clip_ref=f"scene{scene_id}_clip{idx}",
            scene_id=scene_id,
            start=lo,
            end=hi,
        )
        for idx, (lo, hi) in enumerate(bounds)
    ]
    for sub in subtitles or []:
        mid = (sub.start + sub.end) / 2.0
        target = clips[-1]
        for clip in clips:
            if mid < clip.end:
                target = clip
                break
        target.subtitles.append(sub)
    return clips


def parse_dataset(
    path, profile: EncoderProfile
) -> tuple[list[QASample], KnowledgeBase]:
    """Dataset JSONL to samples plus a KB seeded from distinct knowledge.

    Knowledge instances get sequential ids in order of first appearance;
    embeddings are left for the KB build stage.
    """
    samples = load_samples(path)
    instances: list[KnowledgeInstance] = []
    seen: dict[str, int] = {}
    for sample in samples:
        text = sample.gold_knowledge
        if text and text not in seen:
            seen[text] = len(instances)
            instances.append(KnowledgeInstance(id=len(instances), text=text))
    return samples, KnowledgeBase(instances, profile)


def save_clips(clips: list[ClipRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            fh.write(json.dumps(clip.to_dict()) + "\n")


def save_aligned_subtitles(subtitles: list[SubtitleLine], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sub in subtitles:
            record = {
                "start": sub.start,
                "end": sub.end,
                "text": sub.text,
                "speaker": sub.speaker,
            }
            fh.write(json.dumps(record) + "\n")
