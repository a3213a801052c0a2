"""Tests for subtitle/transcript parsing, DP alignment, and segmentation."""

import json

import numpy as np
import pytest

from kbvqa.encoding import reference_profile
from kbvqa.errors import DataError, FormatError, PreconditionError
from kbvqa.ingestion import (
    SKIP_COST,
    UNKNOWN_SPEAKER,
    ClipRecord,
    SubtitleLine,
    TranscriptLine,
    align_subtitles_transcript,
    alignment_score,
    format_srt,
    jaccard,
    parse_dataset,
    parse_srt,
    parse_transcript,
    save_aligned_subtitles,
    save_clips,
    segment_scene,
)

SRT_SAMPLE = """\
1
00:00:01,000 --> 00:00:03,500
Hello there.

2
00:00:04,000 --> 00:00:06,250
General Kenobi!
You are a bold one.
"""


def brute_force_alignment_score(subs, transcript):
    """Plain recursion over every monotone alignment; no memoization.

    Exponential on purpose so it shares nothing with the DP under test.
    """

    def best(i, j):
        if i == len(subs) and j == len(transcript):
            return 0.0
        options = []
        if i < len(subs) and j < len(transcript):
            overlap = jaccard(subs[i].text, transcript[j].text)
            if overlap > 0.0:
                options.append(overlap + best(i + 1, j + 1))
        if j < len(transcript):
            options.append(SKIP_COST + best(i, j + 1))
        if i < len(subs):
            options.append(SKIP_COST + best(i + 1, j))
        return max(options)

    return best(0, 0)


class TestLineValidation:
    def test_subtitle_requires_positive_span(self):
        with pytest.raises(DataError):
            SubtitleLine(start=5.0, end=5.0, text="hi")

    def test_subtitle_requires_text(self):
        with pytest.raises(DataError):
            SubtitleLine(start=0.0, end=1.0, text="   ")

    def test_transcript_requires_speaker(self):
        with pytest.raises(DataError):
            TranscriptLine(speaker=" ", text="hello")


class TestSrtParsing:
    def test_two_cues(self):
        subs = parse_srt(SRT_SAMPLE)
        assert len(subs) == 2
        assert subs[0].text == "Hello there."
        np.testing.assert_allclose(subs[0].start, 1.0)
        np.testing.assert_allclose(subs[0].end, 3.5)

    def test_multiline_body_joined(self):
        subs = parse_srt(SRT_SAMPLE)
        assert subs[1].text == "General Kenobi! You are a bold one."

    def test_timestamp_arithmetic(self):
        subs = parse_srt("1\n01:02:03,450 --> 01:02:04,000\nx\n")
        np.testing.assert_allclose(subs[0].start, 3723.45)

    def test_bad_time_range_rejected(self):
        with pytest.raises(FormatError, match="bad time range"):
            parse_srt("1\n00:00:01 --> 00:00:02\nx\n")

    def test_cue_without_text_rejected(self):
        with pytest.raises(FormatError, match="no text"):
            parse_srt("1\n00:00:01,000 --> 00:00:02,000\n\n2\n")

    def test_non_numeric_index_rejected(self):
        with pytest.raises(FormatError, match="cue index"):
            parse_srt("first\n00:00:01,000 --> 00:00:02,000\nx\n")

    def test_inverted_span_reported_with_line(self):
        with pytest.raises(FormatError, match=":1:"):
            parse_srt("1\n00:00:05,000 --> 00:00:04,000\nx\n")

    def test_format_parse_round_trip(self):
        subs = parse_srt(SRT_SAMPLE)
        again = parse_srt(format_srt(subs))
        assert [(s.start, s.end, s.text) for s in again] == [
            (s.start, s.end, s.text) for s in subs
        ]


class TestTranscriptParsing:
    def test_scene_markers_advance_scene_id(self):
        text = (
            "Scene: The apartment.\n"
            "Amy: Hello.\n"
            "Scene: The hallway.\n"
            "Raj: Goodbye.\n"
        )
        lines = parse_transcript(text)
        assert [(t.speaker, t.scene_id) for t in lines] == [("Amy", 1), ("Raj", 2)]

    def test_speaker_names_may_contain_spaces(self):
        lines = parse_transcript("Mary Cooper: Dinner is ready.\n")
        assert lines[0].speaker == "Mary Cooper"
        assert lines[0].text == "Dinner is ready."

    def test_blank_lines_skipped(self):
        lines = parse_transcript("\nAmy: Hi.\n\n\nRaj: Bye.\n")
        assert len(lines) == 2

    def test_line_without_colon_rejected(self):
        with pytest.raises(FormatError, match=":2:"):
            parse_transcript("Amy: Hi.\njust some stray text\n")

    def test_utterance_may_be_empty(self):
        lines = parse_transcript("Amy:\n")
        assert lines[0].text == ""


class TestJaccard:
    def test_identical_texts(self):
        np.testing.assert_allclose(jaccard("the cat sat", "The cat sat."), 1.0)

    def test_partial_overlap(self):
        np.testing.assert_allclose(jaccard("the cat sat", "the cat ran"), 0.5)

    def test_disjoint_texts(self):
        assert jaccard("alpha beta", "gamma delta") == 0.0

    def test_empty_side_scores_zero(self):
        assert jaccard("", "hello") == 0.0


class TestAlignment:
    def _subs(self, *texts):
        return [
            SubtitleLine(start=float(i), end=float(i) + 0.5, text=t)
            for i, t in enumerate(texts)
        ]

    def test_one_to_one_match(self):
        subs = self._subs("hello there", "general kenobi")
        transcript = [
            TranscriptLine(speaker="Obi", text="Hello there."),
            TranscriptLine(speaker="Grievous", text="General Kenobi!"),
        ]
        aligned = align_subtitles_transcript(subs, transcript)
        assert [s.speaker for s in aligned] == ["Obi", "Grievous"]
        np.testing.assert_allclose(alignment_score(subs, transcript), 2.0)

    def test_extra_transcript_line_skipped(self):
        subs = self._subs("hello there", "general kenobi")
        transcript = [
            TranscriptLine(speaker="Obi", text="hello there"),
            TranscriptLine(speaker="Narrator", text="meanwhile at the base"),
            TranscriptLine(speaker="Grievous", text="general kenobi"),
        ]
        aligned = align_subtitles_transcript(subs, transcript)
        assert [s.speaker for s in aligned] == ["Obi", "Grievous"]
        np.testing.assert_allclose(alignment_score(subs, transcript), 1.9)

    def test_unmatched_subtitle_gets_unknown_speaker(self):
        subs = self._subs("hello there", "completely different words")
        transcript = [TranscriptLine(speaker="Obi", text="hello there")]
        aligned = align_subtitles_transcript(subs, transcript)
        assert aligned[0].speaker == "Obi"
        assert aligned[1].speaker == UNKNOWN_SPEAKER
        np.testing.assert_allclose(alignment_score(subs, transcript), 0.9)

    def test_disjoint_vocabularies_never_match(self):
        subs = self._subs("aaa bbb", "ccc ddd")
        transcript = [
            TranscriptLine(speaker="X", text="eee fff"),
            TranscriptLine(speaker="Y", text="ggg hhh"),
        ]
        aligned = align_subtitles_transcript(subs, transcript)
        assert all(s.speaker == UNKNOWN_SPEAKER for s in aligned)
        np.testing.assert_allclose(alignment_score(subs, transcript), 4 * SKIP_COST)

    def test_alignment_preserves_order_and_times(self):
        subs = self._subs("one", "two", "three")
        transcript = [TranscriptLine(speaker="A", text="two")]
        aligned = align_subtitles_transcript(subs, transcript)
        assert [(s.start, s.text) for s in aligned] == [
            (s.start, s.text) for s in subs
        ]

    def test_empty_inputs_rejected(self):
        subs = self._subs("hello")
        with pytest.raises(PreconditionError):
            align_subtitles_transcript(subs, [])
        with pytest.raises(PreconditionError):
            align_subtitles_transcript([], [TranscriptLine(speaker="A", text="x")])

    def test_matches_brute_force_on_random_inputs(self):
        rng = np.random.default_rng(17)
        pool = ["red", "blue", "green", "wolf", "star", "moon", "tea", "rain"]
        for _ in range(40):
            n_s = int(rng.integers(1, 6))
            n_t = int(rng.integers(1, 6))
            subs = [
                SubtitleLine(
                    start=float(i),
                    end=float(i) + 0.5,
                    text=" ".join(rng.choice(pool, size=int(rng.integers(1, 4)))),
                )
                for i in range(n_s)
            ]
            transcript = [
                TranscriptLine(
                    speaker=f"spk{j}",
                    text=" ".join(rng.choice(pool, size=int(rng.integers(1, 4)))),
                )
                for j in range(n_t)
            ]
            np.testing.assert_allclose(
                alignment_score(subs, transcript),
                brute_force_alignment_score(subs, transcript),
                atol=1e-12,
            )


class TestSegmentation:
    def _bounds(self, clips):
        return [(c.start, c.end) for c in clips]

    def test_exact_multiple_tiles_evenly(self):
        clips = segment_scene(0, 0.0, 60.0)
        np.testing.assert_allclose(
            self._bounds(clips), [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0)]
        )

    def test_large_remainder_becomes_own_clip(self):
        clips = segment_scene(0, 0.0, 65.0)
        np.testing.assert_allclose(
            self._bounds(clips),
            [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0), (60.0, 65.0)],
        )

    def test_small_remainder_merges_into_previous(self):
        clips = segment_scene(0, 0.0, 62.0)
        np.testing.assert_allclose(
            self._bounds(clips), [(0.0, 20.0), (20.0, 40.0), (40.0, 62.0)]
        )

    def test_short_scene_is_single_clip(self):
        clips = segment_scene(3, 100.0, 112.0)
        np.testing.assert_allclose(self._bounds(clips), [(100.0, 112.0)])
        assert clips[0].clip_ref == "scene3_clip0"

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(PreconditionError):
            segment_scene(0, 10.0, 10.0)

    def test_tiling_invariant_on_random_scenes(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            start = float(rng.uniform(0, 1000))
            duration = float(rng.uniform(0.5, 300))
            clips = segment_scene(0, start, start + duration)
            np.testing.assert_allclose(clips[0].start, start)
            np.testing.assert_allclose(clips[-1].end, start + duration)
            for left, right in zip(clips, clips[1:]):
                np.testing.assert_allclose(left.end, right.start)
            for clip in clips[:-1]:
                np.testing.assert_allclose(clip.end - clip.start, 20.0)
            last = clips[-1].end - clips[-1].start
            assert last <= 25.0 + 1e-9
            if len(clips) > 1:
                assert last >= 5.0 - 1e-9

    def test_subtitles_assigned_by_midpoint(self):
        subs = [
            SubtitleLine(start=1.0, end=3.0, text="first"),
            SubtitleLine(start=19.0, end=23.0, text="straddles"),
            SubtitleLine(start=41.0, end=42.0, text="third"),
        ]
        clips = segment_scene(0, 0.0, 60.0, subtitles=subs)
        assert [s.text for s in clips[0].subtitles] == ["first"]
        assert [s.text for s in clips[1].subtitles] == ["straddles"]
        assert [s.text for s in clips[2].subtitles] == ["third"]

    def test_every_subtitle_lands_in_exactly_one_clip(self):
        rng = np.random.default_rng(5)
        subs = []
        for _ in range(30):
            s = float(rng.uniform(-5, 70))
            subs.append(SubtitleLine(start=s, end=s + 1.0, text="line"))
        clips = segment_scene(0, 0.0, 63.0, subtitles=subs)
        assert sum(len(c.subtitles) for c in clips) == len(subs)

    def test_out_of_range_midpoints_clamp_to_edge_clips(self):
        subs = [
            SubtitleLine(start=-4.0, end=-2.0, text="before"),
            SubtitleLine(start=70.0, end=71.0, text="after"),
        ]
        clips = segment_scene(0, 0.0, 60.0, subtitles=subs)
        assert [s.text for s in clips[0].subtitles] == ["before"]
        assert [s.text for s in clips[-1].subtitles] == ["after"]


class TestDatasetParsing:
    def _write_dataset(self, path, rows):
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

    def _row(self, sid, knowledge):
        return {
            "id": sid,
            "question": "what happened",
            "answers": ["a", "b", "c", "d"],
            "gold_index": 0,
            "split": "train",
            "scene_ref": "s1",
            "clip_ref": "c1",
            "subtitles": [],
            "knowledge": knowledge,
        }

    def test_distinct_knowledge_seeds_kb_in_first_appearance_order(self, tmp_path):
        path = tmp_path / "data.jsonl"
        self._write_dataset(
            path,
            [
                self._row("q1", "sheldon knocks three times"),
                self._row("q2", "penny lives across the hall"),
                self._row("q3", "sheldon knocks three times"),
            ],
        )
        samples, kb = parse_dataset(path, reference_profile())
        assert len(samples) == 3
        assert kb.size == 2
        assert kb.instances[0].text == "sheldon knocks three times"
        assert kb.instances[1].text == "penny lives across the hall"
        assert kb.ids() == [0, 1]

    def test_samples_without_knowledge_add_nothing(self, tmp_path):
        path = tmp_path / "data.jsonl"
        row = self._row("q1", None)
        del row["knowledge"]
        self._write_dataset(path, [row])
        samples, kb = parse_dataset(path, reference_profile())
        assert samples[0].gold_knowledge is None
        assert kb.size == 0

    def test_kb_carries_encoder_profile(self, tmp_path):
        path = tmp_path / "data.jsonl"
        self._write_dataset(path, [self._row("q1", "fact")])
        _, kb = parse_dataset(path, reference_profile())
        assert kb.encoder_profile.backend_id == "reference-32"


class TestArtifactFiles:
    def test_clip_records_round_trip_through_jsonl(self, tmp_path):
        clips = segment_scene(
            2,
            0.0,
            45.0,
            subtitles=[SubtitleLine(start=1.0, end=2.0, text="hi", speaker="Amy")],
        )
        path = tmp_path / "clips.jsonl"
        save_clips(clips, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["clip_ref"] for r in rows] == [
            "scene2_clip0",
            "scene2_clip1",
            "scene2_clip2",
        ]
        assert rows[0]["subtitles"][0]["speaker"] == "Amy"

    def test_aligned_subtitles_round_trip_through_jsonl(self, tmp_path):
        subs = [SubtitleLine(start=0.0, end=1.0, text="yo", speaker="Raj")]
        path = tmp_path / "subs.jsonl"
        save_aligned_subtitles(subs, path)
        row = json.loads(path.read_text().splitlines()[0])
        assert row == {"start": 0.0, "end": 1.0, "text": "yo", "speaker": "Raj"}
