"""Subtitle/transcript speaker alignment and scene segmentation.

Parses an SRT caption block and a speaker-attributed transcript of
the same dialogue, recovers which speaker said each subtitle line by
token-overlap alignment, then cuts a scene into fixed-length clips
and attaches the aligned subtitle lines to the clips they overlap.
"""

from kbvqa import (
    align_subtitles_transcript,
    alignment_score,
    parse_srt,
    parse_transcript,
    segment_scene,
)

SRT_TEXT = """\
1
00:00:02,000 --> 00:00:06,500
The projector is broken again.

2
00:00:07,000 --> 00:00:12,000
I told you not to let Howard calibrate it.

3
00:00:13,500 --> 00:00:19,000
Howard calibrated it perfectly, the bulb just died.

4
00:00:24,000 --> 00:00:31,000
Then someone should drive to the store for a new bulb.

5
00:00:33,000 --> 00:00:39,500
Fine, but I am choosing the radio station.
"""

TRANSCRIPT_TEXT = """\
Leonard: The projector is broken again.
Sheldon: I told you not to let Howard calibrate it.
Leonard: Howard calibrated it perfectly, the bulb just died.
Sheldon: Then someone should drive to the store for a new bulb.
Leonard: Fine, but I am choosing the radio station.
"""


def main():
    subs = parse_srt(SRT_TEXT)
    transcript = parse_transcript(TRANSCRIPT_TEXT)
    print("parsed %d subtitle lines, %d transcript lines" % (
        len(subs), len(transcript)))
    print("alignment score: %.3f" % alignment_score(subs, transcript))
    print()

    aligned = align_subtitles_transcript(subs, transcript)
    for line in aligned:
        print("  [%5.1f-%5.1f] %-8s %s" % (
            line.start, line.end, line.speaker + ":", line.text))

    # one 45 second scene becomes two 20 second clips plus the remainder
    print()
    clips = segment_scene(scene_id=3, start=0.0, end=45.0, subtitles=aligned)
    for clip in clips:
        print("%s  [%5.1f-%5.1f]" % (clip.clip_ref, clip.start, clip.end))
        for line in clip.subtitles:
            print("    %-8s %s" % (line.speaker + ":", line.text))


if __name__ == "__main__":
    main()
