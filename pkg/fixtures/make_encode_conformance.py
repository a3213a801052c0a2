"""Regenerate the encoder conformance fixture.

Writes ``encode_conformance.jsonl``: 100 segment lists covering plain
prose, multi-segment inputs, punctuation, digits, truncation-length
texts, and empty segments, each paired with its reference encoding at a
stated budget.  Any encoder claiming reference compatibility (the
in-process implementation, a service stub) must reproduce every vector
bit for bit.

Usage: python3 fixtures/make_encode_conformance.py
"""

import json
from pathlib import Path

import numpy as np

from kbvqa.encoding import encode_texts_cls, reference_profile

WORDS = (
    "apartment whiteboard physicist neighbor elevator comic train "
    "laundry cafeteria telescope equation roommate agreement vintage "
    "robot kite barbershop quantum asteroid sandwich"
).split()

BUDGETS = (16, 60, 120, 128, 512)


def build_corpus() -> list[list[str]]:
    rng = np.random.default_rng(404)
    corpus: list[list[str]] = [
        [""],
        ["a"],
        ["Hello, world!"],
        ["What did they sign? The roommate agreement."],
        ["one two three four five six seven eight nine ten"],
        ["Numbers: 42, 73, and 1,337 dollars."],
        ["ALL CAPS SHOUTING", "mixed Case Reply"],
        ["question text here", "candidate answer", "knowledge sentence"],
        ["semicolons; colons: dashes - and (parentheses)"],
        ["cafe visit", "they met at the cafe"],
        [" ".join(["repeat"] * 200)],
        [" ".join(WORDS * 30)],
    ]
    while len(corpus) < 100:
        n_segments = int(rng.integers(1, 4))
        segments = []
        for _ in range(n_segments):
            length = int(rng.integers(1, 25))
            segments.append(" ".join(rng.choice(WORDS, size=length)))
        corpus.append(segments)
    return corpus


def main() -> None:
    profile = reference_profile()
    corpus = build_corpus()
    budgets = [BUDGETS[i % len(BUDGETS)] for i in range(len(corpus))]
    out = Path(__file__).with_name("encode_conformance.jsonl")
    with out.open("w", encoding="utf-8") as fh:
        for segments, budget in zip(corpus, budgets):
            vector = encode_texts_cls([segments], budget, profile)[0]
            record = {
                "segments": segments,
                "budget": budget,
                "backend_id": profile.backend_id,
                "vector": vector.tolist(),
            }
            fh.write(json.dumps(record) + "\n")
    print(f"wrote {len(corpus)} records to {out}")


if __name__ == "__main__":
    main()
