"""Tokenization and deterministic text encoding.

Walks through the text representation used everywhere else in the
package: lowercase word/punctuation tokens, marker-framed segment
sequences with a token budget, and position-weighted 32-dim vectors
whose cosine similarity tracks lexical overlap.
"""

import numpy as np

from kbvqa import (
    build_marked_sequence,
    encode_text_cls,
    reference_encode,
    reference_profile,
    similarity,
    tokenize,
)


def main():
    # tokenize lowercases and splits off punctuation as its own tokens
    text = "Who fixed Penny's projector, and why?"
    print("text:  ", text)
    print("tokens:", tokenize(text))
    print()

    # segments are framed as [CLS] seg1 [SEP] seg2 [SEP] ... under a budget
    segments = ["who fixed the projector", "the engineer did", "seen in scene two"]
    seq = build_marked_sequence(segments, budget=32)
    print("marked sequence (budget 32):")
    print(" ", " ".join(seq.tokens()))

    # a tight budget truncates and closes the sequence with a final [SEP]
    tight = build_marked_sequence(segments, budget=10)
    print("marked sequence (budget 10):")
    print(" ", " ".join(tight.tokens()))
    print()

    # raw encoding of a token list: unit-norm 32-dim vector, earlier
    # tokens weighted more heavily than later ones
    vec = reference_encode(tokenize("the projector hums"))
    print("dim:", vec.shape[0], " norm: %.6f" % np.linalg.norm(vec))

    # same pipeline through the encoder profile used by the models
    profile = reference_profile()
    a = encode_text_cls(["the engineer fixed the projector"], 64, profile)
    b = encode_text_cls(["the projector was fixed by the engineer"], 64, profile)
    c = encode_text_cls(["she ordered dumplings for the party"], 64, profile)
    print("paraphrase similarity: %.4f" % similarity(a, b))
    print("unrelated similarity:  %.4f" % similarity(a, c))

    # the encoder is a pure function of its input
    a2 = encode_text_cls(["the engineer fixed the projector"], 64, profile)
    print("repeat encoding identical:", bool(np.array_equal(a, a2)))


if __name__ == "__main__":
    main()
