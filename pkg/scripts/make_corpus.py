#!/usr/bin/env python3
"""Regenerate the packaged sample corpus (src/sasoftmax/data/tiny_corpus.txt).

Deterministic word-salad English: a fixed word list sampled with a seeded
generator into simple sentences and paragraphs, sized at ~100 KB. The text
has enough byte-level structure (word spellings, spacing, punctuation) for a
tiny character model to learn from quickly, and no external source is needed
to reproduce it.
"""

from pathlib import Path

import numpy as np

WORDS = [
    "the", "a", "and", "of", "to", "in", "on", "with", "for", "from",
    "river", "stone", "light", "wind", "garden", "mountain", "harbor",
    "winter", "summer", "morning", "evening", "shadow", "silver", "green",
    "quiet", "small", "old", "young", "bright", "heavy", "distant", "warm",
    "walks", "turns", "carries", "holds", "follows", "becomes", "remains",
    "rises", "falls", "gathers", "settles", "wanders", "listens", "watches",
    "house", "road", "field", "forest", "letter", "window", "table", "lamp",
    "voice", "song", "story", "journey", "memory", "season", "harvest",
    "under", "over", "between", "beyond", "toward", "through", "near",
    "slowly", "quietly", "again", "always", "never", "often", "together",
]

SEED = 20240811
TARGET_BYTES = 100_000


def make_corpus() -> str:
    rng = np.random.default_rng(SEED)
    parts = []
    size = 0
    sentence_in_paragraph = 0
    while size < TARGET_BYTES:
        n_words = int(rng.integers(4, 10))
        words = [WORDS[int(i)] for i in rng.integers(0, len(WORDS), n_words)]
        sentence = " ".join(words).capitalize() + "."
        parts.append(sentence)
        size += len(sentence) + 1
        sentence_in_paragraph += 1
        if sentence_in_paragraph >= int(rng.integers(3, 7)):
            parts.append("\n")
            sentence_in_paragraph = 0
        else:
            parts.append(" ")
    text = "".join(parts).rstrip() + "\n"
    return text


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "sasoftmax" / "data" / "tiny_corpus.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    text = make_corpus()
    out.write_text(text, encoding="ascii")
    print(f"wrote {out} ({len(text)} bytes, {len(set(text.encode()))} distinct bytes)")


if __name__ == "__main__":
    main()
