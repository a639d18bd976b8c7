"""Regenerates bleu_50.json with NLTK's corpus BLEU as the reference scorer.

Usage: python3 gen_bleu_fixture.py > bleu_50.json
"""
import json
import random

from nltk.translate.bleu_score import corpus_bleu

WORDS = "the a cat dog sat on mat river city is was in of born located near".split()


def sentence(rng, lo, hi):
    return [rng.choice(WORDS) for _ in range(rng.randint(lo, hi))]


def noisy_copy(rng, ref):
    out = [w if rng.random() < 0.75 else rng.choice(WORDS) for w in ref]
    if rng.random() < 0.3:
        out = out[: max(4, len(out) - rng.randint(1, 3))]
    return out


def main():
    rng = random.Random(20240517)
    pairs = []
    for _ in range(50):
        refs = [sentence(rng, 5, 14) for _ in range(rng.randint(1, 3))]
        pairs.append({"hyp": noisy_copy(rng, refs[0]), "refs": refs})
    subsets = {"all": 50, "first10": 10, "first25": 25}
    scores = {
        name: corpus_bleu([p["refs"] for p in pairs[:n]], [p["hyp"] for p in pairs[:n]])
        for name, n in subsets.items()
    }
    print(json.dumps({"pairs": pairs, "subsets": subsets, "bleu": scores}, indent=1))


if __name__ == "__main__":
    main()
