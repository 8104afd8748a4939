"""Synthetic keyphrase corpora with a controllable keyphrase-length distribution.

Keyphrases are noun groups drawn from a technical vocabulary; the filler
between them comes from a disjoint function-word and generic vocabulary, so
with ``noise=0`` the corpus is separable by word identity. ``noise`` mixes
in ambiguity: technical nouns used as plain filler, generic adjectives
directly in front of keyphrases, and keyphrase-shaped phrases left
unannotated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .corpus import LabelSet, Segment, Sentence, Token

KP_MODIFIERS = (
    "neural", "quantum", "stochastic", "adaptive", "sparse", "semantic", "robust",
    "convex", "spectral", "latent", "distributed", "bayesian", "recurrent", "fuzzy",
)
KP_NOUNS = (
    "network", "graph", "kernel", "tensor", "protocol", "classifier", "estimator",
    "manifold", "lattice", "compiler", "retrieval", "segmentation", "ontology",
    "parser", "cache", "scheduler", "encoder", "filter",
)
GENERIC_ADJ = ("novel", "new", "efficient", "multiple", "simple", "large")
GENERIC_NOUNS = ("approach", "method", "paper", "result", "study", "problem", "work")

PREFIXES = (
    (("the", "DT"),),
    (("a", "DT"),),
    (("we", "PRP"), ("use", "VBP")),
    (("this", "DT"), ("paper", "NN"), ("studies", "VBZ")),
    (("based", "VBN"), ("on", "IN")),
    (("for", "IN"),),
    (("with", "IN"), ("the", "DT")),
    (("and", "CC"),),
    (("of", "IN"),),
    (("results", "NNS"), ("show", "VBP"), ("that", "IN")),
)
SUFFIXES = (
    (("is", "VBZ"), ("proposed", "VBN")),
    (("improves", "VBZ"), ("the", "DT"), ("result", "NN")),
    (("is", "VBZ"), ("often", "RB"), ("used", "VBN")),
    (("in", "IN"), ("practice", "NN")),
    (("was", "VBD"), ("studied", "VBN")),
)


@dataclass
class SynthConfig:
    n_sentences: int = 60
    lengths: Mapping[int, float] = field(default_factory=lambda: {1: 0.3, 2: 0.7})
    max_keyphrases: int = 3
    title_rate: float = 0.6
    filler_title_rate: float = 0.05
    noise: float = 0.0
    seed: int = 0


def parse_lengths(text: str) -> dict[int, float]:
    """``"1:0.3,2:0.7"`` to ``{1: 0.3, 2: 0.7}``."""
    out = {}
    for part in text.split(","):
        d, p = part.split(":")
        out[int(d)] = float(p)
    if not out or any(d < 1 for d in out) or any(p < 0 for p in out.values()) or sum(out.values()) <= 0:
        raise ValueError(f"bad length distribution {text!r}")
    return out


def _keyphrase(rng: random.Random, d: int) -> list[tuple[str, str]]:
    words = []
    for _ in range(d - 1):
        if rng.random() < 0.6:
            words.append((rng.choice(KP_MODIFIERS), "JJ"))
        else:
            words.append((rng.choice(KP_NOUNS), "NN"))
    words.append((rng.choice(KP_NOUNS), "NN"))
    return words


def generate_sentence(rng: random.Random, cfg: SynthConfig, label_set: LabelSet) -> Sentence:
    kp, nkp = label_set.id(sorted(label_set.durational)[0]), label_set.default_id
    lengths, weights = zip(*sorted(cfg.lengths.items()))
    words: list[tuple[str, str, bool, int]] = []  # surface, pos, in_title, label

    def filler(chunk):
        for w, pos in chunk:
            if cfg.noise and pos == "NN" and rng.random() < cfg.noise:
                w = rng.choice(KP_NOUNS)
            words.append((w, pos, rng.random() < cfg.filler_title_rate, nkp))

    for _ in range(rng.randint(1, cfg.max_keyphrases)):
        filler(rng.choice(PREFIXES))
        if cfg.noise and rng.random() < cfg.noise:
            words.append((rng.choice(GENERIC_ADJ), "JJ", False, nkp))
        phrase = _keyphrase(rng, rng.choices(lengths, weights)[0])
        annotated = not (cfg.noise and rng.random() < cfg.noise / 2)
        in_title = [False] * len(phrase)
        if rng.random() < cfg.title_rate:
            for j in rng.sample(range(len(phrase)), rng.randint(1, len(phrase))):
                in_title[j] = True
        for (w, pos), t in zip(phrase, in_title):
            words.append((w, pos, t, kp if annotated else nkp))
        # keyphrases never touch: the next chunk starts with a function word
    filler(rng.choice(SUFFIXES))
    words.append((".", ".", False, nkp))

    tokens = tuple(Token(w, pos, t) for w, pos, t, _ in words)
    gold: list[Segment] = []
    start = 0
    for i in range(1, len(words) + 1):
        # consecutive keyphrase tokens come from one phrase; filler runs merge
        if i == len(words) or words[i][3] != words[start][3]:
            gold.append(Segment(start, i - 1, words[start][3]))
            start = i
    return Sentence(tokens, tuple(gold))


def generate_corpus(cfg: SynthConfig, label_set: LabelSet = LabelSet()) -> list[Sentence]:
    rng = random.Random(cfg.seed)
    return [generate_sentence(rng, cfg, label_set) for _ in range(cfg.n_sentences)]
