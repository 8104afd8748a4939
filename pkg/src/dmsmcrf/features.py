"""Segment feature functions and the dense feature index.

Three families are instantiated per segment:

* observation ``("obs", label, key)`` with value 1 for every active key,
* transition ``("trans", prev_label, label)`` with value 1,
* duration ``("dur", label, length)`` whose value is the label's duration
  feature at ``length`` (1 for labels without a fitted family).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import DEFAULT_PATTERN, LabelSet, NounGroupPattern, Segment, Sentence, is_noun_group
from .duration import DurationModel, duration_feature

START = -1
START_NAME = "<START>"

TEMPLATES = ("isNounPhrase", "isInTitle", "len", "word", "span-word")

OBS, TRANS, DUR = "obs", "trans", "dur"


def obs_feature(label: str, key: str) -> tuple:
    return (OBS, label, key)


def trans_feature(prev: str, label: str) -> tuple:
    return (TRANS, prev, label)


def dur_feature(label: str, length: int) -> tuple:
    return (DUR, label, int(length))


def parse_templates(lines: Iterable[str]) -> tuple[str, ...]:
    """Template names, one per line; blank lines and ``#`` comments skipped."""
    names = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line not in TEMPLATES:
            raise ValueError(f"unknown feature template {line!r}; choose from {TEMPLATES}")
        if line not in names:
            names.append(line)
    return tuple(names)


def load_templates(path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return parse_templates(fh)


@dataclass(frozen=True)
class FeatureConfig:
    """Everything feature extraction needs besides the sentence and index."""

    label_set: LabelSet = field(default_factory=LabelSet)
    duration: DurationModel = field(default_factory=DurationModel)
    templates: tuple[str, ...] = TEMPLATES
    pattern: NounGroupPattern = DEFAULT_PATTERN

    def label_name(self, label_id: int) -> str:
        if label_id == START:
            return START_NAME
        if not 0 <= label_id < len(self.label_set):
            raise ValueError(f"invalid label id {label_id}")
        return self.label_set.name(label_id)

    def duration_value(self, label_id: int, d: int) -> float:
        return duration_feature(self.duration, self.label_set.name(label_id), d)


def observation_keys(
    s: Sentence,
    start: int,
    end: int,
    templates: Sequence[str] = TEMPLATES,
    pattern: NounGroupPattern = DEFAULT_PATTERN,
) -> list[tuple[str, float]]:
    """Active observation keys of tokens ``start..end``, each with value 1."""
    if not 0 <= start <= end < len(s):
        raise IndexError(f"span ({start}, {end}) outside sentence of length {len(s)}")
    toks = s.tokens[start : end + 1]
    size = end - start + 1
    keys: list[str] = []
    if "isNounPhrase" in templates:
        keys.append(f"isNounPhrase={sum(t.pos in pattern.heads for t in toks)}")
    if "isInTitle" in templates:
        in_title = sum(t.in_title for t in toks)
        if 0 < in_title < size and is_noun_group(s, start, end, pattern):
            in_title = size
        keys.append(f"isInTitle={in_title}")
    if "len" in templates:
        keys.append(f"len={size}")
    if "word" in templates:
        seen = set()
        for t in toks:
            w = t.surface.lower()
            if w not in seen:
                seen.add(w)
                keys.append(f"word={w}")
    if "span-word" in templates:
        keys.append("span=" + " ".join(t.surface.lower() for t in toks))
    return [(k, 1.0) for k in keys]


class FeatureIndex:
    """Bijection between feature kinds and dense indices ``0..K-1``."""

    def __init__(self, kinds: Iterable[tuple] = ()):
        self._index: dict[tuple, int] = {}
        self._kinds: list[tuple] = []
        self.frozen = False
        for k in kinds:
            self.add(k)

    def __len__(self) -> int:
        return len(self._kinds)

    def __contains__(self, kind) -> bool:
        return kind in self._index

    def __iter__(self) -> Iterator[tuple]:
        return iter(self._kinds)

    @property
    def K(self) -> int:
        return len(self._kinds)

    def _count(self, tag: str) -> int:
        return sum(1 for k in self._kinds if k[0] == tag)

    @property
    def K0(self) -> int:
        return self._count(OBS)

    @property
    def K1(self) -> int:
        return self._count(TRANS)

    @property
    def K2(self) -> int:
        return self._count(DUR)

    def add(self, kind: tuple) -> int:
        idx = self._index.get(kind)
        if idx is None:
            if self.frozen:
                raise RuntimeError("cannot add features to a frozen index")
            if kind[0] not in (OBS, TRANS, DUR):
                raise ValueError(f"bad feature kind {kind!r}")
            idx = len(self._kinds)
            self._index[kind] = idx
            self._kinds.append(kind)
        return idx

    def get(self, kind: tuple, default: int | None = None) -> int | None:
        return self._index.get(kind, default)

    def kind(self, idx: int) -> tuple:
        return self._kinds[idx]

    def freeze(self) -> "FeatureIndex":
        self.frozen = True
        return self


@dataclass(frozen=True)
class SparseVector:
    """Sorted ``(index, value)`` pairs."""

    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        acc: dict[int, float] = {}
        for i, v in pairs:
            acc[i] = acc.get(i, 0.0) + v
        idx = np.array(sorted(acc), dtype=np.int64)
        return cls(idx, np.array([acc[i] for i in idx], dtype=float))

    def __len__(self) -> int:
        return len(self.indices)

    def dot(self, theta: np.ndarray) -> float:
        return float(np.dot(theta[self.indices], self.values))

    def to_dense(self, K: int) -> np.ndarray:
        out = np.zeros(K)
        np.add.at(out, self.indices, self.values)
        return out


def extract(
    s: Sentence,
    seg: Segment,
    prev_label: int,
    index: FeatureIndex,
    config: FeatureConfig,
    mode: str = "frozen",
) -> SparseVector:
    """Feature vector of ``seg`` following a segment labeled ``prev_label``.

    ``prev_label`` is :data:`START` for the first segment. In ``"growing"``
    mode unseen kinds are added to ``index``; in ``"frozen"`` mode they are
    dropped. The duration entry is kept even when its value is 0 so that every
    vector carries exactly one transition and one duration index.
    """
    if mode not in ("frozen", "growing"):
        raise ValueError(f"mode must be 'frozen' or 'growing', not {mode!r}")
    prev = config.label_name(prev_label)
    label = config.label_name(seg.label)
    if seg.label == START:
        raise ValueError("START is not a segment label")
    lookup = index.add if mode == "growing" else index.get

    pairs: list[tuple[int, float]] = []
    for key, value in observation_keys(s, seg.start, seg.end, config.templates, config.pattern):
        i = lookup(obs_feature(label, key))
        if i is not None:
            pairs.append((i, value))
    i = lookup(trans_feature(prev, label))
    if i is not None:
        pairs.append((i, 1.0))
    i = lookup(dur_feature(label, seg.length))
    if i is not None:
        pairs.append((i, config.duration_value(seg.label, seg.length)))
    return SparseVector.from_pairs(pairs)


def register_structure(index: FeatureIndex, label_set: LabelSet, L: int) -> None:
    """Add every transition and every duration kind up to ``L``."""
    for prev in (START_NAME, *label_set.labels):
        for lab in label_set.labels:
            index.add(trans_feature(prev, lab))
    for lab in label_set.labels:
        for d in range(1, L + 1):
            index.add(dur_feature(lab, d))


def build_index(
    corpus: Sequence[Sentence],
    config: FeatureConfig,
    L: int,
    all_segments: bool = False,
) -> FeatureIndex:
    """Growing pass over gold segments, then freeze.

    With ``all_segments`` observation features are also instantiated for
    every candidate span and label, not only the gold ones.
    """
    index = FeatureIndex()
    register_structure(index, config.label_set, L)
    for s in corpus:
        prev = START
        for seg in s.gold:
            if seg.length > L:
                raise ValueError(f"gold segment {seg} longer than L={L}; split it first")
            extract(s, seg, prev, index, config, mode="growing")
            prev = seg.label
        if all_segments:
            for start in range(len(s)):
                for end in range(start, min(len(s), start + L)):
                    for y in range(len(config.label_set)):
                        extract(s, Segment(start, end, y), START, index, config, mode="growing")
    return index.freeze()
