"""Viterbi decoding with the noun-group constraint and boundary pruning.

Tie-break for equal scores: the shorter current segment wins, then the lower
previous-label index; the final label is the lowest index among the best.

Pruning. Let ``t`` be the start boundary of the best durational segment
ending at ``i-1``. When extending to ``i`` with the same label, start
boundaries ``tau < t`` are skipped. If the duration score is concave in the
length and observation scores of a span grow by the same amount whatever
its start, ``t`` still beats every such ``tau`` at ``i``, so nothing is
lost. A ``tau`` is only skipped when ``t`` is a legal start at ``i`` and
``tau`` was a legal start at ``i-1`` (so it actually lost to ``t`` there).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .corpus import NounGroupPattern, Segment, Sentence, noun_group_spans
from .duration import is_concave
from .inference import Model, score_grid, sentence_tables

__all__ = [
    "DecodeStats",
    "DecodePath",
    "MonotonicityReport",
    "viterbi",
    "constrained_viterbi",
    "decode",
    "check_monotonicity_assumption",
    "traditional_transition_count",
]


@dataclass
class DecodeStats:
    transitions_evaluated: int = 0
    segments_pruned_by_np: int = 0
    segments_pruned_by_monotonicity: int = 0
    wall_time: float = 0.0
    pruning_enabled: bool = False
    # best start boundary of each durational label at every end boundary
    boundaries: dict[int, list[int | None]] = field(default_factory=dict, repr=False)

    def __iadd__(self, other: "DecodeStats") -> "DecodeStats":
        self.transitions_evaluated += other.transitions_evaluated
        self.segments_pruned_by_np += other.segments_pruned_by_np
        self.segments_pruned_by_monotonicity += other.segments_pruned_by_monotonicity
        self.wall_time += other.wall_time
        return self


@dataclass
class DecodePath:
    segments: list[Segment]
    score: float


def traditional_transition_count(n: int, L: int, n_labels: int) -> int:
    """Transitions evaluated by unconstrained Viterbi; START contributes one predecessor."""
    total = 0
    for i in range(1, n + 1):
        for d in range(1, min(L, i) + 1):
            total += n_labels if d == i else n_labels * n_labels
    return total


def _viterbi_core(S, T, allowed, prune_labels, record_labels) -> tuple[DecodePath, DecodeStats]:
    n, L, Y = S.shape
    S = S.tolist()
    T = T.tolist()
    neg = float("-inf")
    stats = DecodeStats(pruning_enabled=bool(prune_labels))
    V = [[neg] * Y for _ in range(n + 1)]
    back: list[list[tuple[int, int] | None]] = [[None] * Y for _ in range(n + 1)]
    best_start = {y: [None] * (n + 1) for y in record_labels}
    evaluated = 0
    pruned_np = 0
    pruned_mono = 0
    for i in range(1, n + 1):
        for y in range(Y):
            best, arg = neg, None
            t = best_start[y][i - 1] if y in prune_labels else None
            if t is not None and not (i - t <= L and (allowed is None or allowed[t][i - t - 1][y])):
                t = None
            for d in range(1, min(L, i) + 1):
                tau = i - d
                if allowed is not None and not allowed[tau][d - 1][y]:
                    pruned_np += 1
                    continue
                if t is not None and tau < t and (allowed is None or allowed[tau][d - 2][y]):
                    pruned_mono += 1
                    continue
                seg = S[tau][d - 1][y]
                if tau == 0:
                    evaluated += 1
                    v = T[Y][y] + seg
                    if v > best:
                        best, arg = v, (d, Y)
                    continue
                Vt = V[tau]
                for yp in range(Y):
                    evaluated += 1
                    v = Vt[yp] + T[yp][y] + seg
                    if v > best:
                        best, arg = v, (d, yp)
            V[i][y] = best
            back[i][y] = arg
            if y in best_start and arg is not None:
                best_start[y][i] = i - arg[0]
    stats.transitions_evaluated = evaluated
    stats.segments_pruned_by_np = pruned_np
    stats.segments_pruned_by_monotonicity = pruned_mono
    stats.boundaries = best_start

    final = max(range(Y), key=lambda y: (V[n][y], -y))
    if V[n][final] == neg:
        raise ValueError("no feasible segmentation under the decoding constraints")
    segments = []
    i, y = n, final
    while i > 0:
        d, yp = back[i][y]
        segments.append(Segment(i - d, i - 1, y))
        i, y = i - d, yp
    segments.reverse()
    return DecodePath(segments, V[n][final]), stats


def _scores(m: Model, s: Sentence):
    return score_grid(m, sentence_tables(m, s)), m.transition_scores()


def viterbi(m: Model, s: Sentence) -> DecodePath:
    """Highest-scoring segmentation and labeling of ``s``."""
    return viterbi_with_stats(m, s)[0]


def viterbi_with_stats(m: Model, s: Sentence) -> tuple[DecodePath, DecodeStats]:
    t0 = time.perf_counter()
    S, T = _scores(m, s)
    path, stats = _viterbi_core(S, T, None, (), m.label_set.durational_ids)
    stats.wall_time = time.perf_counter() - t0
    return path, stats


@lru_cache(maxsize=4096)
def _cached_spans(s: Sentence, L: int, pattern: NounGroupPattern) -> frozenset:
    return frozenset(noun_group_spans(s, L, pattern))


def _allowed_mask(m: Model, n: int, np_spans) -> list:
    L, Y = m.L, m.n_labels
    durational = set(m.label_set.durational_ids)
    mask = np.ones((n, L, Y), dtype=bool)
    for start in range(n):
        for d in range(1, L + 1):
            if (start, start + d - 1) not in np_spans:
                for y in durational:
                    mask[start, d - 1, y] = False
    return mask.tolist()


def pruning_safe_durations(m: Model) -> bool:
    """Whether every durational label's duration feature is concave on ``1..L``."""
    return all(
        is_concave(m.config.duration.family(m.label_set.name(y)), m.L)
        for y in m.label_set.durational_ids
    )


def constrained_viterbi(
    m: Model,
    s: Sentence,
    np_spans=None,
    prune: bool = True,
    np_constraint: bool = True,
) -> tuple[DecodePath, DecodeStats]:
    """Viterbi with durational labels restricted to ``np_spans`` and boundary pruning.

    ``np_spans`` defaults to the noun-group spans of ``s`` under the model's
    pattern. Pruning is switched off, with a warning, when a duration
    feature is not concave on ``1..L``.
    """
    t0 = time.perf_counter()
    if prune and not pruning_safe_durations(m):
        warnings.warn("duration feature not concave on 1..L; pruning disabled", stacklevel=2)
        prune = False
    allowed = None
    if np_constraint:
        if np_spans is None:
            np_spans = _cached_spans(s, m.L, m.config.pattern)
        allowed = _allowed_mask(m, len(s), np_spans)
    S, T = _scores(m, s)
    durational = m.label_set.durational_ids
    path, stats = _viterbi_core(S, T, allowed, durational if prune else (), durational)
    stats.wall_time = time.perf_counter() - t0
    return path, stats


def decode(m: Model, s: Sentence, decoder: str = "constrained", prune: bool = True, np_constraint: bool = True):
    if decoder == "viterbi":
        return viterbi_with_stats(m, s)
    if decoder == "constrained":
        return constrained_viterbi(m, s, prune=prune, np_constraint=np_constraint)
    raise ValueError(f"unknown decoder {decoder!r}")


@dataclass
class MonotonicityReport:
    disparity: float
    concave: bool
    threshold: float
    per_label: dict[str, float]

    @property
    def safe(self) -> bool:
        return self.concave and self.disparity <= self.threshold

    def __str__(self) -> str:
        verdict = "safe" if self.safe else "pruning unsafe"
        return (
            f"duration weight disparity {self.disparity:.6g} (threshold {self.threshold:g}), "
            f"concave={self.concave}: {verdict}"
        )


def check_monotonicity_assumption(m: Model, threshold: float = 1.0) -> MonotonicityReport:
    """Largest spread among the learned duration weights of each durational label.

    Pruning is exact when those weights are equal and the duration feature
    is concave; the spread measures how far a trained model is from that.
    """
    per_label = {}
    for y in m.label_set.durational_ids:
        w = m.duration_weights(y)
        per_label[m.label_set.name(y)] = float(w.max() - w.min())
    disparity = max(per_label.values(), default=0.0)
    return MonotonicityReport(disparity, pruning_safe_durations(m), threshold, per_label)
