"""Phrase-level precision, recall and F1."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import LabelSet, Segment, Sentence


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    per_sentence: list[tuple[int, int, int]] = field(default_factory=list, repr=False)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def tsv(self, header: bool = True) -> str:
        row = f"{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}\t{self.tp}\t{self.fp}\t{self.fn}"
        return ("P\tR\tF1\ttp\tfp\tfn\n" if header else "") + row + "\n"


def _segments(item) -> Sequence[Segment]:
    if isinstance(item, Sentence):
        return item.gold
    if hasattr(item, "segments"):
        return item.segments
    return item


def _units(sent: Sentence, segments, label_set: LabelSet, match: str) -> set:
    durational = set(label_set.durational_ids)
    segs = [Segment(*g) for g in segments if g[2] in durational]
    if match == "span":
        return set(segs)
    if match == "string":
        return {
            (seg.label, " ".join(t.surface.lower() for t in sent.tokens[seg.start : seg.end + 1]))
            for seg in segs
        }
    raise ValueError(f"unknown match mode {match!r}")


def evaluate(
    gold: Sequence[Sentence],
    predicted: Sequence,
    label_set: LabelSet,
    match: str = "span",
) -> EvalReport:
    """Micro-averaged scores over durational-label segments.

    ``match="span"`` needs identical ``(start, end, label)``; ``"string"``
    compares lowercased surface strings as a set per sentence. ``predicted``
    items may be decode paths, sentences, or plain segment lists.
    """
    if len(gold) != len(predicted):
        raise ValueError(f"{len(gold)} gold sentences but {len(predicted)} predictions")
    tp = fp = fn = 0
    rows = []
    for sent, pred in zip(gold, predicted):
        g = _units(sent, sent.gold, label_set, match)
        p = _units(sent, _segments(pred), label_set, match)
        hit = len(g & p)
        row = (hit, len(p) - hit, len(g) - hit)
        rows.append(row)
        tp += row[0]
        fp += row[1]
        fn += row[2]
    return EvalReport(tp, fp, fn, rows)
