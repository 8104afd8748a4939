"""Token sequences, gold segmentations and the column corpus format.

One token per line, TAB-separated::

    surface  POS  in_title(0|1)  phrase_tag(or -)  span_tag(B-<label>|I-<label>|O)

A blank line ends a sentence and lines starting with ``#`` are comments.
``O`` tokens belong to the default label; maximal runs of ``O`` become a
single segment in memory.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, TextIO

__all__ = [
    "CorpusError",
    "Token",
    "Segment",
    "Sentence",
    "LabelSet",
    "NounGroupPattern",
    "parse_corpus",
    "read_corpus",
    "write_corpus",
    "format_corpus",
    "decode_bio",
    "encode_bio",
    "split_long_segments",
    "is_noun_group",
    "noun_group_spans",
]


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    in_title: bool = False
    phrase_tag: str | None = None

    def __post_init__(self):
        if not self.surface:
            raise CorpusError("empty token surface")
        if not self.pos:
            raise CorpusError(f"token {self.surface!r} has an empty POS tag")


class Segment(NamedTuple):
    """Labeled span with inclusive 0-based ``start`` and ``end``."""

    start: int
    end: int
    label: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class LabelSet:
    """Label inventory.

    ``durational`` labels get a fitted duration feature and are subject to
    the noun-group constraint when decoding; ``default_label`` is written as
    ``O`` on disk.
    """

    labels: tuple[str, ...] = ("NKP", "KP")
    durational: frozenset[str] = frozenset({"KP"})
    default_label: str = "NKP"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "durational", frozenset(self.durational))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in {self.labels}")
        if len(self.labels) < 2:
            raise ValueError("need at least two labels")
        if not self.durational <= set(self.labels):
            raise ValueError("durational labels must be a subset of labels")
        if self.default_label not in self.labels:
            raise ValueError(f"default label {self.default_label!r} is not a label")
        if self.default_label in self.durational:
            raise ValueError("the default label cannot be durational")

    def __len__(self) -> int:
        return len(self.labels)

    def id(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}") from None

    def name(self, label_id: int) -> str:
        return self.labels[label_id]

    @property
    def default_id(self) -> int:
        return self.labels.index(self.default_label)

    @property
    def durational_ids(self) -> tuple[int, ...]:
        return tuple(i for i, lab in enumerate(self.labels) if lab in self.durational)

    def is_durational(self, label_id: int) -> bool:
        return self.labels[label_id] in self.durational


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    gold: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "gold", tuple(Segment(*g) for g in self.gold))
        if not self.tokens:
            raise CorpusError("empty sentence")
        if self.gold:
            check_cover(self.gold, len(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def with_gold(self, gold: Iterable[Segment]) -> "Sentence":
        return Sentence(self.tokens, tuple(gold))


def check_cover(segments: Sequence[Segment], n: int) -> None:
    """Raise unless ``segments`` tile ``[0, n)`` left to right."""
    pos = 0
    for seg in segments:
        if seg.start != pos:
            raise CorpusError(
                f"segments do not cover the sentence contiguously at token {pos}: {seg}"
            )
        if seg.end < seg.start:
            raise CorpusError(f"segment ends before it starts: {seg}")
        pos = seg.end + 1
    if pos != n:
        raise CorpusError(f"segments cover {pos} of {n} tokens")


def decode_bio(tags: Sequence[str], label_set: LabelSet) -> list[Segment]:
    """Turn span tags into segments; ``O`` runs collapse into one segment."""
    segments: list[Segment] = []
    start = 0
    current: int | None = None
    for i, tag in enumerate(tags):
        if tag == "O":
            label, begins = label_set.default_id, current != label_set.default_id
        elif len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
            label = label_set.id(tag[2:])
            # a stray I- that does not continue a segment of its label starts one
            begins = tag[0] == "B" or current != label
        else:
            raise KeyError(f"bad span tag {tag!r}")
        if begins:
            if current is not None:
                segments.append(Segment(start, i - 1, current))
            start, current = i, label
    if current is not None:
        segments.append(Segment(start, len(tags) - 1, current))
    return segments


def encode_bio(segments: Sequence[Segment], label_set: LabelSet) -> list[str]:
    tags: list[str] = []
    for seg in segments:
        if seg.label == label_set.default_id:
            tags.extend("O" for _ in range(seg.length))
        else:
            name = label_set.name(seg.label)
            tags.append(f"B-{name}")
            tags.extend(f"I-{name}" for _ in range(seg.length - 1))
    return tags


def parse_corpus(reader: TextIO | Iterable[str], label_set: LabelSet) -> list[Sentence]:
    """Read sentences in the column format from a text stream."""
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    tags: list[str] = []
    first_line = 0

    def flush():
        if not tokens:
            return
        try:
            gold = decode_bio(tags, label_set)
        except KeyError as exc:
            raise CorpusError(str(exc.args[0]), first_line) from None
        sentences.append(Sentence(tuple(tokens), tuple(gold)))
        tokens.clear()
        tags.clear()

    lineno = 0
    for lineno, raw in enumerate(reader, start=1):
        line = raw.rstrip("\r\n")
        if line.startswith("#"):
            continue
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise CorpusError(f"expected 5 tab-separated columns, got {len(cols)}", lineno)
        surface, pos, title, phrase, tag = cols
        if title not in ("0", "1"):
            raise CorpusError(f"in_title must be 0 or 1, got {title!r}", lineno)
        if tag != "O":
            if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
                raise CorpusError(f"bad span tag {tag!r}", lineno)
            if tag[2:] not in label_set.labels:
                raise CorpusError(f"unknown label {tag[2:]!r}", lineno)
        if not tokens:
            first_line = lineno
        try:
            tokens.append(Token(surface, pos, title == "1", None if phrase == "-" else phrase))
        except CorpusError as exc:
            raise CorpusError(str(exc), lineno) from None
        tags.append(tag)
    flush()
    return sentences


def read_corpus(path, label_set: LabelSet) -> list[Sentence]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, label_set)


def write_corpus(
    out: TextIO,
    sentences: Sequence[Sentence],
    label_set: LabelSet,
    segments: Sequence[Sequence[Segment]] | None = None,
) -> None:
    """Write sentences; ``segments`` (one list per sentence) replaces the gold tags."""
    for k, sent in enumerate(sentences):
        segs = sent.gold if segments is None else segments[k]
        tags = encode_bio(segs, label_set)
        for tok, tag in zip(sent.tokens, tags):
            out.write(
                f"{tok.surface}\t{tok.pos}\t{int(tok.in_title)}\t"
                f"{tok.phrase_tag or '-'}\t{tag}\n"
            )
        out.write("\n")


def format_corpus(sentences, label_set, segments=None) -> str:
    buf = io.StringIO()
    write_corpus(buf, sentences, label_set, segments)
    return buf.getvalue()


def split_long_segments(s: Sentence, L: int, label_set: LabelSet | None = None) -> Sentence:
    """Cut gold segments longer than ``L`` left to right into pieces of at most ``L``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    out: list[Segment] = []
    for seg in s.gold:
        start = seg.start
        while start <= seg.end:
            end = min(start + L - 1, seg.end)
            out.append(Segment(start, end, seg.label))
            start = end + 1
    return Sentence(s.tokens, tuple(out))


@dataclass(frozen=True)
class NounGroupPattern:
    """One or more ``modifiers`` tokens ending in a ``heads`` token."""

    modifiers: frozenset[str] = frozenset(
        {"JJ", "JJR", "JJS", "NN", "NNS", "NNP", "NNPS", "VBG"}
    )
    heads: frozenset[str] = frozenset({"NN", "NNS", "NNP", "NNPS"})
    phrase_tag: str = "NP"

    def matches_pos(self, tags: Sequence[str]) -> bool:
        return bool(tags) and tags[-1] in self.heads and all(t in self.modifiers for t in tags)


DEFAULT_PATTERN = NounGroupPattern()


def _uses_phrase_tags(s: Sentence) -> bool:
    return any(tok.phrase_tag is not None for tok in s.tokens)


def is_noun_group(s: Sentence, start: int, end: int, pattern: NounGroupPattern = DEFAULT_PATTERN) -> bool:
    """Whether tokens ``start..end`` form a noun group.

    Parser phrase tags, when the sentence carries any, take precedence over
    the POS pattern.
    """
    toks = s.tokens[start : end + 1]
    if _uses_phrase_tags(s):
        return all(t.phrase_tag == pattern.phrase_tag for t in toks)
    return pattern.matches_pos([t.pos for t in toks])


def noun_group_spans(
    s: Sentence, max_length: int, pattern: NounGroupPattern = DEFAULT_PATTERN
) -> set[tuple[int, int]]:
    """All ``(start, end)`` noun-group spans of length at most ``max_length``."""
    n = len(s)
    spans = set()
    for start in range(n):
        for end in range(start, min(n, start + max_length)):
            if is_noun_group(s, start, end, pattern):
                spans.add((start, end))
    return spans
