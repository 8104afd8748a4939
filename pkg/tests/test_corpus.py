import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmsmcrf.corpus import (
    CorpusError,
    LabelSet,
    NounGroupPattern,
    Segment,
    Sentence,
    Token,
    decode_bio,
    encode_bio,
    format_corpus,
    is_noun_group,
    noun_group_spans,
    parse_corpus,
    split_long_segments,
)

LS = LabelSet()
KP, NKP = LS.id("KP"), LS.id("NKP")

SAMPLE = """\
# a comment
We\tPRP\t0\t-\tO
study\tVBP\t0\t-\tO
neural\tJJ\t1\t-\tB-KP
networks\tNNS\t1\t-\tI-KP
.\t.\t0\t-\tO

graphs\tNNS\t0\t-\tB-KP
"""


def toks(*pos):
    return tuple(Token(f"w{i}", p, False) for i, p in enumerate(pos))


class TestParse:
    def test_sample(self):
        sents = parse_corpus(io.StringIO(SAMPLE), LS)
        assert len(sents) == 2
        assert sents[0].gold == (Segment(0, 1, NKP), Segment(2, 3, KP), Segment(4, 4, NKP))
        assert sents[0].tokens[2] == Token("neural", "JJ", True, None)
        assert sents[1].gold == (Segment(0, 0, KP),)

    def test_round_trip(self):
        sents = parse_corpus(io.StringIO(SAMPLE), LS)
        again = parse_corpus(io.StringIO(format_corpus(sents, LS)), LS)
        assert again == sents

    def test_phrase_tag_column(self):
        s = parse_corpus(["a\tDT\t0\tNP\tO\n", "b\tNN\t0\tNP\tB-KP\n"], LS)[0]
        assert [t.phrase_tag for t in s.tokens] == ["NP", "NP"]

    @pytest.mark.parametrize(
        "line, fragment",
        [
            ("a\tNN\t0\t-\n", "5 tab-separated"),
            ("a\tNN\t2\t-\tO\n", "in_title"),
            ("a\tNN\t0\t-\tB-XX\n", "unknown label"),
            ("a\tNN\t0\t-\tX\n", "bad span tag"),
        ],
    )
    def test_errors_carry_line_number(self, line, fragment):
        with pytest.raises(CorpusError) as info:
            parse_corpus(["ok\tNN\t0\t-\tO\n", line], LS)
        assert fragment in str(info.value)
        assert info.value.line == 2

    def test_stray_inside_tag_starts_segment(self):
        assert decode_bio(["O", "I-KP", "I-KP", "O"], LS) == [
            Segment(0, 0, NKP), Segment(1, 2, KP), Segment(3, 3, NKP)
        ]

    def test_adjacent_keyphrases(self):
        assert decode_bio(["B-KP", "B-KP", "I-KP"], LS) == [Segment(0, 0, KP), Segment(1, 2, KP)]


class TestSentence:
    def test_cover_validation(self):
        with pytest.raises(CorpusError):
            Sentence(toks("NN", "NN"), (Segment(0, 0, KP),))
        with pytest.raises(CorpusError):
            Sentence(toks("NN", "NN"), (Segment(0, 1, KP), Segment(1, 1, NKP)))

    def test_split_long_segments(self):
        s = Sentence(toks(*["NN"] * 5), (Segment(0, 4, KP),))
        out = split_long_segments(s, 2)
        assert out.gold == (Segment(0, 1, KP), Segment(2, 3, KP), Segment(4, 4, KP))


@st.composite
def segmentations(draw):
    lengths = draw(st.lists(st.integers(1, 4), min_size=1, max_size=8))
    labels = draw(st.lists(st.sampled_from([NKP, KP]), min_size=len(lengths), max_size=len(lengths)))
    segs, start = [], 0
    for d, y in zip(lengths, labels):
        segs.append(Segment(start, start + d - 1, y))
        start += d
    return segs


def canonical(segs):
    """Merge adjacent default-label segments, as the tag encoding does."""
    out = []
    for seg in segs:
        if out and seg.label == NKP and out[-1].label == NKP:
            out[-1] = Segment(out[-1].start, seg.end, NKP)
        else:
            out.append(seg)
    return out


class TestBioProperties:
    @given(segmentations())
    @settings(max_examples=200, deadline=None)
    def test_encode_decode(self, segs):
        assert decode_bio(encode_bio(segs, LS), LS) == canonical(segs)

    @given(segmentations(), st.integers(1, 4))
    @settings(max_examples=100, deadline=None)
    def test_split_preserves_cover(self, segs, L):
        n = segs[-1].end + 1
        s = Sentence(toks(*["NN"] * n), tuple(canonical(segs)))
        out = split_long_segments(s, L)
        assert all(seg.length <= L for seg in out.gold)
        labels = [None] * n
        for seg in out.gold:
            for i in range(seg.start, seg.end + 1):
                labels[i] = seg.label
        expected = [None] * n
        for seg in s.gold:
            for i in range(seg.start, seg.end + 1):
                expected[i] = seg.label
        assert labels == expected


class TestNounGroups:
    def test_pos_pattern(self):
        s = Sentence(toks("DT", "JJ", "NN", "NNS", "VBZ"), ())
        assert is_noun_group(s, 1, 3)
        assert is_noun_group(s, 2, 2)
        assert not is_noun_group(s, 0, 2)  # determiner
        assert not is_noun_group(s, 1, 1)  # no noun head
        assert not is_noun_group(s, 3, 4)

    def test_phrase_tags_take_precedence(self):
        tokens = (Token("a", "DT", False, "NP"), Token("b", "VB", False, "NP"), Token("c", "NN", False, "VP"))
        s = Sentence(tokens, ())
        assert is_noun_group(s, 0, 1)
        assert not is_noun_group(s, 2, 2)

    def test_spans_respect_max_length(self):
        s = Sentence(toks("JJ", "NN", "NN"), ())
        assert set(noun_group_spans(s, 2)) == {(1, 1), (2, 2), (0, 1), (1, 2)}
        assert (0, 2) in set(noun_group_spans(s, 3))

    def test_custom_pattern(self):
        pattern = NounGroupPattern(frozenset({"NN"}), frozenset({"NN"}))
        s = Sentence(toks("JJ", "NN"), ())
        assert not is_noun_group(s, 0, 1, pattern)
