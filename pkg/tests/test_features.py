import io
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmsmcrf.corpus import LabelSet, Segment, Sentence, Token
from dmsmcrf.duration import DurationModel, GammaLike, GaussianLike
from dmsmcrf.features import (
    DUR,
    OBS,
    START,
    TRANS,
    FeatureConfig,
    FeatureIndex,
    SparseVector,
    build_index,
    dur_feature,
    extract,
    observation_keys,
    parse_templates,
    trans_feature,
)

from oracles import random_sentence

LS = LabelSet()
KP, NKP = LS.id("KP"), LS.id("NKP")


def sent(*words):
    """``words`` are ``(surface, pos, in_title)`` triples."""
    tokens = tuple(Token(w, p, t) for w, p, t in words)
    return Sentence(tokens, (Segment(0, len(tokens) - 1, NKP),))


def keys(s, start, end, **kw):
    return [k for k, _ in observation_keys(s, start, end, **kw)]


class TestObservationKeys:
    def test_both_in_title_nouns(self):
        s = sent(("Big", "NN", True), ("data", "NN", True))
        k = keys(s, 0, 1)
        assert {"isNounPhrase=2", "isInTitle=2", "len=2"} <= set(k)
        assert "word=big" in k and "span=big data" in k

    def test_no_promotion_outside_noun_group(self):
        s = sent(("of", "IN", False), ("attention", "NN", True))
        assert "isInTitle=1" in keys(s, 0, 1)

    def test_promotion_inside_noun_group(self):
        s = sent(("autonomous", "JJ", False), ("sources", "NNS", True))
        assert "isInTitle=2" in keys(s, 0, 1)

    def test_values_are_indicators(self):
        s = sent(("a", "DT", False), ("b", "NN", True), ("a", "DT", False))
        pairs = observation_keys(s, 0, 2)
        assert all(v == 1.0 for _, v in pairs)
        assert [k for k, _ in pairs].count("word=a") == 1

    def test_template_selection(self):
        s = sent(("graph", "NN", True))
        assert keys(s, 0, 0, templates=("isNounPhrase", "isInTitle")) == ["isNounPhrase=1", "isInTitle=1"]

    def test_bounds(self):
        with pytest.raises(IndexError):
            observation_keys(sent(("a", "NN", False)), 0, 1)

    def test_template_file(self):
        assert parse_templates(io.StringIO("# c\nlen\n\nword\nlen\n")) == ("len", "word")
        with pytest.raises(ValueError):
            parse_templates(["pos"])


class TestExtract:
    def config(self, fam=None, templates=("len",)):
        return FeatureConfig(LS, DurationModel({"KP": fam}), templates)

    def test_gaussian_peak_value(self):
        cfg = self.config(GaussianLike(2.0, 1.0))
        idx = FeatureIndex()
        s = sent(("a", "NN", False), ("b", "NN", False))
        v = extract(s, Segment(0, 1, KP), START, idx, cfg, mode="growing")
        k = idx.get(dur_feature("KP", 2))
        assert k in v.indices.tolist()
        assert v.values[v.indices.tolist().index(k)] == 0.0

    def test_non_durational_value_is_one(self):
        cfg = self.config(GaussianLike(2.0, 1.0))
        idx = FeatureIndex()
        s = sent(("a", "NN", False), ("b", "NN", False), ("c", "NN", False))
        v = extract(s, Segment(0, 2, NKP), START, idx, cfg, mode="growing")
        k = idx.get(dur_feature("NKP", 3))
        assert v.values[v.indices.tolist().index(k)] == 1.0

    def test_gamma_value(self):
        cfg = self.config(GammaLike(1.2, 0.8))
        idx = FeatureIndex()
        v = extract(sent(("a", "NN", False)), Segment(0, 0, KP), START, idx, cfg, mode="growing")
        k = idx.get(dur_feature("KP", 1))
        assert v.values[v.indices.tolist().index(k)] == pytest.approx(-1.2, abs=1e-15)

    def test_frozen_drops_unseen(self):
        cfg = self.config(templates=("word",))
        idx = FeatureIndex([trans_feature("<START>", "KP")]).freeze()
        v = extract(sent(("zzz", "NN", False)), Segment(0, 0, KP), START, idx, cfg)
        assert v.indices.tolist() == [0]
        assert idx.K == 1

    def test_growing_on_frozen_index_fails(self):
        idx = FeatureIndex().freeze()
        with pytest.raises(Exception):
            extract(sent(("a", "NN", False)), Segment(0, 0, KP), START, idx, self.config(), mode="growing")

    def test_invalid_prev_label(self):
        with pytest.raises(ValueError):
            extract(sent(("a", "NN", False)), Segment(0, 0, KP), 7, FeatureIndex(), self.config(), mode="growing")


class TestIndex:
    def test_counts(self):
        rng = random.Random(3)
        corpus = [random_sentence(rng, 6, 2) for _ in range(5)]
        cfg = FeatureConfig(LS, DurationModel({"KP": GaussianLike(2, 1)}))
        idx = build_index(corpus, cfg, 2)
        assert idx.K == idx.K0 + idx.K1 + idx.K2
        assert idx.K1 == 6 and idx.K2 == 4
        assert sorted(idx.get(k) for k in idx) == list(range(idx.K))
        assert all(idx.kind(idx.get(k)) == k for k in idx)

    def test_gold_longer_than_L(self):
        s = Sentence((Token("a", "NN"), Token("b", "NN")), (Segment(0, 1, KP),))
        with pytest.raises(ValueError):
            build_index([s], FeatureConfig(), 1)

    def test_sparse_vector_sums_duplicates(self):
        v = SparseVector.from_pairs([(3, 1.0), (1, 2.0), (3, 0.5)])
        assert v.indices.tolist() == [1, 3]
        assert v.values.tolist() == [2.0, 1.5]
        assert v.dot(np.arange(5.0)) == 2.0 + 4.5


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 10**6))
    rng = random.Random(seed)
    L = draw(st.integers(1, 3))
    s = random_sentence(rng, draw(st.integers(1, 7)), L)
    start = draw(st.integers(0, len(s) - 1))
    end = draw(st.integers(start, min(len(s), start + L) - 1))
    return s, L, Segment(start, end, draw(st.sampled_from([KP, NKP]))), draw(st.sampled_from([START, KP, NKP]))


CFG = FeatureConfig(LS, DurationModel({"KP": GammaLike(1.0, 2.0)}))


class TestExtractProperties:
    @given(instances())
    @settings(max_examples=150, deadline=None)
    def test_one_transition_one_duration(self, inst):
        s, L, seg, prev = inst
        idx = build_index([s], CFG, L, all_segments=True)
        v = extract(s, seg, prev, idx, CFG)
        kinds = [idx.kind(i)[0] for i in v.indices]
        assert kinds.count(TRANS) == 1
        assert kinds.count(DUR) == 1
        assert np.all(np.diff(v.indices) > 0)
        assert np.all(np.isfinite(v.values))

    @given(instances())
    @settings(max_examples=100, deadline=None)
    def test_determinism_and_frozen_growth(self, inst):
        s, L, seg, prev = inst
        idx = build_index([s], CFG, L)
        K = idx.K
        a = extract(s, seg, prev, idx, CFG)
        b = extract(s, seg, prev, idx, CFG)
        assert a.indices.tolist() == b.indices.tolist() and a.values.tolist() == b.values.tolist()
        assert idx.K == K

    @given(instances(), st.integers(0, 6))
    @settings(max_examples=100, deadline=None)
    def test_transition_locality(self, inst, shift):
        s, L, seg, prev = inst
        idx = build_index([s], CFG, L, all_segments=True)
        other = Segment(0, min(shift, len(s) - 1, L - 1), seg.label)

        def trans(v):
            return [i for i in v.indices if idx.kind(i)[0] == TRANS]

        assert trans(extract(s, seg, prev, idx, CFG)) == trans(extract(s, other, prev, idx, CFG))

    @given(instances())
    @settings(max_examples=100, deadline=None)
    def test_duration_ignores_content(self, inst):
        s, L, seg, prev = inst
        idx = build_index([s], CFG, L, all_segments=True)
        v = extract(s, seg, prev, idx, CFG)
        (k,) = [i for i in v.indices if idx.kind(i)[0] == DUR]
        assert idx.kind(k) == (DUR, LS.name(seg.label), seg.length)
        assert all(idx.kind(i)[0] != OBS or not idx.kind(i)[2].startswith("len=") or
                   idx.kind(i)[2] == f"len={seg.length}" for i in v.indices)
        expected = -1.0 * seg.length + 2.0 * math.log(seg.length) if seg.label == KP else 1.0
        assert v.values[v.indices.tolist().index(k)] == pytest.approx(expected, rel=1e-15)
