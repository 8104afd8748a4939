"""Exact log-space inference over the segment lattice.

Boundaries are numbered ``0..n``; a segment of length ``d`` ending at
boundary ``i`` covers tokens ``i-d .. i-1``. Label index ``Y`` (one past the
real labels) stands for START and is only live at boundary 0, so
``alpha[0, START] = 0`` plays the role of ``alpha(0, y) = 1``.

Segment scores decompose as ``obs[start, d, y] + trans[y', y] + dur[d, y]``;
the tables below hold those pieces so the recursions never call
:func:`~dmsmcrf.features.extract`. :func:`segment_score` goes through
``extract`` and serves as the reference for the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import LabelSet, Segment, Sentence
from .features import (
    START,
    START_NAME,
    FeatureConfig,
    FeatureIndex,
    dur_feature,
    extract,
    obs_feature,
    observation_keys,
    trans_feature,
)

__all__ = [
    "Model",
    "Lattice",
    "SentenceTables",
    "segment_score",
    "sentence_tables",
    "score_grid",
    "forward",
    "backward",
    "lattice",
    "segment_marginal",
    "expected_features",
    "gold_features",
    "cut_log_partition",
    "logsumexp",
]


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """Max-shifted log-sum-exp; all ``-inf`` inputs give ``-inf``."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return out.reshape(())[()]
    return np.squeeze(out, axis=axis)


@dataclass
class Model:
    config: FeatureConfig
    L: int
    index: FeatureIndex
    theta: np.ndarray = None
    _trans_idx: np.ndarray = field(init=False, repr=False)
    _dur_idx: np.ndarray = field(init=False, repr=False)
    _dur_val: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.theta is None:
            self.theta = np.zeros(self.index.K)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.index.K,):
            raise ValueError(f"theta has shape {self.theta.shape}, index has K={self.index.K}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        labels = self.label_set.labels
        Y = len(labels)
        trans = np.full((Y + 1, Y), -1, dtype=np.int64)
        for a, prev in enumerate((*labels, START_NAME)):
            for b, lab in enumerate(labels):
                trans[a, b] = self.index.get(trans_feature(prev, lab), -1)
        dur_idx = np.full((self.L, Y), -1, dtype=np.int64)
        dur_val = np.zeros((self.L, Y))
        for d in range(1, self.L + 1):
            for y, lab in enumerate(labels):
                dur_idx[d - 1, y] = self.index.get(dur_feature(lab, d), -1)
                dur_val[d - 1, y] = self.config.duration_value(y, d)
        self._trans_idx, self._dur_idx, self._dur_val = trans, dur_idx, dur_val

    @property
    def label_set(self) -> LabelSet:
        return self.config.label_set

    @property
    def n_labels(self) -> int:
        return len(self.config.label_set)

    def with_theta(self, theta) -> "Model":
        return Model(self.config, self.L, self.index, np.array(theta, dtype=float))

    def transition_scores(self, theta=None) -> np.ndarray:
        """``(Y+1, Y)`` matrix; row ``Y`` is START."""
        theta = self.theta if theta is None else theta
        return np.where(self._trans_idx >= 0, theta[self._trans_idx], 0.0)

    def duration_scores(self, theta=None) -> np.ndarray:
        """``(L, Y)`` matrix of weight times duration-feature value."""
        theta = self.theta if theta is None else theta
        return np.where(self._dur_idx >= 0, theta[self._dur_idx], 0.0) * self._dur_val

    def duration_weights(self, label: int) -> np.ndarray:
        idx = self._dur_idx[:, label]
        return np.where(idx >= 0, self.theta[idx], 0.0)


def segment_score(m: Model, s: Sentence, seg: Segment, prev_label: int) -> float:
    """``theta . extract(...)``, the log potential of one segment."""
    if seg.length > m.L:
        raise ValueError(f"segment {seg} is longer than L={m.L}")
    return extract(s, seg, prev_label, m.index, m.config, mode="frozen").dot(m.theta)


@dataclass
class SentenceTables:
    """Observation feature occurrences of one sentence.

    ``rows`` address cells of an ``(n, L, Y)`` grid (start, length-1, label).
    """

    n: int
    rows: np.ndarray
    feats: np.ndarray
    vals: np.ndarray


def sentence_tables(m: Model, s: Sentence) -> SentenceTables:
    L, Y = m.L, m.n_labels
    labels = m.label_set.labels
    rows, feats, vals = [], [], []
    n = len(s)
    for start in range(n):
        for d in range(1, min(L, n - start) + 1):
            keys = observation_keys(s, start, start + d - 1, m.config.templates, m.config.pattern)
            for y, lab in enumerate(labels):
                row = (start * L + d - 1) * Y + y
                for key, v in keys:
                    i = m.index.get(obs_feature(lab, key))
                    if i is not None:
                        rows.append(row)
                        feats.append(i)
                        vals.append(v)
    return SentenceTables(
        n,
        np.array(rows, dtype=np.int64),
        np.array(feats, dtype=np.int64),
        np.array(vals, dtype=float),
    )


def _accumulate(index: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    """Float sums of ``weights`` per ``index``; stays float when ``index`` is empty."""
    return np.bincount(index, weights=weights, minlength=size).astype(float, copy=False)


def score_grid(m: Model, tables: SentenceTables, theta=None, width: int | None = None) -> np.ndarray:
    """``(width, L, Y)`` segment scores without the transition part.

    Cells whose segment would run past the sentence are ``-inf``.
    """
    theta = m.theta if theta is None else theta
    L, Y = m.L, m.n_labels
    n = tables.n
    width = n if width is None else width
    flat = _accumulate(tables.rows, theta[tables.feats] * tables.vals, n * L * Y)
    grid = np.full((width, L, Y), -np.inf)
    grid[:n] = flat.reshape(n, L, Y) + m.duration_scores(theta)[None]
    starts = np.arange(width)[:, None]
    ds = np.arange(1, L + 1)[None, :]
    grid[starts + ds > n] = -np.inf
    return grid


# ---------------------------------------------------------------------------
# batched recursions; S has shape (B, N, L, Y), T has shape (Y+1, Y)


def _forward(S: np.ndarray, T: np.ndarray) -> np.ndarray:
    B, N, L, Y = S.shape
    if np.isnan(S).any() or np.isnan(T).any():
        raise FloatingPointError("NaN in segment scores")
    alpha = np.full((B, N + 1, Y + 1), -np.inf)
    alpha[:, 0, Y] = 0.0
    for i in range(1, N + 1):
        d = np.arange(1, min(L, i) + 1)
        starts = i - d
        cand = (
            alpha[:, starts, :, None]
            + T[None, None]
            + S[:, starts, d - 1, None, :]
        )
        alpha[:, i, :Y] = logsumexp(cand, axis=(1, 2))
    return alpha


def _backward(S: np.ndarray, T: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    B, N, L, Y = S.shape
    beta = np.full((B, N + 1, Y + 1), -np.inf)
    beta[np.arange(B), lengths, :] = 0.0
    for i in range(N - 1, -1, -1):
        d = np.arange(1, min(L, N - i) + 1)
        ends = i + d
        inner = S[:, i, d - 1, :] + beta[:, ends, :Y]
        cand = T[None, None] + inner[:, :, None, :]
        val = logsumexp(cand, axis=(1, 3))
        live = lengths > i
        beta[live, i] = val[live]
    return beta


def _pair_log_marginals(S, T, alpha, beta, logZ) -> np.ndarray:
    """``(B, N, L, Y+1, Y)`` log marginals of (start, length, prev label, label)."""
    B, N, L, Y = S.shape
    pad = np.full((B, N + 1 + L, Y + 1), -np.inf)
    pad[:, : N + 1] = beta
    ends = np.arange(N)[:, None] + np.arange(1, L + 1)[None, :]
    beta_end = pad[:, ends, :Y]  # (B, N, L, Y)
    return (
        alpha[:, :N, None, :, None]
        + T[None, None, None]
        + (S + beta_end)[:, :, :, None, :]
        - logZ[:, None, None, None, None]
    )


@dataclass
class Lattice:
    """Forward/backward tables of one sentence.

    ``alpha[i, y]``: log score of all prefixes whose last segment ends at
    boundary ``i`` with label ``y``. ``beta[i, y]``: log score of all
    suffixes starting at boundary ``i`` after a segment labeled ``y``.
    Column ``Y`` is START.
    """

    alpha: np.ndarray
    logZ: float
    beta: np.ndarray | None = None
    scores: np.ndarray | None = None
    transitions: np.ndarray | None = None


def _single(m: Model, s: Sentence, theta=None):
    tables = sentence_tables(m, s)
    theta = m.theta if theta is None else theta
    S = score_grid(m, tables, theta)[None]
    T = m.transition_scores(theta)
    return tables, S, T


def forward(m: Model, s: Sentence) -> Lattice:
    _, S, T = _single(m, s)
    alpha = _forward(S, T)
    n = len(s)
    logZ = float(logsumexp(alpha[0, n, : m.n_labels]))
    return Lattice(alpha[0], logZ, scores=S[0], transitions=T)


def backward(m: Model, s: Sentence) -> np.ndarray:
    _, S, T = _single(m, s)
    return _backward(S, T, np.array([len(s)]))[0]


def lattice(m: Model, s: Sentence) -> Lattice:
    _, S, T = _single(m, s)
    alpha = _forward(S, T)
    beta = _backward(S, T, np.array([len(s)]))
    logZ = float(logsumexp(alpha[0, len(s), : m.n_labels]))
    return Lattice(alpha[0], logZ, beta[0], S[0], T)


def _prev_column(m: Model, prev_label: int) -> int:
    return m.n_labels if prev_label == START else prev_label


def segment_marginal(
    m: Model, s: Sentence, seg: Segment, prev_label: int, lat: Lattice | None = None
) -> float:
    """Probability that ``seg`` occurs directly after a segment labeled ``prev_label``."""
    lat = lattice(m, s) if lat is None else lat
    if (prev_label == START) != (seg.start == 0):
        return 0.0
    d = seg.length
    if d > m.L:
        return 0.0
    a = lat.alpha[seg.start, _prev_column(m, prev_label)]
    phi = lat.transitions[_prev_column(m, prev_label), seg.label] + lat.scores[seg.start, d - 1, seg.label]
    b = lat.beta[seg.end + 1, seg.label]
    return float(np.exp(a + phi + b - lat.logZ))


def cut_log_partition(m: Model, s: Sentence, lat: Lattice | None = None) -> np.ndarray:
    """For every token, log of the summed score of all segmentations, grouped
    by the segment covering that token. Each entry equals ``logZ``."""
    lat = lattice(m, s) if lat is None else lat
    n, L, Y = len(s), m.L, m.n_labels
    S, T = lat.scores[None], lat.transitions
    logm = _pair_log_marginals(S, T, lat.alpha[None], lat.beta[None], np.array([lat.logZ]))[0]
    out = np.empty(n)
    for k in range(n):
        cells = [logm[start, d - 1] for start in range(max(0, k - L + 1), k + 1) for d in range(k - start + 1, L + 1)]
        out[k] = logsumexp(np.stack(cells)) + lat.logZ
    return out


# ---------------------------------------------------------------------------
# expectations over a batch of sentences


def _gather_obs(batch_tables: Sequence[SentenceTables], N: int, L: int, Y: int):
    rows, feats, vals = [], [], []
    cell = N * L * Y
    for b, t in enumerate(batch_tables):
        rows.append(t.rows + b * cell)
        feats.append(t.feats)
        vals.append(t.vals)
    return np.concatenate(rows), np.concatenate(feats), np.concatenate(vals)


class Batch:
    """Padded score tables of several sentences for vectorized recursions."""

    def __init__(self, m: Model, tables: Sequence[SentenceTables]):
        self.model = m
        self.tables = list(tables)
        self.lengths = np.array([t.n for t in self.tables], dtype=np.int64)
        self.N = int(self.lengths.max())
        self.rows, self.feats, self.vals = _gather_obs(self.tables, self.N, m.L, m.n_labels)
        ends = np.arange(self.N)[:, None] + np.arange(1, m.L + 1)[None, :]
        self.invalid = ends[None] > self.lengths[:, None, None]  # (B, N, L)

    def scores(self, theta) -> np.ndarray:
        m = self.model
        B, N, L, Y = len(self.tables), self.N, m.L, m.n_labels
        flat = _accumulate(self.rows, theta[self.feats] * self.vals, B * N * L * Y)
        S = flat.reshape(B, N, L, Y) + m.duration_scores(theta)[None, None]
        S[self.invalid] = -np.inf
        return S

    def log_partition_and_expectations(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Per-sentence ``logZ`` and the summed expected feature vector."""
        m = self.model
        S = self.scores(theta)
        T = m.transition_scores(theta)
        alpha = _forward(S, T)
        beta = _backward(S, T, self.lengths)
        Y = m.n_labels
        logZ = logsumexp(alpha[np.arange(len(self.tables)), self.lengths, :Y], axis=1)
        P = np.exp(_pair_log_marginals(S, T, alpha, beta, logZ))
        seg_p = P.sum(axis=3)
        K = m.index.K
        expected = _accumulate(self.feats, seg_p.ravel()[self.rows] * self.vals, K)
        trans_p = P.sum(axis=(0, 1, 2))
        ok = m._trans_idx >= 0
        np.add.at(expected, m._trans_idx[ok], trans_p[ok])
        dur_p = seg_p.sum(axis=(0, 1)) * m._dur_val
        ok = m._dur_idx >= 0
        np.add.at(expected, m._dur_idx[ok], dur_p[ok])
        return logZ, expected


def expected_features(m: Model, s: Sentence) -> np.ndarray:
    """``E[F_k]`` under the model's distribution over segmentations of ``s``."""
    batch = Batch(m, [sentence_tables(m, s)])
    return batch.log_partition_and_expectations(m.theta)[1]


def gold_features(m: Model, s: Sentence, tables: SentenceTables | None = None) -> np.ndarray:
    """Sufficient statistics ``F(X, S)`` of the gold segmentation."""
    tables = sentence_tables(m, s) if tables is None else tables
    L, Y, K = m.L, m.n_labels, m.index.K
    out = np.zeros(K)
    cells = np.zeros(tables.n * L * Y)
    prev = Y
    for seg in s.gold:
        d = seg.length
        if d > L:
            raise ValueError(f"gold segment {seg} longer than L={L}; split it first")
        cells[(seg.start * L + d - 1) * Y + seg.label] += 1.0
        if m._trans_idx[prev, seg.label] >= 0:
            out[m._trans_idx[prev, seg.label]] += 1.0
        if m._dur_idx[d - 1, seg.label] >= 0:
            out[m._dur_idx[d - 1, seg.label]] += m._dur_val[d - 1, seg.label]
        prev = seg.label
    out += _accumulate(tables.feats, cells[tables.rows] * tables.vals, K)
    return out
