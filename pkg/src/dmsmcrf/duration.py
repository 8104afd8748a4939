"""Keyphrase-length distributions and the parametric duration feature.

A durational label ``y`` scores a segment of ``d`` tokens with

* Gaussian-like: ``-(d - mu)**2 / (2 * sigma2)``
* Gamma-like: ``-alpha * d + beta * ln(d)`` with ``beta = p - 1``

Normalizing constants are dropped; a per-label constant is absorbed by the
learned duration weights. Labels without a fitted family score 1.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO, Union

import numpy as np

from .corpus import LabelSet, Sentence

__all__ = [
    "DurationFitError",
    "DurationHistogram",
    "GaussianLike",
    "GammaLike",
    "DurationModel",
    "digamma",
    "trigamma",
    "collect_histogram",
    "fit_gaussian",
    "fit_gamma",
    "fit_family",
    "duration_feature",
    "discrete_loglik",
    "is_concave",
    "format_duration_lines",
    "parse_duration_lines",
]

# support used to normalize the discrete mass functions in discrete_loglik
MAX_SUPPORT = 1000


class DurationFitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# special functions


_DIGAMMA_SERIES = (
    -1.0 / 12,
    1.0 / 120,
    -1.0 / 252,
    1.0 / 240,
    -1.0 / 132,
    691.0 / 32760,
    -1.0 / 12,
)

_TRIGAMMA_SERIES = (
    1.0 / 6,
    -1.0 / 30,
    1.0 / 42,
    -1.0 / 30,
    5.0 / 66,
    -691.0 / 2730,
    7.0 / 6,
)


def digamma(x: float) -> float:
    """psi(x) for x > 0: upward recurrence to x >= 10, then the asymptotic series."""
    if x <= 0:
        raise ValueError("digamma is only implemented for x > 0")
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    term = inv2
    series = 0.0
    for c in _DIGAMMA_SERIES:
        series += c * term
        term *= inv2
    return acc + math.log(x) - 0.5 / x + series


def trigamma(x: float) -> float:
    """psi'(x) for x > 0."""
    if x <= 0:
        raise ValueError("trigamma is only implemented for x > 0")
    acc = 0.0
    while x < 10.0:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    term = inv2 * inv
    series = 0.0
    for c in _TRIGAMMA_SERIES:
        series += c * term
        term *= inv2
    return acc + inv + 0.5 * inv2 + series


# ---------------------------------------------------------------------------
# histograms and fitting


@dataclass(frozen=True)
class DurationHistogram:
    counts: Mapping[int, int]

    def __post_init__(self):
        counts = {int(d): int(c) for d, c in self.counts.items() if c}
        if any(d < 1 for d in counts):
            raise ValueError("durations must be >= 1")
        if any(c < 0 for c in counts.values()):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", dict(sorted(counts.items())))

    @classmethod
    def from_samples(cls, samples: Iterable[int]) -> "DurationHistogram":
        return cls(Counter(int(s) for s in samples))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        d = np.fromiter(self.counts.keys(), dtype=float, count=len(self.counts))
        c = np.fromiter(self.counts.values(), dtype=float, count=len(self.counts))
        return d, c

    def mean(self) -> float:
        d, c = self.arrays()
        return float(np.dot(c, d) / c.sum())

    def variance(self) -> float:
        d, c = self.arrays()
        m = np.dot(c, d) / c.sum()
        return float(np.dot(c, (d - m) ** 2) / c.sum())


def collect_histogram(corpus: Sequence[Sentence], label: int) -> DurationHistogram:
    """Lengths of all gold segments carrying ``label``."""
    if not corpus:
        raise DurationFitError("empty corpus")
    counts = Counter(seg.length for s in corpus for seg in s.gold if seg.label == label)
    if not counts:
        raise DurationFitError("empty duration sample")
    return DurationHistogram(counts)


@dataclass(frozen=True)
class GaussianLike:
    mu: float
    sigma2: float
    family = "gaussian"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def __call__(self, d):
        return -((d - self.mu) ** 2) / (2.0 * self.sigma2)

    @property
    def params(self) -> tuple[float, float]:
        return (self.mu, self.sigma2)


@dataclass(frozen=True)
class GammaLike:
    """``alpha`` is the rate, ``beta = shape - 1``."""

    alpha: float
    beta: float
    family = "gamma"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta > -1:
            raise ValueError("beta must exceed -1")

    def __call__(self, d):
        return -self.alpha * d + self.beta * np.log(d)

    @property
    def shape(self) -> float:
        return self.beta + 1.0

    @property
    def params(self) -> tuple[float, float]:
        return (self.alpha, self.beta)


Family = Union[GaussianLike, GammaLike]


def fit_gaussian(h: DurationHistogram) -> GaussianLike:
    """Maximum-likelihood mean and variance (denominator ``total``)."""
    if h.total < 2:
        raise DurationFitError("need at least two duration samples")
    var = h.variance()
    if not var > 0:
        raise DurationFitError(
            "zero duration variance; use duration family 'none' or a variance floor"
        )
    return GaussianLike(h.mean(), var)


def fit_gamma(h: DurationHistogram, tol: float = 1e-10, max_iter: int = 100) -> GammaLike:
    """Continuous Gamma ML on integer lengths.

    Solves ``ln p - psi(p) = ln(mean) - mean(ln d)`` for the shape ``p`` by
    Newton's method from the moment estimate ``mean**2 / var``.
    """
    if h.total < 2 or len(h.counts) < 2:
        raise DurationFitError("degenerate Gamma fit: need at least two distinct lengths")
    d, c = h.arrays()
    mean = float(np.dot(c, d) / c.sum())
    target = math.log(mean) - float(np.dot(c, np.log(d)) / c.sum())
    p = mean * mean / h.variance()
    for _ in range(max_iter):
        f = math.log(p) - digamma(p) - target
        fprime = 1.0 / p - trigamma(p)
        step = f / fprime
        new = p - step
        if new <= 0:
            new = p / 2.0
        if abs(new - p) < tol * max(1.0, p):
            p = new
            break
        p = new
    else:
        raise DurationFitError(f"Gamma ML did not converge; last shape iterate {p!r}")
    model = GammaLike(alpha=p / mean, beta=p - 1.0)
    if model.beta < 0:
        warnings.warn(
            f"fitted Gamma shape {p:.4g} < 1: the duration feature is not concave "
            "at small lengths and decoder pruning will be disabled",
            stacklevel=2,
        )
    return model


def fit_family(h: DurationHistogram, family: str) -> Family | None:
    if family == "gaussian":
        return fit_gaussian(h)
    if family == "gamma":
        return fit_gamma(h)
    if family == "none":
        return None
    raise ValueError(f"unknown duration family {family!r}")


def discrete_loglik(fam: Family, h: DurationHistogram) -> float:
    """Log-likelihood of ``h`` under the discrete mass function on ``1..MAX_SUPPORT``."""
    support = np.arange(1, MAX_SUPPORT + 1, dtype=float)
    scores = fam(support)
    top = scores.max()
    log_norm = top + math.log(np.exp(scores - top).sum())
    d, c = h.arrays()
    return float(np.dot(c, fam(d) - log_norm))


def is_concave(fam: Family | None, max_length: int, tol: float = 1e-12) -> bool:
    """Non-increasing first differences of the feature on ``1..max_length``."""
    if fam is None or max_length < 3:
        return True
    v = np.array([fam(float(d)) for d in range(1, max_length + 1)])
    return bool(np.all(np.diff(v, 2) <= tol))


# ---------------------------------------------------------------------------
# per-label container


@dataclass(frozen=True)
class DurationModel:
    """Fitted duration family per durational label name."""

    families: Mapping[str, Family | None] = field(default_factory=dict)

    def family(self, label: str) -> Family | None:
        return self.families.get(label)

    def feature(self, label: str, d: int) -> float:
        return duration_feature(self, label, d)

    @classmethod
    def fit(cls, corpus: Sequence[Sentence], label_set: LabelSet, family: str) -> "DurationModel":
        fams = {}
        for lab in sorted(label_set.durational):
            if family == "none":
                fams[lab] = None
            else:
                fams[lab] = fit_family(collect_histogram(corpus, label_set.id(lab)), family)
        return cls(fams)


def duration_feature(m: DurationModel, label: str, d: int) -> float:
    if d < 1:
        raise ValueError("duration must be >= 1")
    fam = m.family(label)
    if fam is None:
        return 1.0
    return float(fam(float(d)))


# ---------------------------------------------------------------------------
# text exchange format: ``label family param1 param2 loglik``


def format_duration_lines(rows: Iterable[tuple[str, Family | None, float | None]]) -> str:
    lines = []
    for label, fam, loglik in rows:
        if fam is None:
            lines.append(f"{label}\tnone\t-\t-\t-")
        else:
            p1, p2 = fam.params
            ll = "-" if loglik is None else f"{loglik:.17g}"
            lines.append(f"{label}\t{fam.family}\t{p1:.17g}\t{p2:.17g}\t{ll}")
    return "\n".join(lines) + "\n"


def parse_duration_lines(reader: TextIO | Iterable[str], family: str | None = None) -> DurationModel:
    """Read a duration file.

    With ``family`` set, only lines of that family are used. Otherwise, when
    a label is listed twice the first line wins.
    """
    fams: dict[str, Family | None] = {}
    for lineno, raw in enumerate(reader, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split()
        if len(cols) != 5:
            raise ValueError(f"line {lineno}: expected 5 columns, got {len(cols)}")
        label, fam, p1, p2, _ = cols
        if fam not in ("none", "gaussian", "gamma"):
            raise ValueError(f"line {lineno}: unknown family {fam!r}")
        if label in fams or (family is not None and fam != family):
            continue
        try:
            if fam == "none":
                fams[label] = None
            elif fam == "gaussian":
                fams[label] = GaussianLike(float(p1), float(p2))
            else:
                fams[label] = GammaLike(float(p1), float(p2))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return DurationModel(fams)
