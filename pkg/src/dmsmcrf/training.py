"""Regularized conditional log-likelihood and L-BFGS training."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import line_search

from .corpus import DEFAULT_PATTERN, LabelSet, NounGroupPattern, Sentence, split_long_segments
from .duration import DurationModel
from .features import TEMPLATES, FeatureConfig, build_index
from .inference import Batch, Model, gold_features, sentence_tables

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "Objective",
    "TrainingError",
    "CorpusObjective",
    "TrainResult",
    "nll",
    "lbfgs",
    "prepare",
    "fit",
    "train",
]


class TrainingError(RuntimeError):
    def __init__(self, message: str, theta: np.ndarray | None = None):
        super().__init__(message)
        self.theta = theta


@dataclass(frozen=True)
class TrainConfig:
    sigma2_reg: float = 10.0
    max_iterations: int = 500
    tol: float = 1e-5
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    batch_size: int = 64

    def __post_init__(self):
        for name in ("sigma2_reg", "max_iterations", "tol", "memory", "batch_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Objective:
    value: float
    gradient: np.ndarray


class CorpusObjective:
    """Negative log-likelihood of a fixed corpus as a function of ``theta``.

    Score tables are built once; sentences are grouped by length into
    batches that are always reduced in the same order.
    """

    def __init__(self, m: Model, corpus: Sequence[Sentence], cfg: TrainConfig):
        self.model = m
        self.cfg = cfg
        for s in corpus:
            for seg in s.gold:
                if seg.length > m.L:
                    raise ValueError(f"gold segment {seg} longer than L={m.L}; split it first")
        tables = [sentence_tables(m, s) for s in corpus]
        self.gold = np.zeros(m.index.K)
        for s, t in zip(corpus, tables):
            self.gold += gold_features(m, s, t)
        order = sorted(range(len(tables)), key=lambda k: (tables[k].n, k))
        size = cfg.batch_size
        self.batches = [
            Batch(m, [tables[k] for k in order[i : i + size]]) for i in range(0, len(order), size)
        ]
        self.evaluations = 0

    def __call__(self, theta: np.ndarray) -> Objective:
        self.evaluations += 1
        theta = np.asarray(theta, dtype=float)
        value = 0.0
        grad = np.zeros_like(theta)
        for batch in self.batches:
            logZ, expected = batch.log_partition_and_expectations(theta)
            value += float(logZ.sum())
            grad += expected
        value += -float(theta @ self.gold) + float(theta @ theta) / (2.0 * self.cfg.sigma2_reg)
        grad += -self.gold + theta / self.cfg.sigma2_reg
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite objective")
        return Objective(value, grad)


def nll(m: Model, corpus: Sequence[Sentence], cfg: TrainConfig = TrainConfig()) -> Objective:
    """Objective value and gradient at ``m.theta``."""
    return CorpusObjective(m, corpus, cfg)(m.theta)


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    n_iter: int
    converged: bool
    history: list[float] = field(default_factory=list)
    # True when the line search gave up because no decrease is representable
    stalled: bool = False


# directional derivatives below this multiple of |f| cannot yield a decrease
# that float64 resolves, so a failed line search there is a precision stall
_STALL = 1e-12


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _search(f, fprime, x, direction, g, fx, c1, c2):
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="The line search algorithm did not converge")
        step, *_ = line_search(f, fprime, x, direction, g, fx, c1=c1, c2=c2, maxiter=50)
    return step


def lbfgs(
    fun: Callable[[np.ndarray], Objective],
    x0: np.ndarray,
    memory: int = 10,
    max_iter: int = 500,
    tol: float = 1e-5,
    c1: float = 1e-4,
    c2: float = 0.9,
) -> LbfgsResult:
    """Limited-memory BFGS with a strong-Wolfe line search.

    Stops when the gradient's max-norm is at most ``tol`` or after
    ``max_iter`` iterations. A failed line search raises
    :class:`TrainingError`, except when the directional derivative is
    already at rounding level; then the current iterate is returned with
    ``stalled`` set.
    """
    cache: dict[bytes, Objective] = {}

    def evaluate(x):
        key = x.tobytes()
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            cache[key] = fun(x)
        return cache[key]

    f_only = lambda x: evaluate(x).value  # noqa: E731
    g_only = lambda x: evaluate(x).gradient  # noqa: E731

    x = np.array(x0, dtype=float)
    obj = evaluate(x)
    f, g = obj.value, obj.gradient
    history = [f]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    k = 0
    while k < max_iter:
        if np.max(np.abs(g)) <= tol:
            return LbfgsResult(x, f, g, k, True, history)
        if s_hist:
            direction = _two_loop(g, s_hist, y_hist)
        else:
            direction = -g / max(1.0, float(np.linalg.norm(g)))
        if float(g @ direction) >= 0:
            s_hist.clear()
            y_hist.clear()
            direction = -g / max(1.0, float(np.linalg.norm(g)))
        step = _search(f_only, g_only, x, direction, g, f, c1, c2)
        if step is None and s_hist:
            # retry once from steepest descent with the memory dropped
            s_hist.clear()
            y_hist.clear()
            direction = -g / max(1.0, float(np.linalg.norm(g)))
            step = _search(f_only, g_only, x, direction, g, f, c1, c2)
        if step is None and abs(float(g @ direction)) <= _STALL * max(1.0, abs(f)):
            log.warning("line search stalled at rounding level after %d iterations (|g|max=%.3g)",
                        k, np.max(np.abs(g)))
            return LbfgsResult(x, f, g, k, False, history, stalled=True)
        if step is None:
            raise TrainingError(
                f"line search failed at iteration {k} (f={f:.12g}, |g|max={np.max(np.abs(g)):.3g})",
                theta=x,
            )
        x_new = x + step * direction
        new = evaluate(x_new)
        s, y = x_new - x, new.gradient - g
        if float(s @ y) > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, new.value, new.gradient
        history.append(f)
        k += 1
        log.debug("iter %d f=%.10g |g|=%.3g", k, f, np.max(np.abs(g)))
    return LbfgsResult(x, f, g, k, bool(np.max(np.abs(g)) <= tol), history)


def prepare(
    corpus: Sequence[Sentence],
    L: int,
    label_set: LabelSet = LabelSet(),
    duration: str | DurationModel = "gamma",
    templates: Sequence[str] = TEMPLATES,
    pattern: NounGroupPattern = DEFAULT_PATTERN,
    all_segments: bool = False,
) -> tuple[Model, list[Sentence]]:
    """Split long gold segments, fit durations, build and freeze the index.

    Returns a zero-weight model and the split corpus. Durations are fitted
    on the unsplit gold lengths.
    """
    if isinstance(duration, str):
        duration = DurationModel.fit(corpus, label_set, duration)
    config = FeatureConfig(label_set, duration, tuple(templates), pattern)
    split = [split_long_segments(s, L, label_set) for s in corpus]
    index = build_index(split, config, L, all_segments=all_segments)
    return Model(config, L, index), split


@dataclass
class TrainResult:
    model: Model
    value: float
    initial_value: float
    n_iter: int
    converged: bool
    history: list[float]


def fit(
    corpus: Sequence[Sentence],
    cfg: TrainConfig,
    skeleton: Model,
    theta0: np.ndarray | None = None,
) -> TrainResult:
    """Minimize the objective over ``theta`` starting from ``theta0`` (zeros by default)."""
    objective = CorpusObjective(skeleton, corpus, cfg)
    x0 = np.zeros(skeleton.index.K) if theta0 is None else np.asarray(theta0, dtype=float)
    res = lbfgs(objective, x0, cfg.memory, cfg.max_iterations, cfg.tol, cfg.c1, cfg.c2)
    if res.history[-1] > res.history[0]:
        raise TrainingError("objective increased during training", theta=res.x)
    return TrainResult(
        skeleton.with_theta(res.x), res.value, res.history[0], res.n_iter, res.converged, res.history
    )


def train(
    corpus: Sequence[Sentence],
    cfg: TrainConfig,
    skeleton: Model,
    theta0: np.ndarray | None = None,
) -> Model:
    return fit(corpus, cfg, skeleton, theta0).model
