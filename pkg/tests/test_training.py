import math
import random

import numpy as np
import pytest
from scipy.optimize import minimize, rosen, rosen_der

from dmsmcrf.corpus import LabelSet, Segment, Sentence, Token
from dmsmcrf.duration import DurationModel, GammaLike
from dmsmcrf.inference import lattice
from dmsmcrf.training import (
    CorpusObjective,
    Objective,
    TrainConfig,
    TrainingError,
    fit,
    lbfgs,
    nll,
    prepare,
)

from oracles import random_sentence

LS = LabelSet()


def small_problem(seed, n_sent=3, L=None, family="gamma"):
    rng = random.Random(seed)
    L = rng.randint(1, 3) if L is None else L
    corpus = [random_sentence(rng, rng.randint(1, 6), L) for _ in range(n_sent)]
    duration = DurationModel({"KP": GammaLike(rng.uniform(0.3, 2), rng.uniform(0, 3))} if family == "gamma" else {"KP": None})
    skeleton, split = prepare(corpus, L, LS, duration)
    theta = np.array([rng.gauss(0, 0.7) for _ in range(skeleton.index.K)])
    return skeleton, split, theta


def relative_error(analytic, numeric, floor=1e-8):
    """Largest component-wise relative error over components larger than ``floor``."""
    keep = np.abs(analytic) > floor
    return float(np.max(np.abs(analytic - numeric)[keep] / np.abs(analytic[keep])))


def central_differences(f, x, h=1e-5):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e).value - f(x - e).value) / (2 * h)
    return g


class TestObjective:
    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        skeleton, corpus, theta = small_problem(seed)
        f = CorpusObjective(skeleton, corpus, TrainConfig(sigma2_reg=2.0))
        assert relative_error(f(theta).gradient, central_differences(f, theta)) < 1e-5

    def test_value_at_zero(self):
        skeleton, corpus, _ = small_problem(1, family="none")
        expected = sum(lattice(skeleton, s).logZ for s in corpus)
        assert nll(skeleton, corpus).value == pytest.approx(expected, rel=1e-12)

    def test_value_is_regularized_negative_log_likelihood(self):
        skeleton, corpus, theta = small_problem(2)
        m = skeleton.with_theta(theta)
        cfg = TrainConfig(sigma2_reg=3.0)
        from dmsmcrf.inference import gold_features

        ll = sum(float(theta @ gold_features(m, s)) - lattice(m, s).logZ for s in corpus)
        assert nll(m, corpus, cfg).value == pytest.approx(-ll + theta @ theta / 6.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_midpoint_convexity(self, seed):
        skeleton, corpus, _ = small_problem(seed)
        f = CorpusObjective(skeleton, corpus, TrainConfig())
        rng = np.random.default_rng(seed)
        for _ in range(10):
            a, b = rng.normal(0, 2, (2, skeleton.index.K))
            mid = f((a + b) / 2).value
            assert mid <= (f(a).value + f(b).value) / 2 + 1e-9

    def test_rejects_unsplit_gold(self):
        skeleton, _, _ = small_problem(0, L=1)
        toks = (Token("a", "NN"), Token("b", "NN"))
        with pytest.raises(ValueError, match="longer than L"):
            CorpusObjective(skeleton, [Sentence(toks, (Segment(0, 1, 1),))], TrainConfig())

    def test_batching_does_not_change_value(self):
        skeleton, corpus, theta = small_problem(4, n_sent=9)
        a = CorpusObjective(skeleton, corpus, TrainConfig(batch_size=1))(theta)
        b = CorpusObjective(skeleton, corpus, TrainConfig(batch_size=64))(theta)
        assert a.value == pytest.approx(b.value, rel=1e-13)
        np.testing.assert_allclose(a.gradient, b.gradient, atol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(sigma2_reg=0.0)


def quad(A, b):
    def f(x):
        return Objective(0.5 * x @ A @ x - b @ x, A @ x - b)

    return f


class TestLbfgs:
    def test_quadratic(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(6, 6))
        A = M @ M.T + np.eye(6)
        b = rng.normal(size=6)
        res = lbfgs(quad(A, b), np.zeros(6), tol=1e-8)
        assert res.converged
        np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-7)

    def test_unreachable_tolerance_stalls_without_error(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(6, 6))
        A = M @ M.T + np.eye(6)
        b = rng.normal(size=6)
        res = lbfgs(quad(A, b), np.zeros(6), tol=1e-300)
        assert not res.converged and res.stalled
        np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-7)

    def test_rosenbrock_against_scipy(self):
        x0 = np.array([-1.2, 1.0, 0.5])
        res = lbfgs(lambda x: Objective(rosen(x), rosen_der(x)), x0, tol=1e-8, max_iter=1000)
        ref = minimize(rosen, x0, jac=rosen_der, method="L-BFGS-B", options=dict(gtol=1e-10))
        np.testing.assert_allclose(res.x, ref.x, atol=1e-5)

    def test_history_monotone(self):
        skeleton, corpus, _ = small_problem(3, n_sent=5)
        res = fit(corpus, TrainConfig(), skeleton)
        assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
        assert res.value <= res.initial_value

    def test_already_optimal(self):
        res = lbfgs(quad(np.eye(2), np.zeros(2)), np.zeros(2))
        assert res.converged and res.n_iter == 0

    def test_line_search_failure_raises(self):
        def bad(x):
            # gradient points the wrong way: no step can satisfy the Wolfe conditions
            return Objective(float(x @ x), -2 * x)

        with pytest.raises(TrainingError):
            lbfgs(bad, np.ones(2))


class TestFit:
    def test_restarts_agree(self):
        skeleton, corpus, _ = small_problem(6, n_sent=6, L=2)
        cfg = TrainConfig(tol=1e-7, max_iterations=2000)
        rng = np.random.default_rng(0)
        values = [fit(corpus, cfg, skeleton, rng.normal(0, 1, skeleton.index.K)).value for _ in range(2)]
        values.append(fit(corpus, cfg, skeleton).value)
        assert max(values) - min(values) < 1e-6

    def test_prepare_splits_and_keeps_unsplit_durations(self):
        toks = tuple(Token(w, "NN") for w in "abcde")
        corpus = [
            Sentence(toks, (Segment(0, 2, 1), Segment(3, 4, 0))),
            Sentence(toks, (Segment(0, 0, 1), Segment(1, 4, 0))),
        ]
        skeleton, split = prepare(corpus, 2, LS, "gaussian")
        assert all(seg.length <= 2 for s in split for seg in s.gold)
        fam = skeleton.config.duration.family("KP")
        assert fam.mu == 2.0 and fam.sigma2 == 1.0
        assert math.isfinite(nll(skeleton, split).value)


class TestAgainstOracles:
    def test_featureless_optimum_matches_enumeration(self):
        """With no observation templates only transition and duration weights are
        learned; the optimum must match a generic optimizer run on an
        objective computed by enumerating every path."""
        from oracles import enumerate_model

        rng = random.Random(11)
        corpus = [random_sentence(rng, rng.randint(2, 5), 2) for _ in range(4)]
        skeleton, split = prepare(corpus, 2, LS, DurationModel({"KP": GammaLike(1.0, 1.0)}), templates=())
        cfg = TrainConfig(sigma2_reg=1.0, tol=1e-8)

        def oracle(theta):
            m = skeleton.with_theta(theta)
            value = theta @ theta / 2.0
            for s in split:
                e = enumerate_model(m, s)
                gold = dict(((path), sc) for sc, path in e.paths)[tuple(s.gold)]
                value += e.logZ - gold
            return value

        ref = minimize(oracle, np.zeros(skeleton.index.K), method="BFGS", options=dict(gtol=1e-9))
        ours = fit(split, cfg, skeleton)
        assert ours.value == pytest.approx(ref.fun, abs=1e-6)
        assert ours.value >= 0.0

    def test_training_f1_invariant_to_weak_prior(self):
        from dmsmcrf.decoding import viterbi
        from dmsmcrf.evaluation import evaluate
        from dmsmcrf.synth import SynthConfig, generate_corpus

        corpus = generate_corpus(SynthConfig(n_sentences=20, seed=3))
        skeleton, split = prepare(corpus, 2, LS, "gamma")
        scores = []
        for sigma2 in (10.0, 10.0 * 1e6):
            m = fit(split, TrainConfig(sigma2_reg=sigma2, max_iterations=300), skeleton).model
            scores.append(evaluate(split, [viterbi(m, s) for s in split], LS).f1)
        assert scores == [1.0, 1.0]
