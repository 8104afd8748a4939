"""Command-line interface.

Exit status: 0 on success, 1 for usage errors, 2 for data errors (bad
files, empty samples), 3 for numerical failures during training or
inference. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from importlib import resources
from typing import Sequence, TextIO

import numpy as np

from .corpus import DEFAULT_PATTERN, CorpusError, LabelSet, read_corpus, write_corpus
from .decoding import DecodeStats, constrained_viterbi, decode, viterbi_with_stats
from .duration import (
    DurationFitError,
    DurationModel,
    collect_histogram,
    discrete_loglik,
    fit_family,
    format_duration_lines,
    parse_duration_lines,
)
from .evaluation import evaluate
from .features import TEMPLATES, load_templates
from .modelfile import ModelFormatError, load_model, save_model
from .synth import SynthConfig, generate_corpus, parse_lengths
from .training import TrainConfig, TrainingError, fit, prepare

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

log = logging.getLogger("dmsmcrf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_corpus_path() -> str:
    """Path of the bundled 60-sentence synthetic corpus."""
    return str(resources.files("dmsmcrf") / "data" / "synth60.txt")


class _Output:
    """``-`` or no path means standard output."""

    def __init__(self, path: str | None):
        self.path = path

    def __enter__(self) -> TextIO:
        if self.path in (None, "-"):
            self.fh = None
            return sys.stdout
        self.fh = open(self.path, "w", encoding="utf-8", newline="\n")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit_durations(args) -> int:
    label_set = LabelSet()
    if args.label not in label_set.durational:
        raise UsageError(f"label {args.label!r} is not durational")
    corpus = read_corpus(args.corpus, label_set)
    h = collect_histogram(corpus, label_set.id(args.label))
    families = ["gaussian", "gamma"] if args.family == "both" else [args.family]
    rows = []
    for family in families:
        fam = fit_family(h, family)
        rows.append((args.label, fam, None if fam is None else discrete_loglik(fam, h)))
    with _Output(args.out) as out:
        out.write(f"# {args.label} length histogram: n={h.total} mean={h.mean():.6g} var={h.variance():.6g}\n")
        for d, c in sorted(h.counts.items()):
            out.write(f"# {d}\t{c}\n")
        out.write(format_duration_lines(rows))
    return 0


def _duration_model(args, corpus, label_set) -> DurationModel:
    family = args.duration or "gamma"
    if args.duration_file is None:
        return DurationModel.fit(corpus, label_set, family)
    with open(args.duration_file, encoding="utf-8") as fh:
        model = parse_duration_lines(fh, family=args.duration)
    missing = sorted(set(label_set.durational) - set(model.families))
    if missing:
        raise ValueError(f"duration file has no {args.duration or 'usable'} line for {', '.join(missing)}")
    return model


def cmd_train(args) -> int:
    if args.l < 1:
        raise UsageError("--l must be >= 1")
    label_set = LabelSet()
    corpus = read_corpus(args.corpus, label_set)
    if not corpus:
        raise CorpusError("training corpus is empty")
    templates = TEMPLATES if args.templates is None else load_templates(args.templates)
    duration = _duration_model(args, corpus, label_set)
    skeleton, split = prepare(corpus, args.l, label_set, duration, templates, DEFAULT_PATTERN)
    cfg = TrainConfig(sigma2_reg=args.sigma2, max_iterations=args.max_iter, tol=args.tol)
    theta0 = None
    if args.init == "random":
        theta0 = np.random.default_rng(args.seed).normal(0.0, 0.1, skeleton.index.K)
    t0 = time.perf_counter()
    res = fit(split, cfg, skeleton, theta0)
    log.info(
        "trained %d features in %d iterations (%.2fs): objective %.10g -> %.10g, converged=%s",
        skeleton.index.K, res.n_iter, time.perf_counter() - t0, res.initial_value, res.value, res.converged,
    )
    if not res.converged:
        print(f"warning: stopped after {res.n_iter} iterations without meeting --tol", file=sys.stderr)
    save_model(res.model, args.out)
    return 0


def cmd_tag(args) -> int:
    model = load_model(args.model)
    label_set = model.label_set
    corpus = read_corpus(args.corpus, label_set)
    total = DecodeStats()
    predictions = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.decoder == "viterbi" else "default")
        for s in corpus:
            path, stats = decode(model, s, args.decoder, prune=not args.no_prune, np_constraint=not args.no_np_constraint)
            predictions.append(path.segments)
            total += stats
    with _Output(args.out) as out:
        write_corpus(out, corpus, label_set, predictions)
    if args.stats:
        print(
            "decoder\tsentences\ttransitions_evaluated\tsegments_pruned_by_np\t"
            "segments_pruned_by_monotonicity\twall_time",
            file=sys.stderr,
        )
        print(
            f"{args.decoder}\t{len(corpus)}\t{total.transitions_evaluated}\t{total.segments_pruned_by_np}\t"
            f"{total.segments_pruned_by_monotonicity}\t{total.wall_time:.6f}",
            file=sys.stderr,
        )
    return 0


def cmd_eval(args) -> int:
    label_set = LabelSet()
    gold = read_corpus(args.gold, label_set)
    pred = read_corpus(args.predicted, label_set)
    if len(gold) != len(pred):
        raise CorpusError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if [t.surface for t in g.tokens] != [t.surface for t in p.tokens]:
            raise CorpusError(f"sentence {k + 1} differs between gold and predicted files")
    sys.stdout.write(evaluate(gold, pred, label_set, match=args.match).tsv())
    return 0


BENCH_CONFIGS = (
    ("viterbi", dict(decoder="viterbi")),
    ("constrained", dict(decoder="constrained", prune=True, np_constraint=True)),
    ("constrained-no-prune", dict(decoder="constrained", prune=False, np_constraint=True)),
    ("constrained-no-np", dict(decoder="constrained", prune=True, np_constraint=False)),
)
BENCH_COLUMNS = (
    "config", "sentences", "repetitions", "wall_time", "transitions_evaluated",
    "segments_pruned_by_np", "segments_pruned_by_monotonicity", "agreement_vs_viterbi",
    "measured_ratio", "table_ratio",
)


def complexity_ratio(y_star: float, d_star: float, L: int, n_labels: int) -> float:
    """Predicted fraction of transitions left after constraining and pruning.

    ``y_star`` is the mean number of admissible labels per candidate
    segment and ``d_star`` the mean length of a durational segment.
    """
    return (y_star**2 + L * y_star - (L - d_star)) / (L * n_labels**2)


def bench_decode(model, corpus, repetitions: int) -> list[dict]:
    """One row per decoder configuration; empty when ``repetitions`` is 0."""
    if repetitions <= 0 or not corpus:
        return []
    rows = []
    reference = None
    base_transitions = None
    durational = set(model.label_set.durational_ids)
    for name, kw in BENCH_CONFIGS:
        paths = []
        stats = DecodeStats()
        wall = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for rep in range(repetitions):
                for s in corpus:
                    t0 = time.perf_counter()
                    if kw["decoder"] == "viterbi":
                        path, st = viterbi_with_stats(model, s)
                    else:
                        path, st = constrained_viterbi(model, s, prune=kw["prune"], np_constraint=kw["np_constraint"])
                    wall += time.perf_counter() - t0
                    if rep == 0:
                        paths.append(path.segments)
                        stats += st
        if reference is None:
            reference, base_transitions = paths, stats.transitions_evaluated
        agree = sum(p == r for p, r in zip(paths, reference)) / len(corpus)
        lengths = [seg.length for p in paths for seg in p if seg.label in durational]
        d_star = float(np.mean(lengths)) if lengths else 0.0
        candidates = stats.transitions_evaluated + stats.segments_pruned_by_np + stats.segments_pruned_by_monotonicity
        rows.append(
            dict(
                config=name,
                sentences=len(corpus),
                repetitions=repetitions,
                wall_time=wall,
                transitions_evaluated=stats.transitions_evaluated,
                segments_pruned_by_np=stats.segments_pruned_by_np,
                segments_pruned_by_monotonicity=stats.segments_pruned_by_monotonicity,
                agreement_vs_viterbi=agree,
                measured_ratio=stats.transitions_evaluated / base_transitions if base_transitions else float("nan"),
                table_ratio=_table_ratio(model, corpus, kw, d_star) if candidates else float("nan"),
            )
        )
    return rows


def _table_ratio(model, corpus, kw, d_star: float) -> float:
    Y, L = model.n_labels, model.L
    if kw["decoder"] == "viterbi" or not kw["np_constraint"]:
        y_star = float(Y)
    else:
        from .decoding import _cached_spans

        durational = len(model.label_set.durational_ids)
        allowed = total = 0
        for s in corpus:
            spans = _cached_spans(s, L, model.config.pattern)
            for start in range(len(s)):
                for d in range(1, min(L, len(s) - start) + 1):
                    total += 1
                    allowed += Y - durational + (durational if (start, start + d - 1) in spans else 0)
        y_star = allowed / total
    return complexity_ratio(y_star, d_star, L, Y)


def format_bench(rows: Sequence[dict]) -> str:
    lines = ["\t".join(BENCH_COLUMNS)]
    for r in rows:
        cells = []
        for c in BENCH_COLUMNS:
            v = r[c]
            cells.append(f"{v:.6g}" if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_bench_decode(args) -> int:
    if args.repetitions < 0:
        raise UsageError("--repetitions must be >= 0")
    model = load_model(args.model)
    corpus = read_corpus(args.corpus, model.label_set)
    sys.stdout.write(format_bench(bench_decode(model, corpus, args.repetitions)))
    return 0


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(
        n_sentences=args.n,
        lengths=parse_lengths(args.lengths),
        title_rate=args.title_rate,
        noise=args.noise,
        seed=args.seed,
    )
    with _Output(args.out) as out:
        write_corpus(out, generate_corpus(cfg), LabelSet())
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dmsmcrf", description="Duration-modeled semi-Markov CRF keyphrase tagger.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("fit-durations", help="fit length distributions of a durational label")
    q.add_argument("corpus")
    q.add_argument("--label", default="KP")
    q.add_argument("--family", choices=("gaussian", "gamma", "both", "none"), default="both")
    q.add_argument("--out", help="output file (default: standard output)")
    q.set_defaults(func=cmd_fit_durations)

    q = sub.add_parser("train", help="train a model")
    q.add_argument("corpus")
    q.add_argument("--l", type=int, default=2, help="maximum segment length")
    q.add_argument("--duration", choices=("gamma", "gaussian", "none"), default=None,
                   help="duration family (default gamma)")
    q.add_argument("--duration-file", help="use parameters written by fit-durations instead of refitting")
    q.add_argument("--sigma2", type=float, default=10.0, help="Gaussian prior variance")
    q.add_argument("--max-iter", type=int, default=500)
    q.add_argument("--tol", type=float, default=1e-5, help="gradient max-norm stopping threshold")
    q.add_argument("--templates", help="file listing observation templates, one per line")
    q.add_argument("--init", choices=("zero", "random"), default="zero")
    q.add_argument("--seed", type=int, default=0, help="seed for --init random")
    q.add_argument("--out", required=True, help="model file to write")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("tag", help="decode a corpus")
    q.add_argument("corpus")
    q.add_argument("--model", required=True)
    q.add_argument("--decoder", choices=("viterbi", "constrained"), default="constrained")
    q.add_argument("--no-prune", action="store_true")
    q.add_argument("--no-np-constraint", action="store_true")
    q.add_argument("--stats", action="store_true", help="print decoding counters to standard error")
    q.add_argument("--out", help="output file (default: standard output)")
    q.set_defaults(func=cmd_tag)

    q = sub.add_parser("eval", help="score predictions against gold")
    q.add_argument("gold")
    q.add_argument("predicted")
    q.add_argument("--match", choices=("span", "string"), default="span")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("bench-decode", help="time decoder configurations")
    q.add_argument("corpus")
    q.add_argument("--model", required=True)
    q.add_argument("--repetitions", type=int, default=1)
    q.set_defaults(func=cmd_bench_decode)

    q = sub.add_parser("gen-synth", help="write a synthetic corpus")
    q.add_argument("--n", type=int, default=60)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--lengths", default="1:0.3,2:0.7", help="length:weight pairs")
    q.add_argument("--noise", type=float, default=0.0)
    q.add_argument("--title-rate", type=float, default=0.6)
    q.add_argument("--out", help="output file (default: standard output)")
    q.set_defaults(func=cmd_gen_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dmsmcrf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"dmsmcrf: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CorpusError as exc:
        print(f"dmsmcrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DurationFitError, ModelFormatError, OSError, ValueError) as exc:
        print(f"dmsmcrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
