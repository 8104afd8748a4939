"""Duration-modeled semi-Markov conditional random fields for phrase tagging."""

from .corpus import LabelSet, Segment, Sentence, Token, parse_corpus, read_corpus, write_corpus
from .decoding import check_monotonicity_assumption, constrained_viterbi, decode, viterbi
from .duration import DurationModel, GammaLike, GaussianLike, fit_gamma, fit_gaussian
from .evaluation import evaluate
from .inference import Model, lattice
from .modelfile import load_model, save_model
from .training import TrainConfig, prepare, train

__version__ = "0.1.0"

__all__ = [
    "LabelSet", "Segment", "Sentence", "Token", "parse_corpus", "read_corpus", "write_corpus",
    "check_monotonicity_assumption", "constrained_viterbi", "decode", "viterbi",
    "DurationModel", "GammaLike", "GaussianLike", "fit_gamma", "fit_gaussian",
    "evaluate", "Model", "lattice", "load_model", "save_model", "TrainConfig", "prepare", "train",
]
