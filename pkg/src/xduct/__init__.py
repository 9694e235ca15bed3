"""xduct: neural string transducers with exactly marginalized hard attention."""

__version__ = "0.1.0"

from .alignment import (
    brute_force_log_likelihood,
    hard_marginal_log_likelihood,
    jensen_bound,
    reinforce_objective,
)
from .data import TaskKind, Vocabulary, build_vocab, gen_synthetic, read_tsv
from .decode import classify_monotonicity, confusion_table, greedy_decode
from .errors import XductError
from .metrics import evaluate
from .models import Architecture, ModelConfig, build_model, sequence_log_likelihood
from .tensor import Tensor
from .training import TrainConfig, fit, load_checkpoint, load_model, save_checkpoint

__all__ = [
    "Architecture", "ModelConfig", "TaskKind", "Tensor", "TrainConfig", "Vocabulary",
    "XductError", "brute_force_log_likelihood", "build_model", "build_vocab",
    "classify_monotonicity", "confusion_table", "evaluate", "fit", "gen_synthetic",
    "greedy_decode", "hard_marginal_log_likelihood", "jensen_bound", "load_checkpoint",
    "load_model", "read_tsv", "reinforce_objective", "save_checkpoint",
    "sequence_log_likelihood",
]
