"""Setwise Bayesian collaborative ranking for implicit feedback.

The package trains matrix-factorization recommenders with a setwise
ranking likelihood (each observed item beats the whole set of unobserved
items), compares them against a BPR baseline and ships the tooling for
synthetic checks of the underlying probability model.
"""

from .bpr import train_bpr
from .core import (
    objective,
    permutation_probability,
    phi,
    setwise_log_prob,
    top1_probabilities,
    top1_probability,
)
from .data import ImplicitDataset, binarize, filter_users, load, read_ratings, save, split
from .estimators import BPRMF, SetRankMF
from .exceptions import SetRankError
from .factors import FactorModel, TrainConfig, init_model, load_model, save_model
from .metrics import EvalReport, evaluate
from .theory import excess_risk, make_world, sample_world, scaling_sweep
from .trainer import TrainResult, fast_gradients, naive_gradients, train

__version__ = "0.1.0"

__all__ = [
    "BPRMF",
    "EvalReport",
    "FactorModel",
    "ImplicitDataset",
    "SetRankError",
    "SetRankMF",
    "TrainConfig",
    "TrainResult",
    "binarize",
    "evaluate",
    "excess_risk",
    "fast_gradients",
    "filter_users",
    "init_model",
    "load",
    "load_model",
    "make_world",
    "naive_gradients",
    "objective",
    "permutation_probability",
    "phi",
    "read_ratings",
    "sample_world",
    "save",
    "save_model",
    "scaling_sweep",
    "setwise_log_prob",
    "split",
    "top1_probabilities",
    "top1_probability",
    "train",
    "train_bpr",
]
