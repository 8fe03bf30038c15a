"""Normalizing-flow novelty detection for univariate time series."""

from .cnf import CnfModel, SolverConfig, build_cnf, cnf_log_prob, cnf_sample
from .config import ExperimentConfig
from .datagen import AutocorrSpec, TimeSeriesBatch, generate_synthetic, preprocess
from .evaluate import ScoreSet, auc, decision_boundary, roc, score_batch
from .lof import LofModel, lof_fit, lof_score
from .made import MadeNetwork, build_made
from .maf import MafStack, build_maf, maf_log_prob, maf_sample
from .training import TrainConfig, TrainReport, train

__all__ = [
    "AutocorrSpec", "CnfModel", "ExperimentConfig", "LofModel", "MadeNetwork", "MafStack",
    "ScoreSet", "SolverConfig", "TimeSeriesBatch", "TrainConfig", "TrainReport", "auc",
    "build_cnf", "build_made", "build_maf", "cnf_log_prob", "cnf_sample", "decision_boundary",
    "generate_synthetic", "lof_fit", "lof_score", "maf_log_prob", "maf_sample", "preprocess",
    "roc", "score_batch", "train",
]
