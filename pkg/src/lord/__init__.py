"""Open-set recognition with known-unknown training data and mixup-synthesized background."""
from .base import DimensionMismatch, ScoreBatch
from .data import (KC, KUC, UNKNOWN, UUC, OpenSetDataset, ParseError, SampleSet, SplitConfigError,
                   SplitSpec, load_features, make_split, save_features, synth_blobs, toy_benchmark)
from .evm import EvmConfig, EvmModel, cevm_reduce, dbscan, fit_evm, score_evm
from .evt import WeibullParams, fit_tail, weibull_fit_mle, weibull_inclusion
from .harness import ExperimentConfig, RunReport, export_report, grid_search, run_experiment
from .linear import LinearModel, TrainConfig, entropic_objective, fit_linear, score_linear
from .metrics import (EvalMode, ScoreTable, build_score_table, ccr_at_fpr, oscr_curve, roc_auc,
                      summarize)
from .mixup import MixupConfig, centroid_stats, generate_mixups
from .osnn import OsnnModel, fit_osnn, score_osnn
from .strategy import StrategyKind, StrategyView, UnsupportedStrategy, apply_strategy
from .svm import SvmParams, fit_pisvm, fit_wsvm, smo_train_binary, svm_score, train_one_class

__version__ = "0.1.0"
