"""Pool-based active-learning simulation engine.

Core pipeline: build a reciprocal-kNN affinity graph on model embeddings,
propagate the known labels to certainty-weighted pseudo-labels, train with
mixed labeled/pseudo-labeled batches, then acquire the next labels with an
interchangeable strategy and repeat.
"""

__version__ = "0.1.0"

from .acquire import AcquisitionContext, AcquisitionResult, Strategy, acquire_batch
from .analysis import AgreementReport, compare_strategies, export_rank_scatter, weighted_accuracy
from .cluster import Clustering, cluster_pseudo_labels, kmeans
from .dataset import (Dataset, LabelState, commit_batch, init_labels, load_dataset,
                      oracle_label, save_dataset, split_holdout)
from .driver import CycleRecord, RunConfig, RunResult, run, summarize
from .errors import ConfigError, ConvergenceError, DataFormatError, EngineError
from .graph import SparseGraph, build_reciprocal_knn, normalize, similarity
from .model import (Classifier, LinearEmbedding, LinearSoftmax, TrainPlan, cosine_lr,
                    cross_entropy, load_checkpoint, make_model, predict_all,
                    pretrain_unsupervised, save_checkpoint, train_semi, train_supervised)
from .propagate import (Propagation, certainty_weight, entropy, one_hot, prediction,
                        pseudo_label_all, solve_propagation)
from .synth import gen_synthetic, make_blobs, make_chain, make_two_moons
