"""Multilevel graph embedding on CPUs.

Pipeline: load an edge list into a CSR graph, coarsen it into a hierarchy of
shrinking graphs, train embeddings from the coarsest level down with
negative-sampling logistic updates (spilling to a partitioned out-of-core
trainer when a level exceeds the resident budget), then evaluate by link
prediction.
"""

__version__ = "0.1.0"

from .errors import (MlembedError, EdgeListParseError, EmptyGraphError,
                     SplitError, PlanError, SamplingError, ConfigError)
from .graph import (Graph, SplitResult, from_edges, load_edge_list,
                    write_edge_list, degree, split_train_test, save_graph,
                    load_graph)
from .coarsen import (Mapping, Hierarchy, degree_order, collapse_map,
                      collapse_map_parallel, build_coarse_graph, coarsen_all)
from .trainer import (TrainConfig, EpochPlan, TrainStats, init_embedding,
                      sigmoid, update_embedding, epoch_shares, epoch_plan,
                      lr_at, train_level, expand_embedding, train_multilevel,
                      save_embedding, load_embedding, write_embedding_tsv)
from .bigtrain import (MemoryBudget, PartitionPlan, SamplePool,
                       ResidencyState, plan_partitions, rotation_pairs,
                       build_sample_pool, train_pair, next_submatrix,
                       switch_submatrices, train_large)
from .evaluate import (FeatureSet, LogRegConfig, LogRegModel, EvalReport,
                       hadamard_features, sample_negative_edges, train_logreg,
                       predict_scores, auc_roc, run_link_prediction)

__all__ = [
    "MlembedError", "EdgeListParseError", "EmptyGraphError", "SplitError",
    "PlanError", "SamplingError", "ConfigError",
    "Graph", "SplitResult", "from_edges", "load_edge_list", "write_edge_list",
    "degree", "split_train_test", "save_graph", "load_graph",
    "Mapping", "Hierarchy", "degree_order", "collapse_map",
    "collapse_map_parallel", "build_coarse_graph", "coarsen_all",
    "TrainConfig", "EpochPlan", "TrainStats", "init_embedding", "sigmoid",
    "update_embedding", "epoch_shares", "epoch_plan", "lr_at", "train_level",
    "expand_embedding", "train_multilevel", "save_embedding",
    "load_embedding", "write_embedding_tsv",
    "MemoryBudget", "PartitionPlan", "SamplePool", "ResidencyState",
    "plan_partitions", "rotation_pairs", "build_sample_pool", "train_pair",
    "next_submatrix", "switch_submatrices", "train_large",
    "FeatureSet", "LogRegConfig", "LogRegModel", "EvalReport",
    "hadamard_features", "sample_negative_edges", "train_logreg",
    "predict_scores", "auc_roc", "run_link_prediction",
]
