"""alertlab: context-based alert triage pipeline and imbalance laboratory.

The package reimplements an attention-based alert post-processing
pipeline (context encoding, attention extraction, density clustering
with rejection) together with the machinery needed to study how class
imbalance affects it: a synthetic alert stream with injected attacks,
simulated ruleset tuning, four control-dataset generators, robust
regression attribution, and explanation-correctness scoring.
"""

from .context_builder import (AttentionVector, ModelParams, Prediction, TrainConfig,
                              label_smoothed_loss, predict, total_attention, train)
from .dataset_lab import (RuleFilter, apply_rule_filter, balance_incidents,
                          chronological_splits, control_dataset_size,
                          control_dimensionality, control_filtering_method,
                          control_heterogeneity, make_tuned_suite)
from .ingest import (AlertDataset, AlertRecord, DatasetStats, SyntheticConfig,
                     dataset_stats, generate_stream, parse_alerts, write_alerts)
from .interpreter import (ClusterModel, Hyperparameters, classify, dbscan, fit)
from .metrics import (ConfusionMatrix, RaterVector, compare_explanations, compute_ir,
                      cosine_similarity, empirical_cdf, micro_macro_f1, relaxed_prf)
from .analysis import (DesignMatrix, RegressionResult, attribute_performance, ks_gof,
                       robust_fit, standardize, vif_prune)
from .hyperopt import Grid, SearchBudget, default_grid, grid_cardinality, random_search
from .sequencer import EventVocabulary, Sequence, build_sequences, build_vocabulary
from .experiment import ExperimentConfig, run_experiment

__version__ = "0.1.0"
