"""End-to-end experiment orchestration.

One experiment: obtain a base alert stream (synthetic or from a file),
derive the tuned suite and the control datasets, split and balance each
variant, then for every variant x seed train the context model, cluster,
classify the test split and record metrics.  Afterwards the per-run
relaxed F1 scores are regressed on the dataset characteristics and all
report files are written.

All randomness flows from config seeds; repeated runs with the same
config produce byte-identical metrics and regression CSVs.  Dataset x
seed runs can execute in a worker pool; results merge in a fixed order
so parallelism never changes the output.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataset_lab
from .analysis import DesignMatrix, RegressionResult, attribute_performance, write_regression_csv
from .context_builder import ModelParams, TrainConfig, predict_batch, total_attention_batch, train
from .dataset_lab import balance_incidents, chronological_splits
from .errors import ConfigError, TargetUnreachableError, ValidationError
from .ingest import (AlertDataset, DatasetStats, SyntheticConfig, dataset_stats,
                     generate_stream, parse_alerts)
from .interpreter import (REJECTED_UNSEEN_EVENT, Hyperparameters, classify_batch, fit_arrays)
from .metrics import (ConfusionMatrix, compare_explanations, empirical_cdf, micro_macro_f1,
                      read_rater_file, relaxed_prf, write_confusion_csv)
from .sequencer import (EventVocabulary, Sequence, build_sequences, build_vocabulary,
                        sequences_to_arrays)
from .hyperopt import Grid, SearchBudget, default_grid, random_search, write_trial_log

PREDICTORS = ("label_ir", "dataset_size", "heterogeneity", "unique_events", "event_ir")
CONTROL_KINDS = ("filtering", "size", "dimensionality", "heterogeneity")

METRICS_FIELDS = ("dataset", "run", "seed", "micro_f1", "macro_f1", "relaxed_p", "relaxed_r",
                  "relaxed_f1", "label_ir", "event_ir", "size", "heterogeneity",
                  "dimensionality")


@dataclass
class ExperimentConfig:
    """Everything run_experiment needs; maps 1:1 onto the JSON config file."""

    synthetic: Optional[SyntheticConfig] = None
    input_path: Optional[str] = None
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    tuned_topk: Optional[list[int]] = None
    tuned_filters: Optional[list[str]] = None
    ladder_targets: Optional[list[float]] = None
    controls: list[str] = field(default_factory=lambda: list(CONTROL_KINDS))
    include_unfiltered: bool = True
    repeats: int = 5
    seed: int = 0
    data_seed: int = 7
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.01
    hyperopt_trials: int = 0
    hyperopt_seed: int = 0
    hyperopt_frac: float = 0.01
    train_frac: float = 0.20
    balance_tolerance: float = 0.05
    rater_files: dict[str, str] = field(default_factory=dict)
    output_dir: str = "experiment-out"
    workers: int = 0

    def validate(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.synthetic is None and self.input_path is None:
            raise ConfigError("either a synthetic config or an input path is required")
        for c in self.controls:
            if c not in CONTROL_KINDS:
                raise ConfigError(f"unknown control kind {c!r}, expected one of {CONTROL_KINDS}")
        sources = [self.tuned_topk, self.tuned_filters, self.ladder_targets]
        if sum(s is not None for s in sources) > 1:
            raise ConfigError("give at most one of tuned_topk, tuned_filters, ladder_targets")

    @property
    def run_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.repeats)]


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["hp"] = cfg.hp.as_dict()
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    if data.get("synthetic") is not None:
        data["synthetic"] = SyntheticConfig(**data["synthetic"])
    if data.get("hp") is not None:
        data["hp"] = Hyperparameters(**data["hp"])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"bad experiment config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(data)


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    """Output directory, honoring the ALERTLAB_OUTPUT_ROOT override."""
    root = os.environ.get("ALERTLAB_OUTPUT_ROOT")
    out = Path(cfg.output_dir)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


@dataclass
class Variant:
    """One dataset variant ready to run: data, sequences, vocabulary, stats."""

    name: str
    group: str  # base | tuned | control
    dataset: AlertDataset
    seqs: list[Sequence]
    vocab: EventVocabulary
    stats: DatasetStats
    hp: Hyperparameters
    balance_seed: int


@dataclass
class RunSummary:
    dataset: str
    run: int
    seed: int
    confusion: np.ndarray
    micro_f1: float
    macro_f1: float
    relaxed: tuple[float, float, float]
    elapsed: float
    explanation: Optional[dict[int, np.ndarray]] = None


def _seen_event_mask(contexts: np.ndarray, targets: np.ndarray, vocab_size: int,
                     pad_index: int) -> np.ndarray:
    """Boolean per event index: does it occur in this training data?"""
    seen = np.zeros(vocab_size + 1, dtype=bool)
    seen[pad_index] = True
    real_ctx = contexts[(contexts >= 0) & (contexts < vocab_size)]
    seen[real_ctx] = True
    seen[targets[(targets >= 0) & (targets < vocab_size)]] = True
    return seen


def _unique_forward(params: ModelParams, contexts: np.ndarray, chunk: int = 4096,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Deduplicate contexts and run the model once per unique context.

    Predictions depend only on the context, so identical integer context
    rows always produce identical confidences and attention vectors.
    Returns (unique contexts, inverse map, confidences, total-attention
    vectors per unique context).
    """
    uniq, inverse = np.unique(contexts, axis=0, return_inverse=True)
    confs = np.empty(len(uniq))
    vectors = np.empty((len(uniq), params.vocab_size))
    for start in range(0, len(uniq), chunk):
        stop = min(start + chunk, len(uniq))
        probs, alphas = predict_batch(params, uniq[start:stop])
        confs[start:stop] = probs.max(axis=1)
        vectors[start:stop] = total_attention_batch(uniq[start:stop], alphas,
                                                    params.vocab_size, params.pad_index)
    return uniq, inverse, confs, vectors


def classify_sequences(model: ModelParams, cluster_model, seen: np.ndarray,
                       seqs: list[Sequence]):
    """Classify sequences against a trained model and cluster model.

    ``seen`` is the boolean per-index mask of event types present in the
    training data; any sequence touching an unseen type (including the
    frozen-vocabulary UNSEEN marker) is rejected as such.  Returns
    (outcomes, confusion matrix, total-attention vectors, incident mask).
    """
    ctx, tgt, inc, _ = sequences_to_arrays(seqs)
    ctx_safe = np.where(ctx >= 0, ctx, model.pad_index)
    tgt_safe = np.clip(tgt, 0, model.vocab_size)
    unseen_seq = (~seen[ctx_safe]).any(axis=1) | ~seen[tgt_safe] \
        | (tgt < 0) | (ctx < 0).any(axis=1)

    uniq, inv, confs, vecs = _unique_forward(model, ctx_safe)
    ctx_outcomes = np.asarray(classify_batch(cluster_model, confs, vecs), dtype=object)
    outcomes = ctx_outcomes[inv]
    outcomes[unseen_seq] = REJECTED_UNSEEN_EVENT

    true_labels = np.where(inc, "Incident", "NonIncident")
    cm = ConfusionMatrix.from_pairs(zip(true_labels.tolist(), outcomes.tolist()))
    return list(outcomes), cm, vecs[inv], inc


def fit_interpreter(model: ModelParams, train_seqs: list[Sequence], hp: Hyperparameters):
    """Cluster the training vectors (deduplicated by context, multiplicity-weighted)."""
    ctx_tr, tgt_tr, inc_tr, _ = sequences_to_arrays(train_seqs)
    uniq_tr, inv_tr, conf_tr, vec_tr = _unique_forward(model, ctx_tr)
    counts = np.bincount(inv_tr, minlength=len(uniq_tr)).astype(np.float64)
    inc_u = np.zeros(len(uniq_tr), dtype=bool)
    np.logical_or.at(inc_u, inv_tr, inc_tr)
    cluster_model = fit_arrays(vec_tr, conf_tr, inc_u, hp, sample_weight=counts)
    seen = _seen_event_mask(ctx_tr, tgt_tr, model.vocab_size, model.pad_index)
    return cluster_model, seen


def run_split(train_seqs: list[Sequence], test_seqs: list[Sequence], hp: Hyperparameters,
              tcfg: TrainConfig, vocab_size: int):
    """Train, cluster, classify: the core of one pipeline run.

    Returns (outcomes per test sequence, confusion matrix, test vectors
    by test position, incident mask).  Events absent from the training
    data reject the whole sequence as unseen.
    """
    model = train(train_seqs, tcfg, hp, vocab_size=vocab_size)
    cluster_model, seen = fit_interpreter(model, train_seqs, hp)
    return classify_sequences(model, cluster_model, seen, test_seqs)


def save_bundle(dir_path, model: ModelParams, vocab: EventVocabulary, cluster_model,
                seen: np.ndarray, hp: Hyperparameters) -> None:
    """Persist a trained pipeline (context model + clusters) to a directory."""
    from .context_builder import save_checkpoint

    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, vocab.rules, dir_path / "model.npz")
    labels = cluster_model.cluster_labels
    np.savez(dir_path / "clusters.npz",
             format_version=np.array([1]),
             vectors=cluster_model.vectors,
             incident=cluster_model.incident,
             cluster_ids=cluster_model.cluster_ids,
             seq_indices=cluster_model.seq_indices,
             counts=cluster_model.counts if cluster_model.counts is not None else np.empty(0),
             epsilon=np.array([cluster_model.epsilon]),
             tau=np.array([cluster_model.tau]),
             label_keys=np.array(sorted(labels), dtype=np.int64),
             label_values=np.array([labels[k] for k in sorted(labels)], dtype=object),
             seen=seen)
    with open(dir_path / "hyperparameters.json", "w") as fh:
        json.dump(hp.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(dir_path):
    """Inverse of save_bundle: (model, vocab, cluster model, seen mask, hp)."""
    from .context_builder import load_checkpoint
    from .interpreter import ClusterModel

    dir_path = Path(dir_path)
    model, rules = load_checkpoint(dir_path / "model.npz")
    vocab = EventVocabulary.from_rules(rules, frozen=True)
    with np.load(dir_path / "clusters.npz", allow_pickle=True) as data:
        counts = data["counts"]
        cluster_model = ClusterModel(
            vectors=data["vectors"], incident=data["incident"],
            cluster_ids=data["cluster_ids"],
            cluster_labels={int(k): str(v) for k, v in
                            zip(data["label_keys"], data["label_values"])},
            seq_indices=data["seq_indices"],
            epsilon=float(data["epsilon"][0]), tau=float(data["tau"][0]),
            counts=counts if counts.size else None)
        seen = data["seen"]
    with open(dir_path / "hyperparameters.json") as fh:
        hp = Hyperparameters(**json.load(fh))
    return model, vocab, cluster_model, seen, hp


def execute_run(variant: Variant, cfg: ExperimentConfig, seed: int, run_index: int,
                out_dir: Optional[Path]) -> RunSummary:
    """One dataset x seed run; writes its classification log and confusion."""
    started = time.perf_counter()
    splits = chronological_splits(variant.seqs, cfg.hyperopt_frac, cfg.train_frac)
    train_seqs = balance_incidents(splits["train"], splits["test"], seed=variant.balance_seed,
                                   tolerance=cfg.balance_tolerance)
    test_seqs = splits["test"]
    hp = variant.hp
    tcfg = TrainConfig(delta=hp.delta, epochs=cfg.epochs, batch_size=cfg.batch_size,
                       learning_rate=cfg.learning_rate, seed=seed)
    outcomes, cm, test_vectors, inc_te = run_split(train_seqs, test_seqs, hp,
                                                   tcfg, variant.vocab.size)

    explanation = None
    if variant.group in ("base", "tuned"):
        ids = np.nonzero(inc_te)[0]
        explanation = {int(i): test_vectors[i].copy() for i in ids}

    if out_dir is not None:
        run_dir = out_dir / "runs" / variant.name / f"seed-{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / "classification_log.csv", "w", newline="") as fh:
            fh.write("# alertlab-classification v1\n")
            writer = csv.writer(fh)
            writer.writerow(["seq_id", "true_label", "outcome"])
            for i, (s, o) in enumerate(zip(test_seqs, outcomes)):
                writer.writerow([i, s.label, o])
        write_confusion_csv(cm, run_dir / "confusion.csv")

    micro, macro = micro_macro_f1(cm)
    relaxed = relaxed_prf(cm)
    return RunSummary(dataset=variant.name, run=run_index, seed=seed, confusion=cm.counts,
                      micro_f1=micro, macro_f1=macro, relaxed=relaxed,
                      elapsed=time.perf_counter() - started, explanation=explanation)


def _tuned_filters(cfg: ExperimentConfig, base: AlertDataset) -> list[dataset_lab.RuleFilter]:
    if cfg.tuned_filters is not None:
        return [dataset_lab.read_filter_spec(p) for p in cfg.tuned_filters]
    if cfg.tuned_topk is not None:
        ks = cfg.tuned_topk
    else:
        targets = cfg.ladder_targets or [8e-3, 8e-2, 8e-1]
        ks = dataset_lab.ladder_by_target_ir(base, targets)
    if len(ks) != 3:
        raise ConfigError(f"a tuned suite needs three filter levels, got {ks}")
    return [dataset_lab.top_rules_filter(base, k) for k in ks]


def build_variants(cfg: ExperimentConfig) -> tuple[list[Variant], list[dataset_lab.GeneratorReport]]:
    """Base dataset, tuned suite and control datasets, each with sequences."""
    hp = cfg.hp
    if cfg.synthetic is not None:
        base = generate_stream(cfg.synthetic)
    else:
        base = parse_alerts(cfg.input_path)
    base.name = "unfiltered"
    vocab_u = build_vocabulary(base)
    seqs_u = build_sequences(base, vocab_u, hp.n, hp.t)
    stats_u = dataset_stats(base, seqs_u)
    reports: list[dataset_lab.GeneratorReport] = []

    variants: list[Variant] = []
    if cfg.include_unfiltered:
        variants.append(Variant("unfiltered", "base", base, seqs_u, vocab_u, stats_u, hp,
                                balance_seed=cfg.data_seed))

    suite = dataset_lab.make_tuned_suite(base, _tuned_filters(cfg, base))
    tuned_stats: dict[str, DatasetStats] = {}
    for level, d in suite.items():
        vocab = build_vocabulary(d)
        seqs = build_sequences(d, vocab, hp.n, hp.t)
        stats = dataset_stats(d, seqs)
        tuned_stats[level] = stats
        name = f"tuned-{level}"
        d.name = name
        variants.append(Variant(name, "tuned", d, seqs, vocab, stats, hp,
                                balance_seed=cfg.data_seed))
        reports.append(dataset_lab.GeneratorReport(
            "tuned", cfg.data_seed, f"level={level}",
            f"size={stats.size} one_minus_label_ir={1.0 - stats.label_ir!r}"))

    incident_contexts = {s.context for s in seqs_u if s.is_incident}
    het_floor = len(incident_contexts)
    for level, tstats in tuned_stats.items():
        gseed = cfg.data_seed + 100 + ("high", "medium", "low").index(level)
        if "filtering" in cfg.controls:
            d, seqs = dataset_lab.control_filtering_method(base, seqs_u, tstats.size, gseed)
            name = f"fm-{level}"
            d.name = name
            stats = dataset_stats(d, seqs)
            variants.append(Variant(name, "control", d, seqs, vocab_u, stats, hp, cfg.data_seed))
            reports.append(dataset_lab.GeneratorReport(
                "filtering_method", gseed, f"size={tstats.size}", f"size={stats.size}"))
        if "size" in cfg.controls:
            d, seqs = dataset_lab.control_dataset_size(base, seqs_u, tstats.size,
                                                       stats_u.label_ir, gseed)
            name = f"size-{level}"
            d.name = name
            stats = dataset_stats(d, seqs)
            variants.append(Variant(name, "control", d, seqs, vocab_u, stats, hp, cfg.data_seed))
            reports.append(dataset_lab.GeneratorReport(
                "dataset_size", gseed, f"size<={tstats.size} label_ir>={stats_u.label_ir!r}",
                f"size={stats.size} label_ir={stats.label_ir!r}"))
        if "dimensionality" in cfg.controls:
            # rules firing on incidents can never be removed
            floor_dim = len({a.rule_id for a in base if a.label == "Incident"})
            target_dim = max(tstats.dimensionality, floor_dim)
            d = dataset_lab.control_dimensionality(base, target_dim, gseed)
            name = f"dim-{level}"
            d.name = name
            vocab = build_vocabulary(d)
            seqs = build_sequences(d, vocab, hp.n, hp.t)
            stats = dataset_stats(d, seqs)
            variants.append(Variant(name, "control", d, seqs, vocab, stats, hp, cfg.data_seed))
            reports.append(dataset_lab.GeneratorReport(
                "dimensionality", gseed, f"dimensionality={target_dim}",
                f"dimensionality={stats.dimensionality}"))
        if "heterogeneity" in cfg.controls:
            target_het = max(tstats.heterogeneity, het_floor)
            d, seqs = dataset_lab.control_heterogeneity(base, seqs_u, target_het,
                                                        stats_u.size, gseed)
            name = f"het-{level}"
            d.name = name
            stats = dataset_stats(d, seqs)
            variants.append(Variant(name, "control", d, seqs, vocab_u, stats, hp, cfg.data_seed))
            reports.append(dataset_lab.GeneratorReport(
                "heterogeneity", gseed, f"heterogeneity={target_het} size={stats_u.size}",
                f"heterogeneity={stats.heterogeneity} size={stats.size}"))
    return variants, reports


def _optimize_variant(variant: Variant, cfg: ExperimentConfig, grid: Grid,
                      out_dir: Optional[Path]) -> Hyperparameters:
    """Random search on the variant's hyperopt split (50/50, balanced)."""
    hyper = chronological_splits(variant.seqs, cfg.hyperopt_frac, cfg.train_frac)["hyperopt"]
    if len(hyper) < 4:
        raise ConfigError(f"hyperopt split of {variant.name} is too small to search on")
    positions = [s.index for s in hyper]
    alerts = [variant.dataset.alerts[i] for i in positions]
    sub = AlertDataset(alerts, name=f"{variant.name}-hyperopt")

    def evaluate(hp: Hyperparameters) -> float:
        seqs = build_sequences(sub, variant.vocab, hp.n, hp.t)
        half = len(seqs) // 2
        train_half, test_half = seqs[:half], seqs[half:]
        train_half = balance_incidents(train_half, test_half, seed=cfg.data_seed,
                                       tolerance=cfg.balance_tolerance)
        tcfg = TrainConfig(delta=hp.delta, epochs=cfg.epochs, batch_size=cfg.batch_size,
                           learning_rate=cfg.learning_rate, seed=cfg.hyperopt_seed)
        _, cm, _, _ = run_split(train_half, test_half, hp, tcfg, variant.vocab.size)
        return micro_macro_f1(cm)[1]

    best_hp, best_score, trials = random_search(
        grid, SearchBudget(max_trials=cfg.hyperopt_trials, seed=cfg.hyperopt_seed), evaluate)
    if out_dir is not None:
        write_trial_log(trials, out_dir / f"hyperopt-{variant.name}.csv")
    return best_hp


_POOL_VARIANTS: dict[str, Variant] = {}
_POOL_CFG: Optional[ExperimentConfig] = None
_POOL_OUT: Optional[Path] = None


def _pool_task(args: tuple[str, int, int]) -> RunSummary:
    name, seed, run_index = args
    return execute_run(_POOL_VARIANTS[name], _POOL_CFG, seed, run_index, _POOL_OUT)


@dataclass
class ExperimentResult:
    output_dir: Path
    summaries: list[RunSummary]
    variants: dict[str, DatasetStats]
    regression: Optional[RegressionResult]
    timings: dict[str, float]


def write_metrics_csv(summaries: list[RunSummary], stats: dict[str, DatasetStats], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-metrics v1\n")
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for s in summaries:
            st = stats[s.dataset]
            writer.writerow([
                s.dataset, s.run, s.seed, repr(s.micro_f1), repr(s.macro_f1),
                repr(s.relaxed[0]), repr(s.relaxed[1]), repr(s.relaxed[2]),
                repr(st.label_ir) if st.label_ir is not None else "",
                repr(st.event_ir) if st.event_ir is not None else "",
                st.size,
                st.heterogeneity if st.heterogeneity is not None else "",
                st.dimensionality,
            ])


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        for row in reader:
            parsed = dict(row)
            for key in ("micro_f1", "macro_f1", "relaxed_p", "relaxed_r", "relaxed_f1",
                        "label_ir", "event_ir"):
                parsed[key] = float(row[key]) if row[key] else None
            for key in ("run", "seed", "size"):
                parsed[key] = int(row[key])
            for key in ("heterogeneity", "dimensionality"):
                parsed[key] = int(row[key]) if row[key] else None
            rows.append(parsed)
    return rows


def design_matrix_from_rows(rows: list[dict], response: str = "relaxed_f1") -> DesignMatrix:
    """Regression design: one row per run, characteristics as predictors."""
    x = []
    y = []
    for row in rows:
        if any(row.get(k) is None for k in
               ("label_ir", "size", "heterogeneity", "dimensionality", "event_ir", response)):
            raise ValidationError("metrics row with missing characteristics cannot be regressed")
        x.append([row["label_ir"], row["size"], row["heterogeneity"],
                  row["dimensionality"], row["event_ir"]])
        y.append(row[response])
    return DesignMatrix(list(PREDICTORS), np.array(x, dtype=np.float64),
                        np.array(y, dtype=np.float64), response)


def write_aggregate_confusions(summaries: list[RunSummary], path) -> None:
    """Mean/std confusion matrices per dataset over its runs."""
    by_dataset: dict[str, list[np.ndarray]] = {}
    order: list[str] = []
    for s in summaries:
        if s.dataset not in by_dataset:
            order.append(s.dataset)
        by_dataset.setdefault(s.dataset, []).append(s.confusion)
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-confusion-aggregate v1\n")
        writer = csv.writer(fh)
        writer.writerow(["dataset", "true_label",
                         "mean_not_classified", "std_not_classified",
                         "mean_non_incident", "std_non_incident",
                         "mean_incident", "std_incident"])
        for name in order:
            stack = np.stack(by_dataset[name])
            mean = stack.mean(axis=0)
            std = stack.std(axis=0)
            for i, label in enumerate(("NonIncident", "Incident")):
                row = [name, label]
                for j in range(3):
                    row += [repr(float(mean[i, j])), repr(float(std[i, j]))]
                writer.writerow(row)


def write_ecdf_csv(values: np.ndarray, fractions: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-ecdf v1\n")
        writer = csv.writer(fh)
        writer.writerow(["value", "cumulative_fraction"])
        for v, f in zip(values, fractions):
            writer.writerow([repr(float(v)), repr(float(f))])


def write_scatter_csv(rows: list[dict], path) -> None:
    """Plot data: one point per run, relaxed and macro F1 by dataset."""
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-scatter v1\n")
        writer = csv.writer(fh)
        writer.writerow(["dataset", "seed", "relaxed_f1", "macro_f1"])
        for row in rows:
            writer.writerow([row["dataset"], row["seed"],
                             repr(row["relaxed_f1"]), repr(row["macro_f1"])])


def _write_explanations(variant: Variant, summaries: list[RunSummary], cfg: ExperimentConfig,
                        out_dir: Path) -> None:
    """Vector dumps per dataset plus similarity ECDFs when raters exist."""
    mine = [s for s in summaries if s.dataset == variant.name and s.explanation]
    if not mine:
        return
    exp_dir = out_dir / "explanations"
    exp_dir.mkdir(parents=True, exist_ok=True)
    vocab_size = variant.vocab.size
    first = mine[0]
    with open(exp_dir / f"{variant.name}-vectors.csv", "w", newline="") as fh:
        fh.write("# alertlab-attention-vectors v1 (first run)\n")
        writer = csv.writer(fh)
        writer.writerow(["seq_id"] + [f"v_{i}" for i in range(vocab_size)])
        for seq_id in sorted(first.explanation):
            writer.writerow([seq_id] + [repr(float(v)) for v in first.explanation[seq_id]])

    rater_path = cfg.rater_files.get(variant.name)
    if not rater_path:
        return
    raters = read_rater_file(rater_path)
    test_seqs = chronological_splits(variant.seqs, cfg.hyperopt_frac, cfg.train_frac)["test"]
    contexts = {i: test_seqs[i].context for i in range(len(test_seqs))}
    sims: list[float] = []
    for summary in mine:
        comparison = compare_explanations(summary.explanation, raters, contexts,
                                          vocab_size, variant.vocab.pad_index)
        sims.extend(sim for _, sim in comparison.similarities)
    if sims:
        values, fractions = empirical_cdf(sims)
        write_ecdf_csv(values, fractions, exp_dir / f"{variant.name}-similarity-ecdf.csv")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute the full experiment and write all report files."""
    cfg.validate()
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    variants, reports = build_variants(cfg)
    timings["build_datasets"] = time.perf_counter() - t0
    dataset_lab.write_provenance_csv(reports, out_dir / "provenance.csv")

    if cfg.hyperopt_trials > 0:
        grid = default_grid()
        for variant in variants:
            variant.hp = _optimize_variant(variant, cfg, grid, out_dir)

    tasks = [(v.name, seed, run_index)
             for v in variants for run_index, seed in enumerate(cfg.run_seeds)]
    global _POOL_VARIANTS, _POOL_CFG, _POOL_OUT
    _POOL_VARIANTS = {v.name: v for v in variants}
    _POOL_CFG = cfg
    _POOL_OUT = out_dir
    workers = cfg.workers if cfg.workers > 0 else min(4, os.cpu_count() or 1)
    t0 = time.perf_counter()
    if workers <= 1 or len(tasks) == 1:
        summaries = [_pool_task(task) for task in tasks]
    else:
        import multiprocessing

        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            summaries = pool.map(_pool_task, tasks, chunksize=1)
    timings["runs"] = time.perf_counter() - t0
    for summary in summaries:
        timings[f"run:{summary.dataset}:seed-{summary.seed}"] = summary.elapsed

    stats = {v.name: v.stats for v in variants}
    write_metrics_csv(summaries, stats, out_dir / "metrics.csv")
    write_aggregate_confusions(summaries, out_dir / "confusion_aggregate.csv")

    regression = None
    rows = read_metrics_csv(out_dir / "metrics.csv")
    write_scatter_csv(rows, out_dir / "scatter.csv")
    if len(rows) >= len(PREDICTORS) + 2:
        try:
            regression = attribute_performance(design_matrix_from_rows(rows))
            write_regression_csv(regression, out_dir / "regression.csv")
        except ValidationError:
            regression = None  # single-variant experiments have constant predictors

    for variant in variants:
        _write_explanations(variant, summaries, cfg, out_dir)

    manifest = {
        "config": config_to_dict(cfg),
        "variants": {v.name: {"size": v.stats.size,
                              "label_ir": v.stats.label_ir,
                              "event_ir": v.stats.event_ir,
                              "heterogeneity": v.stats.heterogeneity,
                              "dimensionality": v.stats.dimensionality,
                              "hyperparameters": v.hp.as_dict()}
                     for v in variants},
        "seeds": cfg.run_seeds,
        "timings": timings,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentResult(output_dir=out_dir, summaries=summaries, variants=stats,
                            regression=regression, timings=timings)
