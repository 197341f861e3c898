"""Command-line interface.

Subcommands map 1:1 onto the library operations with file inputs and
outputs.  Exit codes: 0 ok, 1 usage / invalid configuration, 2 data
errors (missing or malformed inputs), 3 compute errors (diverged
training, singular fits).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, dataset_lab, hyperopt as hyperopt_mod, ingest, metrics as metrics_mod
from .context_builder import TrainConfig
from .dataset_lab import balance_incidents, chronological_splits
from .errors import (AlertLabError, ConfigError, ParseError, SingularFitError,
                     TargetUnreachableError, TrainingDivergedError, UnseenEventError,
                     ValidationError)
from .experiment import (ExperimentConfig, classify_sequences, config_from_dict, fit_interpreter,
                         load_bundle, load_config, read_metrics_csv, resolve_output_dir,
                         run_experiment, run_split, save_bundle, write_ecdf_csv,
                         write_scatter_csv, design_matrix_from_rows)
from .interpreter import Hyperparameters
from .metrics import (ConfusionMatrix, compare_explanations, empirical_cdf, micro_macro_f1,
                      read_confusion_csv, read_rater_file, relaxed_prf)
from .sequencer import build_sequences, build_vocabulary, read_sequence_dump, write_sequence_dump

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_hp_flags(p: argparse.ArgumentParser):
    p.add_argument("--params", help="best-params file to load hyperparameters from")
    p.add_argument("--n", type=int, default=10, help="context length")
    p.add_argument("--t", type=int, default=hyperopt_mod.DAY, help="context timeout (seconds)")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.0, help="label smoothing weight")
    p.add_argument("--tau", type=float, default=0.05, help="confidence threshold")
    p.add_argument("--epsilon", type=float, default=0.8, help="DBSCAN max distance")
    p.add_argument("--min-cluster-size", type=int, default=5)


def _hp_from_args(args) -> Hyperparameters:
    if getattr(args, "params", None):
        return hyperopt_mod.read_best_params(args.params)
    return Hyperparameters(n=args.n, t=args.t, hidden_nodes=args.hidden, delta=args.delta,
                           tau_confidence=args.tau, epsilon=args.epsilon,
                           min_cluster_size=args.min_cluster_size)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="alertlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic alert stream")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--n-rules", type=int, default=100)
    p.add_argument("--n-hosts", type=int, default=50)
    p.add_argument("--n-alerts", type=int, default=100_000)
    p.add_argument("--rule-skew", type=float, default=1.5)
    p.add_argument("--n-scenarios", type=int, default=10)
    p.add_argument("--alerts-per-scenario", type=int, default=62)
    p.add_argument("--duration", type=int, default=30 * 86400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flood-mean-len", type=int, default=1)
    p.add_argument("--scenario-rules", choices=["disjoint", "overlapping"], default="disjoint")

    p = sub.add_parser("tune", help="build the tuned {high,medium,low} suite")
    p.add_argument("--alerts", required=True)
    p.add_argument("--filter", action="append", default=None,
                   help="filter spec file (repeat 3x, increasing aggressiveness)")
    p.add_argument("--topk", help="comma-separated top-k rule counts, e.g. 1,30,90")
    p.add_argument("--targets", help="comma-separated (1-IR) targets, e.g. 8e-3,8e-2,8e-1")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("control", help="generate one control dataset")
    p.add_argument("--alerts", required=True)
    p.add_argument("--kind", required=True, choices=list(dataset_lab.__dict__) and
                   ["filtering", "size", "dimensionality", "heterogeneity"])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--t", type=int, default=hyperopt_mod.DAY)
    p.add_argument("--target-size", type=int)
    p.add_argument("--target-dimensionality", type=int)
    p.add_argument("--target-heterogeneity", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="chronological hyperopt/train/test sequence splits")
    p.add_argument("--alerts", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--t", type=int, default=hyperopt_mod.DAY)
    p.add_argument("--hyperopt-frac", type=float, default=0.01)
    p.add_argument("--train-frac", type=float, default=0.20)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("hyperopt", help="random search over the hyperparameter grid")
    p.add_argument("--alerts", required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--hyperopt-frac", type=float, default=0.01)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="train the context model and fit clusters")
    p.add_argument("--alerts", required=True, help="training alerts")
    _add_hp_flags(p)
    _add_train_flags(p)
    p.add_argument("--model-dir", required=True)

    p = sub.add_parser("classify", help="classify alerts with a trained model bundle")
    p.add_argument("--alerts", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("metrics", help="micro/macro and relaxed PRF from a confusion matrix or log")
    p.add_argument("--confusion", help="confusion matrix CSV")
    p.add_argument("--log", help="classification log CSV")
    p.add_argument("--out", help="write a metrics CSV row here")

    p = sub.add_parser("regress", help="robust regression of a response on predictors")
    p.add_argument("--metrics", help="experiment metrics.csv")
    p.add_argument("--design", help="generic design CSV (header + numeric columns)")
    p.add_argument("--response", default="relaxed_f1")
    p.add_argument("--out", required=True)

    p = sub.add_parser("explain", help="compare model explanations against expert ratings")
    p.add_argument("--vectors", required=True, help="attention-vector dump CSV")
    p.add_argument("--sequences", required=True, help="sequence dump CSV for the same ids")
    p.add_argument("--raters", required=True, help="expert rater CSV")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="render plot data from an experiment's metrics")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override the config output directory")
    return parser


def _cmd_generate(args) -> int:
    cfg = ingest.SyntheticConfig(
        n_rules=args.n_rules, n_hosts=args.n_hosts, n_alerts=args.n_alerts,
        rule_skew=args.rule_skew, n_scenarios=args.n_scenarios,
        alerts_per_scenario=args.alerts_per_scenario, duration=args.duration,
        seed=args.seed, flood_mean_len=args.flood_mean_len,
        scenario_rules=args.scenario_rules)
    dataset = ingest.generate_stream(cfg)
    ingest.write_alerts(dataset, args.out, args.format)
    print(f"wrote {len(dataset)} alerts ({dataset.n_incidents} incidents) to {args.out}")
    return EXIT_OK


def _cmd_tune(args) -> int:
    dataset = ingest.parse_alerts(args.alerts)
    if args.filter:
        filters = [dataset_lab.read_filter_spec(p) for p in args.filter]
    elif args.topk:
        filters = [dataset_lab.top_rules_filter(dataset, int(k))
                   for k in args.topk.split(",")]
    else:
        targets = [float(v) for v in (args.targets or "8e-3,8e-2,8e-1").split(",")]
        ks = dataset_lab.ladder_by_target_ir(dataset, targets)
        filters = [dataset_lab.top_rules_filter(dataset, k) for k in ks]
    suite = dataset_lab.make_tuned_suite(dataset, filters)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for level, d in suite.items():
        ingest.write_alerts(d, out / f"{level}.csv")
        stats = ingest.dataset_stats(d)
        reports.append(dataset_lab.GeneratorReport(
            "tuned", 0, f"level={level}",
            f"size={stats.size} one_minus_label_ir={1.0 - stats.label_ir!r}"))
        print(f"{level}: {stats.size} alerts, 1-IR={1.0 - stats.label_ir:.3g}")
    dataset_lab.write_provenance_csv(reports, out / "provenance.csv")
    return EXIT_OK


def _cmd_control(args) -> int:
    dataset = ingest.parse_alerts(args.alerts)
    vocab = build_vocabulary(dataset)
    seqs = build_sequences(dataset, vocab, args.n, args.t)
    if args.kind == "filtering":
        if args.target_size is None:
            raise ConfigError("--target-size is required for the filtering control")
        d, _ = dataset_lab.control_filtering_method(dataset, seqs, args.target_size, args.seed)
    elif args.kind == "size":
        if args.target_size is None:
            raise ConfigError("--target-size is required for the size control")
        stats = ingest.dataset_stats(dataset)
        d, _ = dataset_lab.control_dataset_size(dataset, seqs, args.target_size,
                                                stats.label_ir, args.seed)
    elif args.kind == "dimensionality":
        if args.target_dimensionality is None:
            raise ConfigError("--target-dimensionality is required")
        d = dataset_lab.control_dimensionality(dataset, args.target_dimensionality, args.seed)
    else:
        if args.target_heterogeneity is None:
            raise ConfigError("--target-heterogeneity is required")
        d, _ = dataset_lab.control_heterogeneity(dataset, seqs, args.target_heterogeneity,
                                                 len(dataset), args.seed)
    ingest.write_alerts(d, args.out)
    print(f"wrote {len(d)} alerts to {args.out}")
    return EXIT_OK


def _cmd_split(args) -> int:
    dataset = ingest.parse_alerts(args.alerts)
    vocab = build_vocabulary(dataset)
    seqs = build_sequences(dataset, vocab, args.n, args.t)
    splits = chronological_splits(seqs, args.hyperopt_frac, args.train_frac)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in splits.items():
        write_sequence_dump(part, vocab, out / f"{name}.csv")
        print(f"{name}: {len(part)} sequences")
    return EXIT_OK


def _cmd_hyperopt(args) -> int:
    dataset = ingest.parse_alerts(args.alerts)
    cfg = ExperimentConfig(input_path=args.alerts, epochs=args.epochs,
                           batch_size=args.batch_size, learning_rate=args.learning_rate,
                           hyperopt_trials=args.trials, hyperopt_seed=args.seed,
                           hyperopt_frac=args.hyperopt_frac)
    from .experiment import Variant, _optimize_variant
    vocab = build_vocabulary(dataset)
    seqs = build_sequences(dataset, vocab, cfg.hp.n, cfg.hp.t)
    variant = Variant("hyperopt-input", "base", dataset, seqs, vocab,
                      ingest.dataset_stats(dataset, seqs), cfg.hp, cfg.data_seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best = _optimize_variant(variant, cfg, hyperopt_mod.default_grid(), out)
    hyperopt_mod.write_best_params(best, None, out / "best-params.txt")
    print(f"best hyperparameters written to {out / 'best-params.txt'}")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = ingest.parse_alerts(args.alerts)
    hp = _hp_from_args(args)
    vocab = build_vocabulary(dataset)
    seqs = build_sequences(dataset, vocab, hp.n, hp.t)
    tcfg = TrainConfig(delta=hp.delta, epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.learning_rate, seed=args.seed)
    from .context_builder import train as train_model
    model = train_model(seqs, tcfg, hp, vocab_size=vocab.size)
    cluster_model, seen = fit_interpreter(model, seqs, hp)
    save_bundle(args.model_dir, model, vocab, cluster_model, seen, hp)
    print(f"model bundle written to {args.model_dir} "
          f"({cluster_model.n_clusters} clusters)")
    return EXIT_OK


def _cmd_classify(args) -> int:
    model, vocab, cluster_model, seen, hp = load_bundle(args.model_dir)
    dataset = ingest.parse_alerts(args.alerts)
    seqs = build_sequences(dataset, vocab, hp.n, hp.t)
    outcomes, cm, _, _ = classify_sequences(model, cluster_model, seen, seqs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import csv as _csv
    with open(out / "classification_log.csv", "w", newline="") as fh:
        fh.write("# alertlab-classification v1\n")
        writer = _csv.writer(fh)
        writer.writerow(["seq_id", "true_label", "outcome"])
        for i, (s, o) in enumerate(zip(seqs, outcomes)):
            writer.writerow([i, s.label, o])
    metrics_mod.write_confusion_csv(cm, out / "confusion.csv")
    micro, macro = micro_macro_f1(cm)
    print(f"classified {len(seqs)} sequences; micro_f1={micro:.4f} macro_f1={macro:.4f}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    if bool(args.confusion) == bool(args.log):
        raise ConfigError("give exactly one of --confusion or --log")
    if args.confusion:
        cm = read_confusion_csv(args.confusion)
    else:
        import csv as _csv
        pairs = []
        with open(args.log, newline="") as fh:
            reader = _csv.DictReader(row for row in fh if not row.startswith("#"))
            for row in reader:
                pairs.append((row["true_label"], row["outcome"]))
        cm = ConfusionMatrix.from_pairs(pairs)
    micro, macro = micro_macro_f1(cm)
    p, r, f1 = relaxed_prf(cm)
    print(f"micro_f1={micro:.6f} macro_f1={macro:.6f}")
    print(f"relaxed_p={p:.6f} relaxed_r={r:.6f} relaxed_f1={f1:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write("# alertlab-metrics-row v1\n")
            writer = __import__("csv").writer(fh)
            writer.writerow(["micro_f1", "macro_f1", "relaxed_p", "relaxed_r", "relaxed_f1"])
            writer.writerow([repr(micro), repr(macro), repr(p), repr(r), repr(f1)])
    return EXIT_OK


def _cmd_regress(args) -> int:
    if bool(args.metrics) == bool(args.design):
        raise ConfigError("give exactly one of --metrics or --design")
    if args.metrics:
        rows = read_metrics_csv(args.metrics)
        design = design_matrix_from_rows(rows, response=args.response)
    else:
        import csv as _csv
        with open(args.design, newline="") as fh:
            reader = _csv.DictReader(row for row in fh if not row.startswith("#"))
            raw = list(reader)
        if not raw:
            raise ParseError("empty design file")
        names = [c for c in raw[0].keys() if c != args.response]
        x = np.array([[float(row[c]) for c in names] for row in raw])
        y = np.array([float(row[args.response]) for row in raw])
        design = analysis.DesignMatrix(names, x, y, args.response)
    result = analysis.attribute_performance(design)
    analysis.write_regression_csv(result, args.out)
    for i, term in enumerate(result.terms):
        print(f"{term}: coef={result.coef[i]:+.4f} p={result.p_values[i]:.4g}")
    for name, vif in result.dropped:
        print(f"dropped {name} (vif={vif:.3g})")
    print(f"ks_stat={result.ks_stat:.4f} ks_p={result.ks_p:.4f} n_obs={result.n_obs}")
    return EXIT_OK


def _cmd_explain(args) -> int:
    import csv as _csv
    with open(args.vectors, newline="") as fh:
        reader = _csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader)
        vocab_size = len(header) - 1
        vectors = {int(row[0]): np.array([float(v) for v in row[1:]]) for row in reader}
    seqs = read_sequence_dump(args.sequences, pad_index=vocab_size)
    contexts = {i: s.context for i, s in enumerate(seqs)}
    raters = read_rater_file(args.raters)
    comparison = compare_explanations(vectors, raters, contexts, vocab_size, vocab_size)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "similarities.csv", "w", newline="") as fh:
        fh.write("# alertlab-similarities v1\n")
        writer = _csv.writer(fh)
        writer.writerow(["seq_id", "cosine"])
        for seq_id, sim in comparison.similarities:
            writer.writerow([seq_id, repr(sim)])
    if comparison.similarities:
        values, fractions = empirical_cdf([s for _, s in comparison.similarities])
        write_ecdf_csv(values, fractions, out / "similarity-ecdf.csv")
    print(f"compared {len(comparison.similarities)} explanations; "
          f"{len(comparison.skipped)} skipped, "
          f"{len(comparison.missing_model) + len(comparison.missing_expert)} unmatched")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = read_metrics_csv(args.metrics)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_scatter_csv(rows, out / "scatter.csv")
    print(f"scatter data for {len(rows)} runs written to {out / 'scatter.csv'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir:
        cfg.output_dir = args.out_dir
    result = run_experiment(cfg)
    print(f"experiment complete: {len(result.summaries)} runs, "
          f"reports in {result.output_dir}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate, "tune": _cmd_tune, "control": _cmd_control,
    "split": _cmd_split, "hyperopt": _cmd_hyperopt, "train": _cmd_train,
    "classify": _cmd_classify, "metrics": _cmd_metrics, "regress": _cmd_regress,
    "explain": _cmd_explain, "report": _cmd_report, "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, TargetUnreachableError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, SingularFitError, UnseenEventError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
