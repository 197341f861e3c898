"""Tuned and control dataset generators plus the split/balancing protocol.

Ruleset tuning is simulated by dropping every alert of selected noisy
rules (globally or per host), which lowers the label imbalance the same
way a SOC's rule filter would.  Because tuning also changes size,
dimensionality and heterogeneity, four control generators produce
datasets that vary those characteristics one at a time while leaving the
others near the unfiltered values, so a later regression can attribute
performance differences to individual characteristics.

Tuning operates on alerts (contexts are rebuilt afterwards); the control
generators operate on already-built sequences and return the filtered
sequences alongside the matching alert subset, since their targets are
defined over sequences.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from math import floor, log10
from typing import Optional, Sequence as Seq

import numpy as np

from .errors import ConfigError, ParseError, TargetUnreachableError, ValidationError
from .ingest import INCIDENT, AlertDataset
from .metrics import compute_ir
from .sequencer import Sequence


@dataclass
class RuleFilter:
    """Rules disabled globally or for specific (rule, host) pairs."""

    global_rules: set[str] = field(default_factory=set)
    per_host: set[tuple[str, str]] = field(default_factory=set)

    def __post_init__(self):
        # A global entry subsumes any per-host entry for the same rule.
        self.global_rules = set(self.global_rules)
        self.per_host = {(r, h) for r, h in self.per_host if r not in self.global_rules}

    def matches(self, rule_id: str, host_id: str) -> bool:
        return rule_id in self.global_rules or (rule_id, host_id) in self.per_host

    @property
    def is_empty(self) -> bool:
        return not self.global_rules and not self.per_host


def read_filter_spec(path) -> RuleFilter:
    """Filter spec file: `global: rule_id` / `perhost: rule_id,host_id` lines."""
    global_rules, per_host = set(), set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("global:"):
                global_rules.add(line[len("global:"):].strip())
            elif line.startswith("perhost:"):
                parts = [p.strip() for p in line[len("perhost:"):].split(",")]
                if len(parts) != 2 or not all(parts):
                    raise ParseError(f"expected 'perhost: rule,host', got {line!r}", line=lineno)
                per_host.add((parts[0], parts[1]))
            else:
                raise ParseError(f"unknown directive {line!r}", line=lineno)
    return RuleFilter(global_rules, per_host)


def write_filter_spec(f: RuleFilter, path) -> None:
    with open(path, "w") as fh:
        fh.write("# alertlab-filter v1\n")
        for rule in sorted(f.global_rules):
            fh.write(f"global: {rule}\n")
        for rule, host in sorted(f.per_host):
            fh.write(f"perhost: {rule},{host}\n")


def apply_rule_filter(dataset: AlertDataset, f: RuleFilter, name: Optional[str] = None) -> AlertDataset:
    """Drop every alert matched by the filter; order is preserved."""
    kept = [a for a in dataset if not f.matches(a.rule_id, a.host_id)]
    return AlertDataset(kept, name=name or f"{dataset.name}-filtered")


def top_rules_filter(dataset: AlertDataset, k: int) -> RuleFilter:
    """Global filter on the k most frequent rules that never fire on incidents."""
    incident_rules = {a.rule_id for a in dataset if a.label == INCIDENT}
    counts = Counter(a.rule_id for a in dataset if a.rule_id not in incident_rules)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return RuleFilter(global_rules={rule for rule, _ in ranked[:k]})


def ladder_by_target_ir(dataset: AlertDataset, one_minus_ir_targets: Seq[float]) -> list[int]:
    """Smallest top-k rule removals reaching each (1 - IR) target.

    Used to construct tuned-suite filters whose label IRs sit on a chosen
    order-of-magnitude ladder.  Targets must be increasing.
    """
    incident_rules = {a.rule_id for a in dataset if a.label == INCIDENT}
    n_inc = dataset.n_incidents
    if n_inc == 0:
        raise ConfigError("cannot build an IR ladder without incidents")
    counts = Counter(a.rule_id for a in dataset if a.rule_id not in incident_rules)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    n_non = len(dataset) - n_inc
    ks = []
    removed = 0
    k = 0
    for target in one_minus_ir_targets:
        while k <= len(ranked):
            remaining = n_non - removed
            if remaining >= 1 and 1.0 - compute_ir([remaining, n_inc]) >= target:
                break
            if k == len(ranked):
                raise ConfigError(f"no top-k filter reaches 1-IR >= {target}")
            removed += ranked[k][1]
            k += 1
        ks.append(k)
    return ks


def make_tuned_suite(dataset: AlertDataset, levels: Seq[RuleFilter]) -> dict[str, AlertDataset]:
    """Apply three increasingly aggressive filters -> {high, medium, low}.

    The label IRs must strictly decrease and land on distinct orders of
    magnitude in (1 - IR); otherwise a ConfigError lists the achieved
    values.
    """
    if len(levels) != 3:
        raise ConfigError("a tuned suite needs exactly three filter levels")
    names = ("high", "medium", "low")
    out = {}
    irs = []
    for name, f in zip(names, levels):
        filtered = apply_rule_filter(dataset, f, name=f"{dataset.name}-{name}")
        counts = filtered.label_counts()
        if len(counts) < 2:
            raise ConfigError(f"level {name} removed an entire class; cannot compute IR")
        ir = compute_ir(list(counts.values()))
        out[name] = filtered
        irs.append(ir)
    if not (irs[0] > irs[1] > irs[2]):
        raise ConfigError(f"label IRs must strictly decrease, got {irs}")
    magnitudes = [floor(log10(1.0 - ir)) for ir in irs]
    if len(set(magnitudes)) != 3:
        raise ConfigError(
            f"(1-IR) values must span distinct orders of magnitude, got "
            f"{[1.0 - ir for ir in irs]}")
    return out


@dataclass
class GeneratorReport:
    """Provenance of one generated dataset: what was asked vs achieved."""

    generator: str
    seed: int
    target: str
    achieved: str


def write_provenance_csv(reports: Seq[GeneratorReport], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-provenance v1\n")
        writer = csv.writer(fh)
        writer.writerow(["generator", "seed", "target", "achieved"])
        for r in reports:
            writer.writerow([r.generator, r.seed, r.target, r.achieved])


def _subset(dataset: AlertDataset, seqs: list[Sequence], keep_positions: Seq[int],
            name: str) -> tuple[AlertDataset, list[Sequence]]:
    """Restrict to the given sequence positions, reindexing sequences."""
    keep = sorted(keep_positions)
    alerts = [dataset.alerts[seqs[p].index] for p in keep]
    new_seqs = [replace(seqs[p], index=i) for i, p in enumerate(keep)]
    return AlertDataset(alerts, name=name), new_seqs


def _removal_order(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sequential weighted sampling without replacement as a removal order.

    Exponential-key trick: sorting Exp(1)/w ascending draws items one by
    one with probability proportional to w among the remaining items,
    which matches per-draw weight renormalization.
    """
    keys = rng.exponential(1.0, size=weights.size) / weights
    return np.argsort(keys, kind="stable")


def control_filtering_method(dataset: AlertDataset, seqs: list[Sequence], target_size: int,
                             seed: int, rng: Optional[np.random.Generator] = None,
                             ) -> tuple[AlertDataset, list[Sequence]]:
    """Uniformly drop non-incident sequences until exactly target_size remain.

    Incident sequences are never removed.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    inc = [i for i, s in enumerate(seqs) if s.is_incident]
    non = [i for i, s in enumerate(seqs) if not s.is_incident]
    keep_non = target_size - len(inc)
    if keep_non < 0:
        raise TargetUnreachableError(
            f"target_size {target_size} is below the incident count {len(inc)}")
    if keep_non > len(non):
        raise TargetUnreachableError(
            f"target_size {target_size} exceeds the dataset size {len(seqs)}")
    chosen = rng.choice(len(non), size=keep_non, replace=False) if keep_non else np.empty(0, int)
    keep = inc + [non[i] for i in chosen]
    return _subset(dataset, seqs, keep, f"{dataset.name}-fm")


def control_dataset_size(dataset: AlertDataset, seqs: list[Sequence], target_size: int,
                         unfiltered_label_ir: float, seed: int,
                         ) -> tuple[AlertDataset, list[Sequence]]:
    """Shrink like the filtering method, then re-raise the label IR.

    After the uniform non-incident removal, incident sequences are
    removed uniformly at random until the label IR is at least the
    unfiltered value (resolution: one removal).
    """
    rng = np.random.default_rng(seed)
    d1, s1 = control_filtering_method(dataset, seqs, target_size, seed, rng=rng)
    inc = [i for i, s in enumerate(s1) if s.is_incident]
    n_non = len(s1) - len(inc)
    removals = 0
    while True:
        n_inc = len(inc) - removals
        if n_inc < 1 or n_non < 1:
            raise TargetUnreachableError(
                "cannot reach the unfiltered label IR before exhausting incidents")
        if compute_ir([n_non, n_inc]) >= unfiltered_label_ir:
            break
        removals += 1
    if removals == 0:
        return d1, s1
    drop = set(np.asarray(rng.choice(len(inc), size=removals, replace=False)).tolist())
    keep = [i for i in range(len(s1)) if not s1[i].is_incident] \
        + [p for j, p in enumerate(inc) if j not in drop]
    return _subset(d1, s1, keep, f"{dataset.name}-size")


def control_dimensionality(dataset: AlertDataset, target_dimensionality: int,
                           seed: int) -> AlertDataset:
    """Remove rare-rule alerts until the distinct-rule count hits the target.

    Individual non-incident alerts are sampled without replacement with
    probability proportional to (total alerts / rule count)^2, so rare
    rules disappear first.  Alerts of incident sequences are never
    removed.  Sequences must be rebuilt from the result.
    """
    rng = np.random.default_rng(seed)
    rule_counts = Counter(a.rule_id for a in dataset)
    current = len(rule_counts)
    if target_dimensionality > current:
        raise TargetUnreachableError(
            f"target dimensionality {target_dimensionality} exceeds current {current}")
    if target_dimensionality == current:
        return AlertDataset(list(dataset.alerts), name=f"{dataset.name}-dim")
    # Rules that fire on any incident can never be emptied.
    incident_rules = {a.rule_id for a in dataset if a.label == INCIDENT}
    floor_dim = len(incident_rules)
    if target_dimensionality < floor_dim:
        raise TargetUnreachableError(
            f"target dimensionality {target_dimensionality} is below the "
            f"{floor_dim} rules used by incident alerts")
    removable = [i for i, a in enumerate(dataset.alerts) if a.label != INCIDENT]
    total = len(dataset)
    weights = np.array([(total / rule_counts[dataset.alerts[i].rule_id]) ** 2
                        for i in removable], dtype=np.float64)
    order = _removal_order(weights, rng)
    remaining = dict(rule_counts)
    distinct = current
    removed = np.zeros(len(dataset), dtype=bool)
    for j in order:
        pos = removable[j]
        rule = dataset.alerts[pos].rule_id
        removed[pos] = True
        remaining[rule] -= 1
        if remaining[rule] == 0:
            distinct -= 1
            if distinct == target_dimensionality:
                break
    else:
        raise TargetUnreachableError(
            f"removed every non-incident alert but the distinct-rule count "
            f"is still {distinct} > {target_dimensionality}")
    kept = [a for i, a in enumerate(dataset.alerts) if not removed[i]]
    return AlertDataset(kept, name=f"{dataset.name}-dim")


def control_heterogeneity(dataset: AlertDataset, seqs: list[Sequence],
                          target_heterogeneity: int, target_size: int,
                          seed: int) -> tuple[AlertDataset, list[Sequence]]:
    """Remove common-context sequences until the unique-context count hits
    the target, then upsample survivors back to target_size.

    Removal probability is proportional to (context multiplicity)^2, so
    heavily repeated contexts vanish first; incident sequences are never
    removed.  Upsampling duplicates surviving sequences uniformly at
    random; duplicates sort next to their originals.
    """
    rng = np.random.default_rng(seed)
    multiplicity = Counter(s.context for s in seqs)
    unique = len(multiplicity)
    if target_heterogeneity > unique:
        raise TargetUnreachableError(
            f"target heterogeneity {target_heterogeneity} exceeds current {unique}")
    removable = [i for i, s in enumerate(seqs) if not s.is_incident]
    weights = np.array([float(multiplicity[seqs[i].context]) ** 2 for i in removable])
    order = _removal_order(weights, rng)
    remaining = dict(multiplicity)
    removed = np.zeros(len(seqs), dtype=bool)
    current = unique
    if current > target_heterogeneity:
        for j in order:
            pos = removable[j]
            ctx = seqs[pos].context
            removed[pos] = True
            remaining[ctx] -= 1
            if remaining[ctx] == 0:
                current -= 1
                if current == target_heterogeneity:
                    break
        else:
            raise TargetUnreachableError(
                f"removed every non-incident sequence but {current} unique "
                f"contexts remain > {target_heterogeneity}")
    survivors = [i for i in range(len(seqs)) if not removed[i]]
    extra = target_size - len(survivors)
    if extra < 0:
        raise TargetUnreachableError(
            f"{len(survivors)} survivors already exceed target_size {target_size}")
    dup_positions = [survivors[i] for i in rng.integers(0, len(survivors), size=extra)] if extra else []
    # copy_rank keeps duplicates right after their originals in time order
    combined = sorted([(p, 0) for p in survivors] + [(p, 1 + r) for r, p in enumerate(dup_positions)],
                      key=lambda pr: (pr[0], pr[1]))
    alerts = [dataset.alerts[seqs[p].index] for p, _ in combined]
    new_seqs = [replace(seqs[p], index=i) for i, (p, _) in enumerate(combined)]
    return AlertDataset(alerts, name=f"{dataset.name}-het"), new_seqs


def chronological_splits(seqs: list[Sequence], hyperopt_frac: float = 0.01,
                         train_frac: float = 0.20, seed: Optional[int] = None,
                         ) -> dict[str, list[Sequence]]:
    """First hyperopt_frac of sequences by time, rest split train/test.

    Ordering is preserved within each split; ``seed`` is accepted for
    interface symmetry but the split is purely chronological.
    """
    n = len(seqs)
    n_hyper = int(n * hyperopt_frac)
    rest = n - n_hyper
    n_train = int(rest * train_frac)
    n_test = rest - n_train
    if n_train < 1 or n_test < 1:
        raise ValidationError(f"{n} sequences are too few for non-empty train/test splits")
    return {"hyperopt": seqs[:n_hyper],
            "train": seqs[n_hyper:n_hyper + n_train],
            "test": seqs[n_hyper + n_train:]}


def balance_incidents(train: list[Sequence], test: list[Sequence], seed: int,
                      tolerance: float = 0.05) -> list[Sequence]:
    """Copy random incident sequences from test into train until the train
    incident fraction reaches the test fraction within `tolerance` relative.

    The test set is never modified; copies are appended to the train
    list.  Already-balanced inputs are returned as-is (new list).
    """
    test_incidents = [s for s in test if s.is_incident]
    if not test_incidents:
        raise ValidationError("test split has no incident sequences to balance from")
    rng = np.random.default_rng(seed)
    target = (len(test_incidents) / len(test)) * (1.0 - tolerance)
    out = list(train)
    n_inc = sum(1 for s in out if s.is_incident)
    while n_inc / len(out) < target:
        out.append(test_incidents[int(rng.integers(0, len(test_incidents)))])
        n_inc += 1
    return out
