"""Alert data model, file formats and the synthetic stream generator.

An alert is one row of NIDS output: when a detection rule fired, against
which (victim) host, and whether the SOC ultimately tied it to a real
incident.  Datasets are time-ordered lists of alerts.  The generator
produces a desk-scale stand-in for a production alert feed: a large
skewed background of false positives plus a handful of injected attack
scenarios, each a contiguous burst of alerts on a single host.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ParseError, ValidationError
from .metrics import compute_ir

NON_INCIDENT = "NonIncident"
INCIDENT = "Incident"
LABELS = (NON_INCIDENT, INCIDENT)

ALERT_COLUMNS = ("timestamp", "rule_id", "host_id", "label", "scenario_id")


@dataclass(frozen=True)
class AlertRecord:
    """One NIDS alert: time, rule, victim host and ground-truth label."""

    timestamp: int
    rule_id: str
    host_id: str
    label: str
    scenario_id: Optional[str] = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValidationError(f"timestamp must be non-negative, got {self.timestamp}")
        if self.label not in LABELS:
            raise ValidationError(f"unknown label {self.label!r}, expected one of {LABELS}")


@dataclass
class AlertDataset:
    """A time-ordered list of alerts. Construction sorts stably by timestamp."""

    alerts: list[AlertRecord]
    name: str = "dataset"

    def __post_init__(self):
        self.alerts = sorted(self.alerts, key=lambda a: a.timestamp)

    def __len__(self):
        return len(self.alerts)

    def __iter__(self):
        return iter(self.alerts)

    def label_counts(self) -> Counter:
        return Counter(a.label for a in self.alerts)

    def rule_counts(self) -> Counter:
        return Counter(a.rule_id for a in self.alerts)

    @property
    def n_incidents(self) -> int:
        return sum(1 for a in self.alerts if a.label == INCIDENT)


@dataclass
class SyntheticConfig:
    """Parameters of the synthetic alert stream.

    Background alerts draw their rule from a Zipf distribution with
    exponent ``rule_skew`` (few rules dominate the volume, as in real
    rulesets).  With ``flood_mean_len`` = 1 every background alert gets an
    independent uniform arrival time; larger values group background
    alerts into rule "floods" of geometrically distributed length, which
    is closer to how noisy rules fire in practice.

    Attack scenarios are bursts of ``alerts_per_scenario`` consecutive
    alerts on one host.  Their rules come from a dedicated pool that is
    disjoint from the background rules unless ``scenario_rules`` is set
    to ``"overlapping"``.
    """

    n_rules: int = 100
    n_hosts: int = 50
    n_alerts: int = 100_000
    rule_skew: float = 1.5
    n_scenarios: int = 10
    alerts_per_scenario: int = 62
    duration: int = 30 * 86400
    seed: int = 0
    flood_mean_len: int = 1
    scenario_rules: str = "disjoint"
    n_scenario_rules: int = 5
    scenario_gap: int = 5

    def validate(self):
        if self.n_rules < 2:
            raise ValidationError("n_rules must be >= 2")
        if self.n_alerts < 1:
            raise ValidationError("n_alerts must be >= 1")
        if self.rule_skew <= 0:
            raise ValidationError("rule_skew must be > 0")
        if self.n_scenarios < 0 or self.alerts_per_scenario < 1:
            raise ValidationError("scenario counts must be non-negative / positive")
        if self.duration < 1:
            raise ValidationError("duration must be >= 1 second")
        if self.scenario_rules not in ("disjoint", "overlapping"):
            raise ValidationError("scenario_rules must be 'disjoint' or 'overlapping'")
        if self.flood_mean_len < 1:
            raise ValidationError("flood_mean_len must be >= 1")


@dataclass
class DatasetStats:
    """Size, imbalance and diversity summary of one dataset.

    ``label_ir`` / ``event_ir`` are None when undefined (fewer than two
    classes present); ``heterogeneity`` is None when no sequences were
    supplied to compute it from.
    """

    size: int
    dimensionality: int
    label_ir: Optional[float]
    event_ir: Optional[float]
    heterogeneity: Optional[int] = None


def _zipf_probs(n_rules: int, skew: float) -> np.ndarray:
    ranks = np.arange(1, n_rules + 1, dtype=np.float64)
    w = ranks ** -skew
    return w / w.sum()


def generate_stream(cfg: SyntheticConfig) -> AlertDataset:
    """Generate a synthetic alert stream with injected attack scenarios.

    Deterministic in ``cfg.seed``: the same config always yields the same
    dataset, byte for byte once serialized.  Exactly ``cfg.n_alerts``
    background alerts are produced, plus ``n_scenarios *
    alerts_per_scenario`` incident alerts.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    probs = _zipf_probs(cfg.n_rules, cfg.rule_skew)
    rule_ids = [f"R{i:04d}" for i in range(cfg.n_rules)]
    host_ids = [f"H{i:04d}" for i in range(cfg.n_hosts)]

    records: list[AlertRecord] = []
    if cfg.flood_mean_len <= 1:
        rules = rng.choice(cfg.n_rules, size=cfg.n_alerts, p=probs)
        hosts = rng.integers(0, cfg.n_hosts, size=cfg.n_alerts)
        times = rng.integers(0, cfg.duration, size=cfg.n_alerts)
        for r, h, ts in zip(rules, hosts, times):
            records.append(AlertRecord(int(ts), rule_ids[r], host_ids[h], NON_INCIDENT))
    else:
        # Rule floods: one Zipf rule fires a geometric run of alerts on one
        # host, a few seconds apart.  The final flood is truncated so the
        # background count is exact.
        remaining = cfg.n_alerts
        while remaining > 0:
            rule = int(rng.choice(cfg.n_rules, p=probs))
            host = int(rng.integers(0, cfg.n_hosts))
            length = min(int(rng.geometric(1.0 / cfg.flood_mean_len)), remaining)
            start = int(rng.integers(0, cfg.duration))
            gaps = rng.integers(1, 6, size=length)
            ts = start
            for g in gaps:
                records.append(AlertRecord(ts, rule_ids[rule], host_ids[host], NON_INCIDENT))
                ts += int(g)
            remaining -= length

    if cfg.scenario_rules == "disjoint":
        pool = [f"A{i:02d}" for i in range(cfg.n_scenario_rules)]
    else:
        pool = rule_ids[: cfg.n_scenario_rules]
    for k in range(cfg.n_scenarios):
        host = host_ids[int(rng.integers(0, cfg.n_hosts))]
        start = int(rng.integers(0, max(1, cfg.duration - cfg.alerts_per_scenario * cfg.scenario_gap)))
        for j in range(cfg.alerts_per_scenario):
            rule = pool[int(rng.integers(0, len(pool)))]
            ts = start + j * cfg.scenario_gap
            records.append(AlertRecord(ts, rule, host, INCIDENT, scenario_id=f"S{k:02d}"))

    return AlertDataset(records, name=f"synthetic-{cfg.seed}")


def _record_from_fields(fields: dict, line: int) -> AlertRecord:
    try:
        ts = int(fields["timestamp"])
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"bad timestamp {fields.get('timestamp')!r}", line=line) from None
    scenario = fields.get("scenario_id") or None
    try:
        return AlertRecord(ts, str(fields["rule_id"]), str(fields["host_id"]),
                           str(fields["label"]), scenario)
    except KeyError as exc:
        raise ParseError(f"missing field {exc}", line=line) from None


def parse_alerts(path, format: Optional[str] = None) -> AlertDataset:
    """Read an alert file (CSV or JSONL) into a dataset.

    Raises ParseError (with the line number) for malformed rows and
    ValidationError for rows violating the data model.
    """
    path = str(path)
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".json")) else "csv"
    records = []
    if format == "csv":
        with open(path, newline="") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = next(reader, None)
            if header is None:
                return AlertDataset([], name=path)
            if tuple(header) != ALERT_COLUMNS:
                raise ParseError(f"expected header {','.join(ALERT_COLUMNS)}, got {','.join(header)}", line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(ALERT_COLUMNS):
                    raise ParseError(f"expected {len(ALERT_COLUMNS)} columns, got {len(row)}", line=lineno)
                records.append(_record_from_fields(dict(zip(ALERT_COLUMNS, row)), lineno))
    elif format == "jsonl":
        with open(path) as fh:
            for lineno, row in enumerate(fh, start=1):
                row = row.strip()
                if not row or row.startswith("#"):
                    continue
                try:
                    obj = json.loads(row)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
                records.append(_record_from_fields(obj, lineno))
    else:
        raise ValidationError(f"unknown format {format!r}, expected 'csv' or 'jsonl'")
    return AlertDataset(records, name=path)


def write_alerts(dataset: AlertDataset, path, format: Optional[str] = None) -> None:
    """Serialize a dataset; inverse of parse_alerts on valid data."""
    path = str(path)
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".json")) else "csv"
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(ALERT_COLUMNS)
            for a in dataset:
                writer.writerow([a.timestamp, a.rule_id, a.host_id, a.label, a.scenario_id or ""])
    elif format == "jsonl":
        with open(path, "w") as fh:
            for a in dataset:
                fh.write(json.dumps({"timestamp": a.timestamp, "rule_id": a.rule_id,
                                     "host_id": a.host_id, "label": a.label,
                                     "scenario_id": a.scenario_id}) + "\n")
    else:
        raise ValidationError(f"unknown format {format!r}, expected 'csv' or 'jsonl'")


def dataset_stats(dataset: AlertDataset, seqs: Optional[Iterable] = None) -> DatasetStats:
    """Summarize size, imbalance and diversity of a dataset.

    Label IR uses the Incident/NonIncident counts, event IR the per-rule
    counts (both via the multi-class imbalance ratio).  Heterogeneity is
    the number of distinct context vectors and needs ``seqs``.
    """
    labels = dataset.label_counts()
    rules = dataset.rule_counts()
    label_ir = None
    if len(labels) >= 2:
        label_ir = compute_ir([labels[NON_INCIDENT], labels[INCIDENT]])
    event_ir = None
    if len(rules) >= 2:
        event_ir = compute_ir(list(rules.values()))
    heterogeneity = None
    if seqs is not None:
        heterogeneity = len({tuple(s.context) for s in seqs})
    return DatasetStats(size=len(dataset), dimensionality=len(rules),
                        label_ir=label_ir, event_ir=event_ir, heterogeneity=heterogeneity)
