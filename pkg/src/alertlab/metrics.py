"""Imbalance-aware evaluation metrics.

Includes the multi-class imbalance ratio, confusion matrices with an
explicit Not-Classified column for rejected alerts, micro/macro F1, the
relaxed precision/recall/F1 variant that charges rejected alerts to the
analyst workload, cosine similarity for comparing explanations, and
empirical CDFs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

TRUE_CLASSES = ("NonIncident", "Incident")
PRED_CLASSES = ("NotClassified", "NonIncident", "Incident")


def compute_ir(counts: Sequence[int]) -> float:
    """Multi-class imbalance ratio in [0, 1); 0 = balanced, near 1 = extreme.

    ``counts`` holds the per-class sample counts.  Defined as

        IR = 1 - 1 / ( (n_c - 1)/n_c * sum_i n_i / (n - n_i) )

    with n_c classes and n total samples.
    """
    counts = [int(c) for c in counts]
    n_c = len(counts)
    if n_c < 2:
        raise ValidationError("imbalance ratio needs at least two classes")
    if any(c < 1 for c in counts):
        raise ValidationError("every class needs at least one sample")
    n = sum(counts)
    terms = []
    for c in counts:
        if n - c == 0:
            raise ValidationError("one class holds the entire dataset; IR undefined")
        terms.append(c / (n - c))
    return 1.0 - 1.0 / ((n_c - 1) / n_c * sum(terms))


@dataclass
class ConfusionMatrix:
    """Counts[true][pred] with true in TRUE_CLASSES and pred in PRED_CLASSES.

    Stored as a float array so that aggregated (mean) matrices can be
    represented too; entries must be non-negative.
    """

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.counts.shape != (2, 3):
            raise ValidationError(f"confusion matrix must be 2x3, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValidationError("confusion counts must be non-negative")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "ConfusionMatrix":
        """Build from (true_label, predicted_outcome) pairs.

        Any rejection outcome counts as NotClassified.
        """
        counts = np.zeros((2, 3))
        for true, pred in pairs:
            i = TRUE_CLASSES.index(true)
            j = PRED_CLASSES.index(pred) if pred in PRED_CLASSES else 0
            counts[i, j] += 1
        return cls(counts)

    def row(self, true_label: str) -> np.ndarray:
        return self.counts[TRUE_CLASSES.index(true_label)]

    def cell(self, true_label: str, pred_label: str) -> float:
        return float(self.counts[TRUE_CLASSES.index(true_label), PRED_CLASSES.index(pred_label)])


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-confusion v1\n")
        writer = csv.writer(fh)
        writer.writerow(["true_label", "not_classified", "non_incident", "incident"])
        for i, name in enumerate(TRUE_CLASSES):
            writer.writerow([name] + [repr(float(v)) for v in cm.counts[i]])


def read_confusion_csv(path) -> ConfusionMatrix:
    counts = np.zeros((2, 3))
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ParseError("empty confusion matrix file", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 or row[0] not in TRUE_CLASSES:
                raise ParseError(f"bad confusion row {row!r}", line=lineno)
            try:
                counts[TRUE_CLASSES.index(row[0])] = [float(v) for v in row[1:]]
            except ValueError:
                raise ParseError(f"non-numeric count in {row!r}", line=lineno) from None
            seen.add(row[0])
    if seen != set(TRUE_CLASSES):
        raise ParseError(f"confusion matrix missing rows for {set(TRUE_CLASSES) - seen}")
    return ConfusionMatrix(counts)


def _prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def micro_macro_f1(cm: ConfusionMatrix) -> tuple[float, float]:
    """Micro- and macro-averaged F1 over the two ground-truth classes.

    Rejected (NotClassified) alerts are excluded entirely: they count as
    neither TP, FP nor FN of any class.
    """
    tps, fps, fns, f1s = [], [], [], []
    for c in TRUE_CLASSES:
        tp = cm.cell(c, c)
        fp = sum(cm.cell(other, c) for other in TRUE_CLASSES if other != c)
        fn = sum(cm.cell(c, other) for other in TRUE_CLASSES if other != c)
        tps.append(tp)
        fps.append(fp)
        fns.append(fn)
        f1s.append(_prf(tp, fp, fn)[2])
    micro = _prf(sum(tps), sum(fps), sum(fns))[2]
    macro = float(np.mean(f1s))
    return micro, macro


def relaxed_prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Precision/recall/F1 with Incident as positive class and rejections charged.

    Rejected Incident alerts still reach an analyst, so they count as TP;
    rejected Non-Incident alerts waste analyst time, so they count as FP.
    Classified alerts keep the usual definitions.
    """
    tp = cm.cell("Incident", "Incident") + cm.cell("Incident", "NotClassified")
    fp = cm.cell("NonIncident", "Incident") + cm.cell("NonIncident", "NotClassified")
    fn = cm.cell("Incident", "NonIncident")
    return _prf(tp, fp, fn)


def cosine_similarity(a, b) -> float:
    """cos(a, b) in [0, 1] for non-negative vectors; 0 if either norm is 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"vector length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(min(1.0, np.dot(a, b) / (na * nb)))


def empirical_cdf(samples: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous ECDF as (sorted unique values, cumulative fractions)."""
    samples = np.asarray(list(samples), dtype=np.float64)
    if samples.size == 0:
        raise ValidationError("empirical CDF of an empty sample is undefined")
    values, counts = np.unique(samples, return_counts=True)
    fractions = np.cumsum(counts) / samples.size
    return values, fractions


@dataclass
class RaterVector:
    """Per-context-position relevance scores from a human rater."""

    seq_id: int
    relevance: list[float]

    def __post_init__(self):
        if any(not (0.0 <= v <= 1.0) for v in self.relevance):
            raise ValidationError(f"relevance outside [0,1] for seq {self.seq_id}")


def read_rater_file(path) -> list[RaterVector]:
    """Read an expert rater CSV: seq_id,pos_0..pos_{n-1} with reals in [0,1]."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[0] != "seq_id":
            raise ParseError("rater file must start with header seq_id,pos_0,...", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(RaterVector(int(row[0]), [float(v) for v in row[1:]]))
            except ValueError:
                raise ParseError(f"non-numeric rater row {row!r}", line=lineno) from None
    return out


def write_rater_file(raters: Iterable[RaterVector], path) -> None:
    raters = list(raters)
    n = len(raters[0].relevance) if raters else 0
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-rater v1\n")
        writer = csv.writer(fh)
        writer.writerow(["seq_id"] + [f"pos_{i}" for i in range(n)])
        for r in raters:
            writer.writerow([r.seq_id] + [repr(float(v)) for v in r.relevance])


@dataclass
class ExplanationComparison:
    """Result of comparing model explanations against expert ratings."""

    similarities: list[tuple[int, float]]
    missing_model: list[int] = field(default_factory=list)
    missing_expert: list[int] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)


def project_relevance(relevance: Sequence[float], context: Sequence[int],
                      vocab_size: int, pad_index: int) -> np.ndarray:
    """Aggregate per-position relevance onto event-type space.

    Same rule as the model's total attention: sum the scores of non-PAD
    positions holding each event type.  No normalization (cosine
    similarity is scale invariant anyway).
    """
    if len(relevance) != len(context):
        raise ValidationError(f"relevance length {len(relevance)} != context length {len(context)}")
    out = np.zeros(vocab_size)
    for score, event in zip(relevance, context):
        if event != pad_index and 0 <= event < vocab_size:
            out[event] += score
    return out


def compare_explanations(model_vectors: Mapping[int, np.ndarray],
                         expert: Iterable[RaterVector],
                         contexts: Mapping[int, Sequence[int]],
                         vocab_size: int, pad_index: int) -> ExplanationComparison:
    """Cosine-compare the model's total-attention vectors with expert ratings.

    Expert scores are per context position and get projected onto event
    types through the context of the same sequence before comparison.
    Items present on only one side are reported separately; items whose
    rating does not line up with the context are skipped and logged.
    """
    expert = list(expert)
    expert_ids = {r.seq_id for r in expert}
    model_ids = set(model_vectors)
    result = ExplanationComparison(
        similarities=[],
        missing_model=sorted(expert_ids - model_ids),
        missing_expert=sorted(model_ids - expert_ids),
    )
    for rater in expert:
        if rater.seq_id not in model_vectors:
            continue
        context = contexts.get(rater.seq_id)
        if context is None:
            result.skipped.append((rater.seq_id, "no context available"))
            log.warning("explanation %d skipped: no context available", rater.seq_id)
            continue
        try:
            projected = project_relevance(rater.relevance, context, vocab_size, pad_index)
        except ValidationError as exc:
            result.skipped.append((rater.seq_id, str(exc)))
            log.warning("explanation %d skipped: %s", rater.seq_id, exc)
            continue
        sim = cosine_similarity(model_vectors[rater.seq_id], projected)
        result.similarities.append((rater.seq_id, sim))
    return result
