"""Clustering of total-attention vectors and classification with rejection.

Vectors from confident predictions are grouped with DBSCAN; each cluster
inherits the label of its highest-risk member (Incident beats
NonIncident).  A new sequence is either assigned the label of the
nearest clustered training vector within epsilon, or rejected for one of
three reasons: the prediction confidence was too low, the sequence
contains an event type unseen in training, or its vector is too far from
every cluster.  Rejected alerts go back to a human analyst.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .context_builder import Prediction
from .errors import ValidationError
from .ingest import INCIDENT, NON_INCIDENT

REJECTED_LOW_CONFIDENCE = "RejectedLowConfidence"
REJECTED_UNSEEN_EVENT = "RejectedUnseenEvent"
REJECTED_NO_CLUSTER = "RejectedNoCluster"
REJECTIONS = (REJECTED_LOW_CONFIDENCE, REJECTED_UNSEEN_EVENT, REJECTED_NO_CLUSTER)
OUTCOMES = (NON_INCIDENT, INCIDENT) + REJECTIONS


class UnseenEvent:
    """Marker passed in place of a Prediction when the model refused one."""

    def __repr__(self):
        return "UnseenEvent()"


UNSEEN_EVENT = UnseenEvent()


@dataclass
class Hyperparameters:
    """The tunable knobs of the whole pipeline."""

    n: int = 10
    t: int = 86400
    hidden_nodes: int = 32
    delta: float = 0.0
    tau_confidence: float = 0.05
    epsilon: float = 0.8
    min_cluster_size: int = 5

    def __post_init__(self):
        if self.n < 1 or self.t <= 0 or self.hidden_nodes < 1 or self.min_cluster_size < 1:
            raise ValidationError("n, hidden_nodes, min_cluster_size must be >= 1 and t > 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValidationError("delta must be in [0, 1]")
        if not 0.0 < self.tau_confidence <= 1.0:
            raise ValidationError("tau_confidence must be in (0, 1]")
        if self.epsilon <= 0.0:
            raise ValidationError("epsilon must be > 0")

    def as_dict(self) -> dict:
        return {"n": self.n, "t": self.t, "hidden_nodes": self.hidden_nodes,
                "delta": self.delta, "tau_confidence": self.tau_confidence,
                "epsilon": self.epsilon, "min_cluster_size": self.min_cluster_size}


_BLOCK = 512


def _sq_norms(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def dbscan(points, epsilon: float, min_size: int,
           sample_weight: Optional[np.ndarray] = None) -> np.ndarray:
    """Density clustering with Euclidean distance; returns -1 for noise.

    A point is core when the weights of all points within epsilon
    (itself included) reach ``min_size``; clusters are the maximal
    density-connected sets of cores.  Non-core points attach to the
    cluster of their first core neighbor in input order; the rest are
    noise.  ``sample_weight`` makes a row count as that many duplicate
    points, which keeps results identical when deduplicating inputs.

    Distances are evaluated blockwise so large inputs never materialize a
    full pairwise matrix.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0")
    if min_size < 1:
        raise ValidationError("min_size must be >= 1")
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        x = x.reshape(len(x), -1)
    n = x.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    weights = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if weights.shape != (n,):
        raise ValidationError("sample_weight must have one entry per point")

    sq = _sq_norms(x)
    eps2 = epsilon * epsilon

    core = np.zeros(n, dtype=bool)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        core[start:stop] = ((d2 <= eps2) * weights).sum(axis=1) >= min_size

    labels = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = next_id
        frontier = np.array([seed])
        while frontier.size:
            new_parts = []
            for start in range(0, frontier.size, _BLOCK):
                rows = frontier[start:start + _BLOCK]
                d2 = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
                reach = ((d2 <= eps2).any(axis=0)) & core & (labels == -1)
                if reach.any():
                    idx = np.nonzero(reach)[0]
                    labels[idx] = next_id
                    new_parts.append(idx)
            frontier = np.concatenate(new_parts) if new_parts else np.empty(0, dtype=np.int64)
        next_id += 1

    borders = np.nonzero(~core & (weights > 0))[0]
    for start in range(0, borders.size, _BLOCK):
        rows = borders[start:start + _BLOCK]
        d2 = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        near_core = (d2 <= eps2) & core[None, :]
        has = near_core.any(axis=1)
        first = near_core.argmax(axis=1)
        labels[rows[has]] = labels[first[has]]
    return labels


@dataclass
class ClusterModel:
    """Clustered training vectors plus per-cluster ground-truth labels."""

    vectors: np.ndarray          # (M, V) vectors that passed the confidence gate
    incident: np.ndarray         # (M,) bool ground truth per vector
    cluster_ids: np.ndarray      # (M,) DBSCAN output, -1 = noise
    cluster_labels: dict[int, str]
    seq_indices: np.ndarray      # (M,) positions in the training sequence list
    epsilon: float
    tau: float
    counts: Optional[np.ndarray] = None  # multiplicity when vectors were deduplicated
    _member_vectors: np.ndarray = field(default=None, repr=False)
    _member_clusters: np.ndarray = field(default=None, repr=False)
    _member_sq: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        clustered = self.cluster_ids >= 0
        # Members sorted by cluster id so that a distance tie resolves to
        # the lowest cluster id via argmin.
        order = np.argsort(self.cluster_ids[clustered], kind="stable")
        self._member_vectors = self.vectors[clustered][order]
        self._member_clusters = self.cluster_ids[clustered][order]
        self._member_sq = _sq_norms(self._member_vectors)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_labels)

    def cluster_sizes(self) -> dict[int, float]:
        counts = self.counts if self.counts is not None else np.ones(len(self.cluster_ids))
        sizes: dict[int, float] = {}
        for cid, c in zip(self.cluster_ids, counts):
            if cid >= 0:
                sizes[cid] = sizes.get(cid, 0.0) + float(c)
        return sizes


def fit_arrays(vectors: np.ndarray, confidences: np.ndarray, incident: np.ndarray,
               hp: Hyperparameters, sample_weight: Optional[np.ndarray] = None,
               seq_indices: Optional[np.ndarray] = None) -> ClusterModel:
    """Cluster confident training vectors and label clusters by highest risk."""
    vectors = np.asarray(vectors, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    incident = np.asarray(incident, dtype=bool)
    eligible = confidences >= hp.tau_confidence
    if seq_indices is None:
        seq_indices = np.arange(len(vectors))
    vec = vectors[eligible]
    inc = incident[eligible]
    weights = None if sample_weight is None else np.asarray(sample_weight, float)[eligible]
    ids = dbscan(vec, hp.epsilon, hp.min_cluster_size, sample_weight=weights)
    labels: dict[int, str] = {}
    for cid in np.unique(ids[ids >= 0]):
        labels[int(cid)] = INCIDENT if bool(inc[ids == cid].any()) else NON_INCIDENT
    return ClusterModel(vectors=vec, incident=inc, cluster_ids=ids, cluster_labels=labels,
                        seq_indices=np.asarray(seq_indices)[eligible], epsilon=hp.epsilon,
                        tau=hp.tau_confidence, counts=weights)


def fit(train: Iterable[tuple], hp: Hyperparameters) -> ClusterModel:
    """Fit from (Sequence, Prediction, total-attention vector) triples."""
    train = list(train)
    if not train:
        return fit_arrays(np.empty((0, 1)), np.empty(0), np.empty(0, dtype=bool), hp)
    vectors = np.array([v for _, _, v in train], dtype=np.float64)
    confidences = np.array([p.confidence for _, p, _ in train])
    incident = np.array([s.is_incident for s, _, _ in train], dtype=bool)
    return fit_arrays(vectors, confidences, incident, hp)


def classify_batch(model: ClusterModel, confidences: np.ndarray, vectors: np.ndarray,
                   unseen: Optional[np.ndarray] = None) -> list[str]:
    """Vectorized classify: one outcome string per input row."""
    vectors = np.asarray(vectors, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    n = len(vectors)
    if unseen is None:
        unseen = np.zeros(n, dtype=bool)
    outcomes = np.full(n, REJECTED_NO_CLUSTER, dtype=object)
    outcomes[confidences < model.tau] = REJECTED_LOW_CONFIDENCE
    outcomes[unseen] = REJECTED_UNSEEN_EVENT
    candidates = np.nonzero(~unseen & (confidences >= model.tau))[0]
    members = model._member_vectors
    if members.shape[0] == 0 or candidates.size == 0:
        return list(outcomes)
    eps2 = model.epsilon * model.epsilon
    sq = model._member_sq
    for start in range(0, candidates.size, _BLOCK):
        rows = candidates[start:start + _BLOCK]
        v = vectors[rows]
        d2 = _sq_norms(v)[:, None] + sq[None, :] - 2.0 * (v @ members.T)
        jmin = d2.argmin(axis=1)
        dmin = d2[np.arange(len(rows)), jmin]
        hit = dmin <= eps2
        for row, j, ok in zip(rows, jmin, hit):
            if ok:
                outcomes[row] = model.cluster_labels[int(model._member_clusters[j])]
    return list(outcomes)


def classify(model: ClusterModel, seq, prediction, vector) -> str:
    """Outcome for one sequence: a label or one of the three rejections.

    ``prediction`` is either a Prediction or the UNSEEN_EVENT marker when
    the context builder refused the sequence.
    """
    if not isinstance(prediction, Prediction):
        return REJECTED_UNSEEN_EVENT
    unseen = np.array([False])
    conf = np.array([prediction.confidence])
    vec = np.asarray(vector, dtype=np.float64)[None, :]
    return classify_batch(model, conf, vec, unseen)[0]
