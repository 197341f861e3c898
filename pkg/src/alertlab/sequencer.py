"""Per-alert context sequences and the event vocabulary.

Each alert becomes one sequence: the alert itself (target) plus the up
to ``n`` most recent alerts on the same host that fired strictly before
it and within the timeout ``t``.  Short histories are left-padded with a
dedicated PAD token so downstream tensors have fixed shape.

Rules a frozen vocabulary has never seen map to the UNSEEN marker; the
classifier turns those into an unseen-event rejection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ParseError, ValidationError
from .ingest import INCIDENT, NON_INCIDENT, AlertDataset

UNSEEN = -1


@dataclass
class EventVocabulary:
    """Dense 0-based mapping rule_id -> event index, plus a reserved PAD index.

    While unfrozen, looking up a new rule extends the map; once frozen,
    unknown rules resolve to UNSEEN instead.
    """

    index: dict[str, int] = field(default_factory=dict)
    frozen: bool = False

    @property
    def size(self) -> int:
        """Number of real event types (PAD excluded)."""
        return len(self.index)

    @property
    def pad_index(self) -> int:
        return len(self.index)

    @property
    def rules(self) -> list[str]:
        """Rule ids ordered by event index."""
        out = [""] * len(self.index)
        for rule, i in self.index.items():
            out[i] = rule
        return out

    def lookup(self, rule_id: str) -> int:
        found = self.index.get(rule_id)
        if found is not None:
            return found
        if self.frozen:
            return UNSEEN
        self.index[rule_id] = len(self.index)
        return self.index[rule_id]

    def freeze(self) -> "EventVocabulary":
        self.frozen = True
        return self

    @classmethod
    def from_rules(cls, rules: Iterable[str], frozen: bool = True) -> "EventVocabulary":
        vocab = cls()
        for rule in rules:
            vocab.lookup(rule)
        vocab.frozen = frozen
        return vocab


def build_vocabulary(dataset: AlertDataset) -> EventVocabulary:
    """One index per distinct rule in first-appearance order; frozen."""
    return EventVocabulary.from_rules(a.rule_id for a in dataset)


@dataclass
class Sequence:
    """A target event with its fixed-length, left-padded context window."""

    context: tuple[int, ...]
    target: int
    host_id: str
    timestamp: int
    label: str
    index: int = 0  # position of the target alert in its dataset

    @property
    def is_incident(self) -> bool:
        return self.label == INCIDENT


def build_sequences(dataset: AlertDataset, vocab: EventVocabulary,
                    n: int, t: int) -> list[Sequence]:
    """Build one sequence per alert with a per-host sliding window.

    The context holds the at most ``n`` most recent alerts of the same
    host with timestamp strictly inside (target - t, target); missing
    slots are PAD on the left.  Alerts sharing the target's timestamp are
    excluded (strict precedence).
    """
    if n < 1:
        raise ValidationError("context length n must be >= 1")
    if t <= 0:
        raise ValidationError("context timeout t must be > 0")
    pad = vocab.pad_index
    history: dict[str, list[tuple[int, int]]] = {}
    out: list[Sequence] = []
    for i, alert in enumerate(dataset):
        hist = history.setdefault(alert.host_id, [])
        # Drop entries that can never be in a window again.
        cutoff = alert.timestamp - t
        drop = 0
        while drop < len(hist) and hist[drop][0] <= cutoff:
            drop += 1
        if drop:
            del hist[:drop]
        events = []
        for ts, ev in reversed(hist):
            if ts >= alert.timestamp:
                continue
            events.append(ev)
            if len(events) == n:
                break
        events.reverse()
        context = (pad,) * (n - len(events)) + tuple(events)
        target = vocab.lookup(alert.rule_id)
        out.append(Sequence(context=context, target=target, host_id=alert.host_id,
                            timestamp=alert.timestamp, label=alert.label, index=i))
        hist.append((alert.timestamp, target))
    return out


def sequences_to_arrays(seqs: list[Sequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(contexts, targets, incident flags, timestamps) as numpy arrays."""
    n = len(seqs[0].context) if seqs else 0
    contexts = np.array([s.context for s in seqs], dtype=np.int64).reshape(len(seqs), n)
    targets = np.array([s.target for s in seqs], dtype=np.int64)
    incident = np.array([s.is_incident for s in seqs], dtype=bool)
    timestamps = np.array([s.timestamp for s in seqs], dtype=np.int64)
    return contexts, targets, incident, timestamps


def write_sequence_dump(seqs: list[Sequence], vocab: EventVocabulary, path) -> None:
    """Sequence dump CSV with PAD rendered as '-' and unseen events as '?'."""
    pad = vocab.pad_index
    n = len(seqs[0].context) if seqs else 0

    def render(ev: int) -> str:
        if ev == pad:
            return "-"
        if ev == UNSEEN:
            return "?"
        return str(ev)

    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-sequences v1\n")
        writer = csv.writer(fh)
        writer.writerow(["target_index", "label", "host_id", "timestamp"]
                        + [f"ctx_{i}" for i in range(n)])
        for s in seqs:
            writer.writerow([render(s.target), s.label, s.host_id, s.timestamp]
                            + [render(e) for e in s.context])


def read_sequence_dump(path, pad_index: int) -> list[Sequence]:
    """Inverse of write_sequence_dump given the writing vocabulary's PAD index."""

    def parse(token: str, lineno: int) -> int:
        if token == "-":
            return pad_index
        if token == "?":
            return UNSEEN
        try:
            return int(token)
        except ValueError:
            raise ParseError(f"bad event token {token!r}", line=lineno) from None

    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or header[:4] != ["target_index", "label", "host_id", "timestamp"]:
            raise ParseError("bad sequence dump header", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if row[1] not in (NON_INCIDENT, INCIDENT):
                raise ParseError(f"unknown label {row[1]!r}", line=lineno)
            out.append(Sequence(
                context=tuple(parse(tok, lineno) for tok in row[4:]),
                target=parse(row[0], lineno),
                host_id=row[2],
                timestamp=int(row[3]),
                label=row[1],
                index=len(out),
            ))
    return out
