"""Random search over the hyperparameter grid.

Points are sampled without replacement from the full cartesian grid in a
seed-determined order, so a larger trial budget always extends the same
trial sequence (and can only improve the best score).  The search
optimizes macro F1 to favor the minority class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .interpreter import Hyperparameters

DAY = 86400
WEEK = 7 * DAY
MONTH = 30 * DAY  # months are informal; 30 days by convention


@dataclass
class Grid:
    """Candidate values per hyperparameter; the search space is their product."""

    n_values: list[int]
    t_values: list[int]
    hidden_values: list[int]
    delta_values: list[float]
    tau_values: list[float]
    epsilon_values: list[float]
    min_cluster_values: list[int]

    def __post_init__(self):
        for name, values in self.axes():
            if not values:
                raise ValidationError(f"empty candidate list for {name}")

    def axes(self) -> list[tuple[str, list]]:
        return [("n", self.n_values), ("t", self.t_values),
                ("hidden_nodes", self.hidden_values), ("delta", self.delta_values),
                ("tau_confidence", self.tau_values), ("epsilon", self.epsilon_values),
                ("min_cluster_size", self.min_cluster_values)]

    def point(self, index: int) -> Hyperparameters:
        """Mixed-radix unranking of a flat grid index."""
        values = {}
        for name, candidates in reversed(self.axes()):
            index, pos = divmod(index, len(candidates))
            values[name] = candidates[pos]
        return Hyperparameters(**values)

    def contains(self, hp: Hyperparameters, tol: float = 1e-9) -> bool:
        probe = hp.as_dict()
        for name, candidates in self.axes():
            if not any(abs(probe[name] - c) <= tol for c in candidates):
                return False
        return True


def default_grid() -> Grid:
    """The full search grid: 3*3*3*21*20*20*4 = 907,200 combinations."""
    return Grid(
        n_values=[10, 15, 20],
        t_values=[DAY, WEEK, MONTH],
        hidden_values=[32, 64, 128],
        delta_values=[round(i * 0.05, 2) for i in range(21)],
        tau_values=[round(i * 0.05, 2) for i in range(1, 21)],
        epsilon_values=[round(i * 0.05, 2) for i in range(1, 21)],
        min_cluster_values=[5, 10, 20, 50],
    )


def grid_cardinality(g: Grid) -> int:
    out = 1
    for _, values in g.axes():
        out *= len(values)
    return out


@dataclass
class SearchBudget:
    max_trials: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValidationError("max_trials must be >= 1")


@dataclass
class TrialRecord:
    trial: int
    params: Hyperparameters
    macro_f1: Optional[float]
    status: str
    message: str = ""


def random_search(g: Grid, budget: SearchBudget,
                  evaluate: Callable[[Hyperparameters], float],
                  ) -> tuple[Hyperparameters, float, list[TrialRecord]]:
    """Sample grid points without replacement and keep the macro-F1 argmax.

    ``evaluate`` runs the full pipeline for one point and returns its
    macro F1; a raising trial is logged as failed and the search
    continues.  Ties keep the earliest trial.
    """
    cardinality = grid_cardinality(g)
    n_trials = min(budget.max_trials, cardinality)
    rng = np.random.default_rng(budget.seed)
    order = rng.permutation(cardinality)[:n_trials]
    trials: list[TrialRecord] = []
    best_hp, best_score = None, -np.inf
    for trial, flat in enumerate(order):
        hp = g.point(int(flat))
        try:
            score = float(evaluate(hp))
        except Exception as exc:  # failed trials stay in the log
            trials.append(TrialRecord(trial, hp, None, "failed", str(exc)))
            continue
        trials.append(TrialRecord(trial, hp, score, "ok"))
        if score > best_score:
            best_hp, best_score = hp, score
    if best_hp is None:
        raise ConfigError("every trial failed; no hyperparameters to return")
    return best_hp, float(best_score), trials


_TRIAL_FIELDS = ["trial", "n", "t", "hidden_nodes", "delta", "tau_confidence",
                 "epsilon", "min_cluster_size", "macro_f1", "status"]


def write_trial_log(trials: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# alertlab-trials v1\n")
        writer = csv.writer(fh)
        writer.writerow(_TRIAL_FIELDS)
        for t in trials:
            d = t.params.as_dict()
            writer.writerow([t.trial, d["n"], d["t"], d["hidden_nodes"], repr(d["delta"]),
                             repr(d["tau_confidence"]), repr(d["epsilon"]),
                             d["min_cluster_size"],
                             repr(t.macro_f1) if t.macro_f1 is not None else "",
                             t.status])


def write_best_params(hp: Hyperparameters, score: Optional[float], path) -> None:
    """Plain-text key = value file for the winning hyperparameters."""
    with open(path, "w") as fh:
        fh.write("# alertlab-best-params v1\n")
        fh.write(f"context_length = {hp.n}\n")
        fh.write(f"context_timeout = {hp.t}\n")
        fh.write(f"hidden_nodes = {hp.hidden_nodes}\n")
        fh.write(f"delta = {hp.delta!r}\n")
        fh.write(f"tau_confidence = {hp.tau_confidence!r}\n")
        fh.write(f"epsilon = {hp.epsilon!r}\n")
        fh.write(f"min_cluster_size = {hp.min_cluster_size}\n")
        if score is not None:
            fh.write(f"macro_f1 = {score!r}\n")


def read_best_params(path) -> Hyperparameters:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    try:
        return Hyperparameters(
            n=int(values["context_length"]), t=int(values["context_timeout"]),
            hidden_nodes=int(values["hidden_nodes"]), delta=float(values["delta"]),
            tau_confidence=float(values["tau_confidence"]), epsilon=float(values["epsilon"]),
            min_cluster_size=int(values["min_cluster_size"]))
    except KeyError as exc:
        raise ParseError(f"best-params file is missing {exc}") from None
