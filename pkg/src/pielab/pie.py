"""Pruning Identified Exemplars.

An example is a PIE when the majority prediction of the N pruned
initialisations differs from that of the N unpruned ones. Single-label
majorities are modes with ties going to the smallest class index;
multi-label majorities are the sets of classes predicted by strictly more
than N/2 initialisations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .harness import (PredictionMatrix, accuracy, hard_predictions, macro_f1_from_sets)

NO_PIES = "no PIEs"


def majority_class(votes: Sequence[int]) -> int:
    """Mode of ``votes``; the smallest tied class wins."""
    votes = np.asarray(votes, dtype=np.int64)
    if votes.size == 0:
        raise ValueError("majority_class needs at least one vote")
    counts = np.bincount(votes)
    return int(np.argmax(counts))


def majority_set(per_class_vote_counts: Sequence[int], n: int) -> frozenset[int]:
    counts = np.asarray(per_class_vote_counts, dtype=np.int64)
    if np.any(counts > n) or np.any(counts < 0):
        raise ValueError(f"vote counts must lie in [0, {n}]")
    # count > n/2 without floats
    return frozenset(int(c) for c in np.flatnonzero(2 * counts > n))


def vote_counts(hard: np.ndarray, num_classes: int) -> np.ndarray:
    """(n, C) vote counts from (N, n) class indices or (N, n, C) boolean sets."""
    if hard.ndim == 3:
        return hard.sum(axis=0, dtype=np.int64)
    N, n = hard.shape
    counts = np.zeros((n, num_classes), dtype=np.int64)
    rows = np.broadcast_to(np.arange(n), (N, n))
    np.add.at(counts, (rows.ravel(), hard.ravel()), 1)
    return counts


def majority_vectors(hard: np.ndarray, num_classes: int, kind: str) -> np.ndarray:
    """Per-example majority: (n,) class indices, or (n, C) booleans for multi-label."""
    counts = vote_counts(hard, num_classes)
    if kind == "single":
        return np.argmax(counts, axis=1)
    return 2 * counts > hard.shape[0]


@dataclass(frozen=True)
class PIEVerdict:
    example_id: int
    is_pie: bool
    pruned_majority: int | frozenset
    unpruned_majority: int | frozenset


def _fmt_majority(m) -> str:
    if isinstance(m, frozenset):
        return ";".join(str(c) for c in sorted(m))
    return str(m)


def detect_pies(pruned: PredictionMatrix, unpruned: PredictionMatrix, kind: str | None = None,
                positive_threshold: float = 0.5) -> list[PIEVerdict]:
    kind = kind or pruned.kind
    if pruned.n_initializations != unpruned.n_initializations:
        raise ValueError(f"initialization count mismatch: {pruned.n_initializations} pruned vs "
                         f"{unpruned.n_initializations} unpruned")
    if pruned.split != unpruned.split or not np.array_equal(pruned.example_ids, unpruned.example_ids):
        raise ValueError("pruned and unpruned predictions cover different splits")
    if pruned.probs.shape[2] != unpruned.probs.shape[2]:
        raise ValueError("class spaces differ")
    C = pruned.probs.shape[2]
    mp = majority_vectors(hard_predictions(pruned.probs, kind, positive_threshold), C, kind)
    mu = majority_vectors(hard_predictions(unpruned.probs, kind, positive_threshold), C, kind)
    return verdicts_from_majorities(pruned.example_ids, mp, mu, kind)


def verdicts_from_majorities(example_ids, mp: np.ndarray, mu: np.ndarray, kind: str) -> list[PIEVerdict]:
    out = []
    if kind == "single":
        for eid, a, b in zip(np.asarray(example_ids).tolist(), mp.tolist(), mu.tolist()):
            out.append(PIEVerdict(eid, a != b, a, b))
    else:
        differ = np.any(mp != mu, axis=1)
        for eid, d, a, b in zip(np.asarray(example_ids).tolist(), differ.tolist(), mp, mu):
            out.append(PIEVerdict(eid, bool(d), frozenset(np.flatnonzero(a).tolist()),
                                  frozenset(np.flatnonzero(b).tolist())))
    return out


def pie_mask(verdicts: Sequence[PIEVerdict]) -> np.ndarray:
    return np.array([v.is_pie for v in verdicts], dtype=bool)


def pie_fraction(verdicts: Sequence[PIEVerdict]) -> float:
    if not verdicts:
        raise ValueError("no examples")
    return float(pie_mask(verdicts).mean())


def pies_csv(verdicts: Sequence[PIEVerdict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example_id", "is_pie", "pruned_majority", "unpruned_majority"])
    for v in verdicts:
        w.writerow([v.example_id, int(v.is_pie), _fmt_majority(v.pruned_majority),
                    _fmt_majority(v.unpruned_majority)])
    return buf.getvalue()


def read_pies_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(example_ids, is_pie) from a pies CSV."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ids = np.array([int(r["example_id"]) for r in rows], dtype=np.int64)
    flags = np.array([r["is_pie"] == "1" for r in rows], dtype=bool)
    return ids, flags


# ---------------------------------------------------------------- reports


def class_order(train_frequencies: Sequence[int]) -> np.ndarray:
    """Class indices sorted by descending train frequency, ties by index."""
    freq = np.asarray(train_frequencies)
    return np.lexsort((np.arange(freq.size), -freq))


@dataclass
class ClassDistribution:
    classes: np.ndarray  # class indices in plotting order
    all_fraction: np.ndarray
    pie_fraction: np.ndarray


def class_distribution(verdicts: Sequence[PIEVerdict], gold: np.ndarray,
                       train_frequencies: Sequence[int]) -> ClassDistribution:
    """Normalised class histograms over all examples and over PIEs.

    ``gold`` is a multi-hot (n, C) matrix; a multi-label example counts once
    for every class it belongs to.
    """
    gold = np.asarray(gold) > 0.5
    order = class_order(train_frequencies)
    flags = pie_mask(verdicts)
    all_counts = gold.sum(axis=0).astype(np.float64)
    pie_counts = gold[flags].sum(axis=0).astype(np.float64)
    all_frac = all_counts / all_counts.sum() if all_counts.sum() else all_counts
    pie_frac = pie_counts / pie_counts.sum() if pie_counts.sum() else pie_counts
    return ClassDistribution(order, all_frac[order], pie_frac[order])


@dataclass
class SubsetAccuracy:
    """Accuracy (single-label) or macro-F1 (multi-label) on an example subset.

    ``empty`` marks a subset with no examples, in which case every number is None.
    """

    n_examples: int
    pruned_per_init_mean: float | None = None
    unpruned_per_init_mean: float | None = None
    pruned_majority_vote: float | None = None
    unpruned_majority_vote: float | None = None

    @property
    def empty(self) -> bool:
        return self.n_examples == 0


def _subset_metric(hard: np.ndarray, gold: np.ndarray, kind: str) -> float:
    if kind == "single":
        return accuracy(hard, np.argmax(gold, axis=1))
    return macro_f1_from_sets(hard, gold > 0.5)


def subset_accuracy(pruned: PredictionMatrix, unpruned: PredictionMatrix, gold: np.ndarray,
                    subset: np.ndarray | None = None, kind: str | None = None,
                    positive_threshold: float = 0.5) -> SubsetAccuracy:
    """Per-init mean and majority-vote scores on ``subset`` (a boolean row
    mask; None means every example)."""
    kind = kind or pruned.kind
    gold = np.asarray(gold)
    rows = np.ones(gold.shape[0], dtype=bool) if subset is None else np.asarray(subset, dtype=bool)
    n = int(rows.sum())
    if n == 0:
        return SubsetAccuracy(0)
    C = gold.shape[1]
    out = {}
    for label, pm in (("pruned", pruned), ("unpruned", unpruned)):
        hard = hard_predictions(pm.probs, kind, positive_threshold)
        per_init = [_subset_metric(h[rows], gold[rows], kind) for h in hard]
        maj = majority_vectors(hard, C, kind)
        out[f"{label}_per_init_mean"] = float(np.mean(per_init))
        out[f"{label}_majority_vote"] = _subset_metric(maj[rows], gold[rows], kind)
    return SubsetAccuracy(n, **out)


@dataclass
class PIEReport:
    condition: str
    split: str
    verdicts: list[PIEVerdict]
    pie_fraction: float
    distribution: ClassDistribution
    all_accuracy: SubsetAccuracy
    pie_accuracy: SubsetAccuracy


def build_report(pruned: PredictionMatrix, unpruned: PredictionMatrix, gold: np.ndarray,
                 train_frequencies: Sequence[int]) -> PIEReport:
    verdicts = detect_pies(pruned, unpruned)
    flags = pie_mask(verdicts)
    return PIEReport(pruned.condition, pruned.split, verdicts, pie_fraction(verdicts),
                     class_distribution(verdicts, gold, train_frequencies),
                     subset_accuracy(pruned, unpruned, gold, None),
                     subset_accuracy(pruned, unpruned, gold, flags))
