"""EL2N influence scores from training checkpoints and percentile binning."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .harness import MissingInputError, UNPRUNED, fmt, load_run_config, load_run_corpus
from .nn import load_checkpoint, predict

N_BINS = 20


def el2n(p, y) -> float | np.ndarray:
    """Euclidean distance between predicted probabilities and the target
    vector, along the last axis (so it also works row-wise on matrices)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: probabilities {p.shape} vs target {y.shape}")
    d = np.sqrt(np.sum((p - y) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def monitor_start_epoch(total_epochs: int) -> int:
    """First epoch past 30% of training (1-based), never before epoch 1."""
    if total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    # e > 0.3 * total  <=>  10 e > 3 total, kept in integers
    return max(1, (3 * total_epochs) // 10 + 1)


@dataclass
class EL2NProfile:
    example_ids: np.ndarray
    scores: np.ndarray
    condition: str = UNPRUNED
    split: str = "train"
    epochs: dict = field(default_factory=dict)  # init -> [first, last] monitored epoch
    n_initializations: int = 0


def profile(run_dir, condition: str = UNPRUNED, split: str = "train") -> EL2NProfile:
    """Mean EL2N over the monitored end-of-epoch checkpoints of each
    initialisation, then averaged over initialisations."""
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir)
    _, encoded = load_run_corpus(run_dir)
    data = encoded.split(split)
    targets = data.labels
    total = np.zeros(len(data), dtype=np.float64)
    epochs = {}
    for k in range(cfg.n_initializations):
        init_dir = run_dir / condition / f"init_{k}"
        meta_path = init_dir / "run.json"
        if not meta_path.exists():
            raise MissingInputError(f"missing run metadata for init_{k} of {condition} ({meta_path})")
        n_epochs = json.loads(meta_path.read_text(encoding="utf-8"))["epochs"]
        start = monitor_start_epoch(n_epochs)
        acc = np.zeros(len(data), dtype=np.float64)
        for e in range(start, n_epochs + 1):
            path = init_dir / f"checkpoint_epoch_{e}.bin"
            if not path.exists():
                raise MissingInputError(f"missing checkpoint {path}")
            acc += el2n(predict(load_checkpoint(path).params, data), targets)
        total += acc / (n_epochs - start + 1)
        epochs[k] = [start, n_epochs]
    return EL2NProfile(data.example_ids.copy(), total / cfg.n_initializations, condition, split,
                       epochs, cfg.n_initializations)


@dataclass
class InfluenceBins:
    bins: list[np.ndarray]  # example ids, bin 0 = lowest scores
    pie_fraction: np.ndarray | None = None

    def sizes(self) -> list[int]:
        return [b.size for b in self.bins]

    def bin_index(self) -> dict[int, int]:
        return {int(eid): i for i, b in enumerate(self.bins) for eid in b}


def bins(scores: Sequence[float] | EL2NProfile, example_ids: Sequence[int] | None = None,
         k: int = N_BINS) -> InfluenceBins:
    """Split examples into ``k`` contiguous groups of ascending score.

    Ties are ordered by example id. Sizes are floor(n / k), the first n mod k
    bins holding one extra example.
    """
    if isinstance(scores, EL2NProfile):
        scores, example_ids = scores.scores, scores.example_ids
    s = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(example_ids, dtype=np.int64)
    if s.shape != ids.shape:
        raise ValueError("scores and example ids differ in length")
    n = s.size
    if n < k:
        raise ValueError(f"need at least {k} examples for {k} bins, got {n}")
    order = np.lexsort((ids, s))
    base, extra = divmod(n, k)
    out, start = [], 0
    for b in range(k):
        size = base + (1 if b < extra else 0)
        out.append(ids[order[start:start + size]])
        start += size
    return InfluenceBins(out)


def pie_fraction_per_bin(influence_bins: InfluenceBins, pie_ids: Sequence[int],
                         pie_flags: Sequence[bool]) -> np.ndarray:
    """Fraction of PIEs in each bin. PIE verdicts must cover the same split."""
    flags = dict(zip(np.asarray(pie_ids).tolist(), np.asarray(pie_flags, dtype=bool).tolist()))
    binned = {int(e) for b in influence_bins.bins for e in b}
    if binned != set(flags):
        raise ValueError("PIE verdicts and influence bins cover different example sets")
    frac = np.array([np.mean([flags[int(e)] for e in b]) for b in influence_bins.bins])
    influence_bins.pie_fraction = frac
    return frac


def influence_csv(prof: EL2NProfile, influence_bins: InfluenceBins) -> str:
    where = influence_bins.bin_index()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example_id", "el2n", "bin_index"])
    for eid, s in zip(prof.example_ids.tolist(), prof.scores.tolist()):
        w.writerow([eid, fmt(s), where[eid] + 1])
    return buf.getvalue()


def bins_csv(influence_bins: InfluenceBins) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_index", "size", "pie_fraction"])
    for i, b in enumerate(influence_bins.bins):
        frac = "" if influence_bins.pie_fraction is None else fmt(influence_bins.pie_fraction[i])
        w.writerow([i + 1, b.size, frac])
    return buf.getvalue()
