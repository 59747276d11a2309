"""Run-directory analyses: PIE tables, influence bins and readability ratios.

Each function reads only the run directory and writes CSVs back into it, so
rerunning is byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

import numpy as np

from . import influence, pie
from .corpus import class_frequencies, load_corpus
from .harness import (UNPRUNED, fmt, gold_labels, load_prediction_matrix, metric_name,
                      parse_condition, run_conditions)
from .nn import NumericError
from .readability import ReadabilityTable, ratio_report, ratios_csv

log = logging.getLogger(__name__)

PIE_SPLITS = ("test", "train")
OCCURRENCE_SPLIT = "test"
INFLUENCE_SPLIT = "train"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(x) -> str:
    return pie.NO_PIES if x is None else fmt(x)


def _check_finite(pm) -> None:
    if not np.all(np.isfinite(pm.probs)):
        raise NumericError(f"NaN or Inf in predictions of {pm.condition}/{pm.split}")


def pruned_conditions(run_dir) -> list[str]:
    return [c for c in run_conditions(run_dir) if c != UNPRUNED]


def verdicts_for(run_dir, condition: str, split: str) -> list[pie.PIEVerdict]:
    pm = load_prediction_matrix(run_dir, condition, split)
    un = load_prediction_matrix(run_dir, UNPRUNED, split)
    _check_finite(pm)
    _check_finite(un)
    return pie.detect_pies(pm, un)


def run_pies(run_dir) -> list[Path]:
    """PIE verdicts, subset accuracies and class distributions for every
    pruned condition on the train and test splits."""
    run_dir = Path(run_dir)
    splits = load_corpus(run_dir / "corpus")
    freqs = class_frequencies(splits.train, splits.label_space.num_classes)
    kind = splits.label_space.kind
    metric = metric_name(kind)
    bundle_rows, summary_rows, dist_rows = [], [], []
    written = []
    for split in PIE_SPLITS:
        _, gold = gold_labels(run_dir, split)
        un = load_prediction_matrix(run_dir, UNPRUNED, split)
        _check_finite(un)
        for cond in pruned_conditions(run_dir):
            pid, t = parse_condition(cond)
            pm = load_prediction_matrix(run_dir, cond, split)
            _check_finite(pm)
            report = pie.build_report(pm, un, gold, freqs)
            path = run_dir / cond / f"pies_{split}.csv"
            path.write_text(pie.pies_csv(report.verdicts), encoding="utf-8")
            written.append(path)
            for line in pie.pies_csv(report.verdicts).splitlines()[1:]:
                bundle_rows.append([pid, fmt(t), split, *next(csv.reader([line]))])
            a, p = report.all_accuracy, report.pie_accuracy
            summary_rows.append([
                pid, fmt(t), split, fmt(report.pie_fraction), sum(v.is_pie for v in report.verdicts),
                len(report.verdicts), metric,
                _cell(a.pruned_per_init_mean), _cell(a.unpruned_per_init_mean),
                _cell(a.pruned_majority_vote), _cell(a.unpruned_majority_vote),
                _cell(p.pruned_per_init_mean), _cell(p.unpruned_per_init_mean),
                _cell(p.pruned_majority_vote), _cell(p.unpruned_majority_vote),
            ])
            d = report.distribution
            for rank, (c, fa, fp) in enumerate(zip(d.classes, d.all_fraction, d.pie_fraction)):
                dist_rows.append([pid, fmt(t), split, rank, int(c), int(freqs[c]), fmt(fa), fmt(fp)])
    outputs = {
        "pies.csv": _csv(bundle_rows, ["pruner_id", "threshold", "split", "example_id", "is_pie",
                                       "pruned_majority", "unpruned_majority"]),
        "pie_summary.csv": _csv(summary_rows, [
            "pruner_id", "threshold", "split", "pie_fraction", "n_pies", "n_examples", "metric",
            "all_pruned_per_init_mean", "all_unpruned_per_init_mean",
            "all_pruned_majority_vote", "all_unpruned_majority_vote",
            "pie_pruned_per_init_mean", "pie_unpruned_per_init_mean",
            "pie_pruned_majority_vote", "pie_unpruned_majority_vote"]),
        "class_distribution.csv": _csv(dist_rows, [
            "pruner_id", "threshold", "split", "rank", "class_index", "train_frequency",
            "all_fraction", "pie_fraction"]),
    }
    for name, text in outputs.items():
        (run_dir / name).write_text(text, encoding="utf-8")
        written.append(run_dir / name)
    return written


def run_influence(run_dir, condition: str = UNPRUNED, k: int = influence.N_BINS) -> list[Path]:
    """EL2N profile of ``condition`` on the train split, binned, with the
    train-split PIE fraction per bin for every pruned condition."""
    run_dir = Path(run_dir)
    prof = influence.profile(run_dir, condition, INFLUENCE_SPLIT)
    if not np.all(np.isfinite(prof.scores)):
        raise NumericError("NaN in EL2N scores")
    ib = influence.bins(prof, k=k)
    (run_dir / "influence.csv").write_text(influence.influence_csv(prof, ib), encoding="utf-8")
    rows = []
    written = [run_dir / "influence.csv"]
    for cond in pruned_conditions(run_dir):
        pid, t = parse_condition(cond)
        verdicts = verdicts_for(run_dir, cond, INFLUENCE_SPLIT)
        ids = [v.example_id for v in verdicts]
        influence.pie_fraction_per_bin(ib, ids, pie.pie_mask(verdicts))
        path = run_dir / cond / "influence_bins.csv"
        path.write_text(influence.bins_csv(ib), encoding="utf-8")
        written.append(path)
        for i, b in enumerate(ib.bins):
            rows.append([pid, fmt(t), i + 1, b.size, fmt(ib.pie_fraction[i])])
    (run_dir / "influence_bins.csv").write_text(
        _csv(rows, ["pruner_id", "threshold", "bin_index", "size", "pie_fraction"]),
        encoding="utf-8")
    written.append(run_dir / "influence_bins.csv")
    return written


def run_readability(run_dir, split: str = OCCURRENCE_SPLIT, easy_list=None) -> list[Path]:
    run_dir = Path(run_dir)
    splits = load_corpus(run_dir / "corpus")
    examples = splits.split(split)
    table = ReadabilityTable.from_texts([e.id for e in examples], [e.text for e in examples],
                                        easy_list)
    by_condition = {}
    written = []
    for cond in pruned_conditions(run_dir):
        verdicts = verdicts_for(run_dir, cond, split)
        if [v.example_id for v in verdicts] != table.example_ids.tolist():
            raise ValueError(f"{cond}: PIE verdicts do not align with the {split} texts")
        flags = pie.pie_mask(verdicts)
        by_condition[parse_condition(cond)] = flags
        path = run_dir / cond / "readability.csv"
        path.write_text(table.to_csv(flags), encoding="utf-8")
        written.append(path)
    (run_dir / "readability.csv").write_text(table.to_csv(), encoding="utf-8")
    rows = ratio_report(table, by_condition)
    (run_dir / "readability_ratios.csv").write_text(ratios_csv(rows), encoding="utf-8")
    written += [run_dir / "readability.csv", run_dir / "readability_ratios.csv"]
    return written


def analyze(run_dir) -> None:
    """summary + PIEs + influence + readability, in that order."""
    from .harness import summarize

    summarize(run_dir)
    run_pies(run_dir)
    run_influence(run_dir)
    run_readability(run_dir)
