"""Experiment orchestration: N initialisations x (unpruned + pruner x threshold).

Run directory layout::

    <out>/<name>/config.json
    <out>/<name>/corpus/                       copy of the corpus used
    <out>/<name>/<condition>/init_<k>/checkpoint_epoch_<e>.bin
    <out>/<name>/<condition>/init_<k>/predictions_<split>.csv
    <out>/<name>/<condition>/init_<k>/run.json
    <out>/<name>/summary.csv

``condition`` is ``unpruned`` or ``<pruner_id>_<threshold>`` (e.g. ``RP-AI_0.99``).
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .nn import ModelSpec, TrainHyper, predict, save_checkpoint
from .prune import PrunerSpec, PrunerSpecError, mask_stats, run_pruner, train_unpruned

log = logging.getLogger(__name__)

UNPRUNED = "unpruned"
DATA_ENV = "PIELAB_DATA"  # root for relative corpus paths
PRED_SPLITS = ("train", "test")


class ConfigError(ValueError):
    pass


class MissingInputError(FileNotFoundError):
    pass


# ---------------------------------------------------------------- config

_TOP_KEYS = {"name", "corpus", "model", "pruners", "thresholds", "n_initializations", "epochs",
             "batch_size", "lr", "momentum", "base_seed", "encoding", "output_dir"}
_CORPUS_KEYS = {"path", "synthetic"}
_MODEL_KEYS = {"family", "embedding_dim", "hidden_dim"}
_ENCODING_KEYS = {"coverage", "min_freq", "max_tokens"}
_PRUNER_KEYS = {"scoring", "schedule", "tuning"}


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    corpus: dict = field(default_factory=lambda: {"synthetic": {}})
    model: dict = field(default_factory=lambda: {"family": "mlp", "embedding_dim": 32,
                                                 "hidden_dim": 32})
    pruners: list = field(default_factory=lambda: ["RP-AI", "MP-AI", "IMP-FT"])
    thresholds: list = field(default_factory=lambda: [0.2, 0.99])
    n_initializations: int = 5
    epochs: int = 4
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    base_seed: int = 0
    encoding: dict = field(default_factory=lambda: {"coverage": 0.85, "min_freq": 1,
                                                    "max_tokens": None})
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hyper(self) -> TrainHyper:
        return TrainHyper(self.lr, self.momentum, self.batch_size, self.epochs)

    def pruner_ids(self) -> list[str]:
        return [_pruner_id(p) for p in self.pruners]

    def conditions(self) -> list[tuple[str | None, float]]:
        return [(pid, float(t)) for pid in self.pruner_ids() for t in self.thresholds]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name


def _pruner_id(entry) -> str:
    if isinstance(entry, str):
        return entry
    return PrunerSpec(entry["scoring"], entry["schedule"], entry["tuning"], 0.5).canonical_id


def _strict(d: dict, allowed: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw JSON config and fill defaults. Unknown keys are errors."""
    _strict(raw, _TOP_KEYS, "config")
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key in ("model", "encoding"):
            merged = dict(getattr(cfg, key))
            _strict(value, _MODEL_KEYS if key == "model" else _ENCODING_KEYS, key)
            merged.update(value)
            setattr(cfg, key, merged)
        else:
            setattr(cfg, key, value)

    _strict(cfg.corpus, _CORPUS_KEYS, "corpus")
    if len(cfg.corpus) != 1:
        raise ConfigError("corpus needs exactly one of 'path' or 'synthetic'")
    if "synthetic" in cfg.corpus:
        syn = cfg.corpus["synthetic"]
        allowed = {f.name for f in dataclasses.fields(corpus_mod.SyntheticSpec)}
        _strict(syn, allowed, "corpus.synthetic")
        try:
            spec = corpus_mod.SyntheticSpec(**{k: tuple(v) if isinstance(v, list) else v
                                               for k, v in syn.items()})
            spec.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synthetic corpus: {exc}") from None
        cfg.corpus = {"synthetic": {k: list(v) if isinstance(v, tuple) else v
                                    for k, v in dataclasses.asdict(spec).items()}}
    else:
        path = Path(cfg.corpus["path"])
        root = os.environ.get(DATA_ENV)
        if root and not path.is_absolute() and not path.exists():
            path = Path(root) / path
            cfg.corpus = {"path": str(path)}
        if not (path / "manifest.json").exists():
            raise ConfigError(f"missing corpus: no manifest.json under {path}")

    if cfg.model["family"] not in ("mlp", "bilstm"):
        raise ConfigError(f"unknown model family {cfg.model['family']!r}")
    for k in ("embedding_dim", "hidden_dim"):
        if not isinstance(cfg.model[k], int) or cfg.model[k] < 1:
            raise ConfigError(f"model.{k} must be a positive integer")
    if not isinstance(cfg.pruners, list) or not cfg.pruners:
        raise ConfigError("pruners must be a non-empty list")
    for entry in cfg.pruners:
        try:
            if isinstance(entry, str):
                PrunerSpec.from_id(entry, 0.5)
            else:
                _strict(entry, _PRUNER_KEYS, "pruner")
                PrunerSpec(entry.get("scoring"), entry.get("schedule"), entry.get("tuning"), 0.5)
        except PrunerSpecError as exc:
            raise ConfigError(f"invalid pruner {entry!r}: {exc}") from None
    if len(set(cfg.pruner_ids())) != len(cfg.pruners):
        raise ConfigError("duplicate pruner in config")
    if not isinstance(cfg.thresholds, list) or not cfg.thresholds:
        raise ConfigError("thresholds must be a non-empty list")
    for t in cfg.thresholds:
        if not isinstance(t, (int, float)) or not 0 < t < 1:
            raise ConfigError(f"threshold {t!r} outside (0, 1)")
    if len(set(cfg.thresholds)) != len(cfg.thresholds):
        raise ConfigError("duplicate threshold in config")
    cfg.thresholds = [float(t) for t in cfg.thresholds]
    if not isinstance(cfg.n_initializations, int) or cfg.n_initializations < 1:
        raise ConfigError("n_initializations must be an integer >= 1")
    try:
        cfg.hyper
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    enc = cfg.encoding
    if not 0 < enc["coverage"] <= 1:
        raise ConfigError("encoding.coverage must lie in (0, 1]")
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"config file {path} not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(raw)


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- corpus in a run dir


def materialize_corpus(cfg: ExperimentConfig, run_dir: Path) -> Path:
    dest = run_dir / "corpus"
    if "synthetic" in cfg.corpus:
        syn = {k: tuple(v) if isinstance(v, list) else v
               for k, v in cfg.corpus["synthetic"].items()}
        splits = corpus_mod.generate_synthetic_corpus(corpus_mod.SyntheticSpec(**syn))
    else:
        splits = corpus_mod.load_corpus(cfg.corpus["path"])
    corpus_mod.save_corpus(splits, dest)
    return dest


@functools.lru_cache(maxsize=4)
def _load_encoded(run_dir: str, coverage: float, min_freq: int, max_tokens):
    splits = corpus_mod.load_corpus(Path(run_dir) / "corpus")
    return splits, corpus_mod.encode_corpus(splits, coverage, min_freq, max_tokens)


def load_run_corpus(run_dir) -> tuple[corpus_mod.CorpusSplits, corpus_mod.EncodedCorpus]:
    """The corpus copy of a run together with its encoding (cached per process)."""
    run_dir = Path(run_dir).resolve()
    cfg = load_run_config(run_dir)
    enc = cfg.encoding
    return _load_encoded(str(run_dir), float(enc["coverage"]), int(enc["min_freq"]),
                         enc["max_tokens"])


def load_run_config(run_dir) -> ExperimentConfig:
    path = Path(run_dir) / "config.json"
    if not path.exists():
        raise MissingInputError(f"{run_dir} is not a run directory (no config.json)")
    return config_from_dict(json.loads(path.read_text(encoding="utf-8")))


def model_spec_for(cfg: ExperimentConfig, encoded: corpus_mod.EncodedCorpus) -> ModelSpec:
    return ModelSpec(cfg.model["family"], encoded.vocab.size, cfg.model["embedding_dim"],
                     cfg.model["hidden_dim"], encoded.label_space.num_classes,
                     encoded.label_space.kind)


# ---------------------------------------------------------------- running


def condition_name(pruner_id: str | None, threshold: float | None) -> str:
    if pruner_id is None:
        return UNPRUNED
    return f"{pruner_id}_{threshold:g}"


def parse_condition(name: str) -> tuple[str | None, float]:
    if name == UNPRUNED:
        return None, 0.0
    pid, _, t = name.rpartition("_")
    return pid, float(t)


def _predictions_csv(example_ids: np.ndarray, probs: np.ndarray) -> str:
    buf = io.StringIO()
    C = probs.shape[1]
    buf.write(",".join(["example_id"] + [f"p_class_{c}" for c in range(C)]) + "\n")
    for eid, row in zip(example_ids.tolist(), probs.tolist()):
        buf.write(str(eid) + "," + ",".join(f"{v:.9g}" for v in row) + "\n")
    return buf.getvalue()


def _run_unit(run_dir: str, pruner_id: str | None, threshold: float, k: int) -> str:
    run_path = Path(run_dir)
    cfg = load_run_config(run_path)
    _, encoded = load_run_corpus(run_path)
    mspec = model_spec_for(cfg, encoded)
    seed = cfg.base_seed + k
    out = run_path / condition_name(pruner_id, threshold) / f"init_{k}"
    out.mkdir(parents=True, exist_ok=True)

    def on_epoch(ckpt):
        save_checkpoint(out / f"checkpoint_epoch_{ckpt.epoch}.bin", ckpt)

    extra = {"condition": condition_name(pruner_id, threshold), "init": k}
    if pruner_id is None:
        result = train_unpruned(mspec, seed, encoded.train, cfg.hyper, on_epoch, extra)
    else:
        pspec = PrunerSpec.from_id(pruner_id, threshold)
        result = run_pruner(pspec, mspec, seed, encoded.train, cfg.hyper, on_epoch=on_epoch,
                            extra=extra)
    for split in PRED_SPLITS:
        data = encoded.split(split)
        probs = predict(result.params, data)
        (out / f"predictions_{split}.csv").write_text(_predictions_csv(data.example_ids, probs),
                                                      encoding="utf-8")
    stats = mask_stats(result.mask, result.params)
    meta = {
        "condition": condition_name(pruner_id, threshold),
        "pruner_id": pruner_id,
        "threshold": threshold,
        "init": k,
        "seed": seed,
        "epochs": result.epochs,
        "epoch_budget": "4N" if pruner_id and PrunerSpec.from_id(pruner_id, threshold).schedule == "iterative" else "N",
        "events": [dataclasses.asdict(e) for e in result.events],
        "train_losses": result.losses,
        "nominal_pruned_fraction": stats["nominal_pruned_fraction"],
        "effective_pruned_fraction": stats["effective_pruned_fraction"],
        "remaining_parameters": stats["remaining_parameters"],
    }
    (out / "run.json").write_text(_json_dump(meta), encoding="utf-8")
    return str(out)


def plan_units(cfg: ExperimentConfig) -> list[tuple[str | None, float, int]]:
    units = [(None, 0.0, k) for k in range(cfg.n_initializations)]
    for pid, t in cfg.conditions():
        units += [(pid, t, k) for k in range(cfg.n_initializations)]
    return units


def prepare_run_dir(cfg: ExperimentConfig, force: bool = False) -> Path:
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    # output_dir says where the run lives, not what it is; leave it out so
    # a run directory can be moved or copied and resumed
    stored = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    cfg_text = _json_dump(stored)
    existing = run_dir / "config.json"
    if existing.exists() and existing.read_text(encoding="utf-8") != cfg_text and not force:
        raise ConfigError(f"{run_dir} already holds a different config; pick another name or force")
    existing.write_text(cfg_text, encoding="utf-8")
    materialize_corpus(cfg, run_dir)
    return run_dir


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, force: bool = False,
                   include_pruned: bool = True) -> Path:
    """Train every unit of ``cfg`` and write the run directory.

    Units whose ``run.json`` already exists are skipped unless ``force``.
    ``jobs`` > 1 spreads units over worker processes; outputs do not depend on it.
    """
    run_dir = prepare_run_dir(cfg, force)
    units = plan_units(cfg)
    if not include_pruned:
        units = [u for u in units if u[0] is None]
    pending = [u for u in units
            if force or not (run_dir / condition_name(u[0], u[1]) / f"init_{u[2]}" / "run.json").exists()]
    log.info("%s: %d of %d model runs to train", run_dir, len(pending), len(units))
    if jobs <= 1 or len(pending) <= 1:
        for u in pending:
            _run_unit(str(run_dir), *u)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_unit, str(run_dir), *u) for u in pending]
            for f in futures:
                f.result()
    return run_dir


# ---------------------------------------------------------------- metrics


def accuracy(hard_preds, gold) -> float:
    hard_preds, gold = np.asarray(hard_preds), np.asarray(gold)
    if hard_preds.shape != gold.shape:
        raise ValueError(f"length mismatch: {hard_preds.shape} predictions vs {gold.shape} labels")
    if gold.size == 0:
        raise ValueError("accuracy of an empty split is undefined")
    return float(np.mean(hard_preds == gold))


def macro_f1(prob_matrix, gold_sets, positive_threshold: float = 0.5) -> float:
    """Macro F1 over classes. ``gold_sets`` is a multi-hot matrix; a class with
    no gold and no predicted positives scores 0."""
    pred = np.asarray(prob_matrix) > positive_threshold
    return macro_f1_from_sets(pred, np.asarray(gold_sets) > 0.5)


def macro_f1_from_sets(pred: np.ndarray, gold: np.ndarray) -> float:
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gold.shape}")
    tp = np.sum(pred & gold, axis=0)
    fp = np.sum(pred & ~gold, axis=0)
    fn = np.sum(~pred & gold, axis=0)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return float(f1.mean())


def hard_predictions(probs: np.ndarray, kind: str, positive_threshold: float = 0.5) -> np.ndarray:
    """argmax (first index on ties) for single-label, thresholded sets for multi-label."""
    if kind == "single":
        return np.argmax(probs, axis=-1)
    return probs > positive_threshold


def metric_name(kind: str) -> str:
    return "accuracy" if kind == "single" else "macro_f1"


def score_predictions(probs: np.ndarray, labels: np.ndarray, kind: str) -> float:
    if kind == "single":
        return accuracy(np.argmax(probs, axis=1), np.argmax(labels, axis=1))
    return macro_f1(probs, labels)


@dataclass
class PredictionMatrix:
    condition: str
    split: str
    example_ids: np.ndarray
    probs: np.ndarray  # (N, n, C)
    kind: str = "single"

    @property
    def n_initializations(self) -> int:
        return self.probs.shape[0]

    def hard(self, positive_threshold: float = 0.5) -> np.ndarray:
        return hard_predictions(self.probs, self.kind, positive_threshold)


def read_predictions(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise MissingInputError(f"missing prediction file {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    return data[:, 0].astype(np.int64), data[:, 1:].astype(np.float32)


def load_prediction_matrix(run_dir, condition: str, split: str) -> PredictionMatrix:
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir)
    kind = _corpus_kind(run_dir)
    mats, ids = [], None
    for k in range(cfg.n_initializations):
        path = run_dir / condition / f"init_{k}" / f"predictions_{split}.csv"
        if not path.exists():
            raise MissingInputError(f"missing predictions for init_{k} of {condition} ({path})")
        eids, probs = read_predictions(path)
        if ids is None:
            ids = eids
        elif not np.array_equal(ids, eids):
            raise ValueError(f"example ids differ between initializations of {condition}")
        mats.append(probs)
    return PredictionMatrix(condition, split, ids, np.stack(mats), kind)


def _corpus_kind(run_dir: Path) -> str:
    manifest = Path(run_dir) / "corpus" / "manifest.json"
    if not manifest.exists():
        raise MissingInputError(f"missing corpus copy in {run_dir}")
    return json.loads(manifest.read_text(encoding="utf-8")).get("kind", "single")


def gold_labels(run_dir, split: str) -> tuple[np.ndarray, np.ndarray]:
    """(example_ids, multi-hot label matrix) for a split of the run's corpus."""
    splits = corpus_mod.load_corpus(Path(run_dir) / "corpus")
    exs = splits.split(split)
    ids = np.array([e.id for e in exs], dtype=np.int64)
    labels = np.stack([corpus_mod.label_vector(e.labels, splits.label_space) for e in exs])
    return ids, labels


def run_conditions(run_dir) -> list[str]:
    cfg = load_run_config(run_dir)
    return [UNPRUNED] + [condition_name(p, t) for p, t in cfg.conditions()]


def fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class MetricsSummary:
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["condition", "pruner_id", "threshold", "split", "metric", "mean", "std"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["condition"], r["pruner_id"], fmt(r["threshold"]), r["split"], r["metric"],
                        fmt(r["mean"]), fmt(r["std"])])
        return buf.getvalue()


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2 or np.all(v == v[0]):
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1))


def summarize(run_dir, write: bool = True) -> MetricsSummary:
    run_dir = Path(run_dir)
    kind = _corpus_kind(run_dir)
    rows = []
    for split in PRED_SPLITS:
        ids, labels = gold_labels(run_dir, split)
        for cond in run_conditions(run_dir):
            pm = load_prediction_matrix(run_dir, cond, split)
            if not np.array_equal(pm.example_ids, ids):
                raise ValueError(f"{cond}/{split}: predictions do not align with the corpus")
            scores = [score_predictions(p, labels, kind) for p in pm.probs]
            mean, std = mean_std(scores)
            pid, t = parse_condition(cond)
            rows.append({"condition": "unpruned" if pid is None else "pruned",
                         "pruner_id": pid or "none", "threshold": t, "split": split,
                         "metric": metric_name(kind), "mean": mean, "std": std})
    summary = MetricsSummary(rows)
    if write:
        (run_dir / "summary.csv").write_text(summary.to_csv(), encoding="utf-8")
    return summary
