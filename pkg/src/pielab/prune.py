"""Unstructured, layer-uniform pruning: scoring, masks and schedules.

Eight methods combine a scoring rule (magnitude, impact, random) with a
schedule (at initialisation, or iterative with fine-tuning or weight
rewinding). Embeddings, biases and the classifier are never pruned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .nn import (Checkpoint, ParamSet, TrainHyper, fresh_state, init_params, loss_and_grad,
                 train_epoch)
from .nn.params import Layer

log = logging.getLogger(__name__)

SCORINGS = ("magnitude", "impact", "random")
SCHEDULES = ("at_init", "iterative")
TUNINGS = ("finetune", "rewind", "none")
THRESHOLDS = (0.20, 0.50, 0.70, 0.90, 0.99)
ITERATIONS = 3
IMPACT_SAMPLE = 100

CANONICAL = {
    "IMP-WR": ("magnitude", "iterative", "rewind"),
    "IMP-FT": ("magnitude", "iterative", "finetune"),
    "MP-AI": ("magnitude", "at_init", "none"),
    "IIBP-WR": ("impact", "iterative", "rewind"),
    "IIBP-FT": ("impact", "iterative", "finetune"),
    "IBP-AI": ("impact", "at_init", "none"),
    "IRP-FT": ("random", "iterative", "finetune"),
    "RP-AI": ("random", "at_init", "none"),
}
_BY_PARTS = {v: k for k, v in CANONICAL.items()}


class PrunerSpecError(ValueError):
    pass


@dataclass(frozen=True)
class PrunerSpec:
    scoring: str
    schedule: str
    tuning: str
    target: float

    def __post_init__(self):
        if self.scoring not in SCORINGS:
            raise PrunerSpecError(f"unknown scoring {self.scoring!r}")
        if self.schedule not in SCHEDULES:
            raise PrunerSpecError(f"unknown schedule {self.schedule!r}")
        if self.tuning not in TUNINGS:
            raise PrunerSpecError(f"unknown tuning {self.tuning!r}")
        if self.scoring == "random" and self.tuning == "rewind":
            raise PrunerSpecError("random scoring cannot be combined with weight rewinding")
        if self.schedule == "at_init" and self.tuning != "none":
            raise PrunerSpecError("pruning at initialization takes no tuning strategy")
        if self.schedule == "iterative" and self.tuning == "none":
            raise PrunerSpecError("iterative pruning needs tuning 'finetune' or 'rewind'")
        if not 0.0 < self.target < 1.0:
            raise PrunerSpecError(f"target fraction must lie in (0, 1), got {self.target}")

    @property
    def canonical_id(self) -> str:
        return _BY_PARTS[(self.scoring, self.schedule, self.tuning)]

    @classmethod
    def from_id(cls, canonical_id: str, target: float) -> "PrunerSpec":
        try:
            parts = CANONICAL[canonical_id]
        except KeyError:
            raise PrunerSpecError(f"unknown pruner id {canonical_id!r}; "
                                  f"expected one of {sorted(CANONICAL)}") from None
        return cls(*parts, target)


@dataclass
class PruneMask:
    """Keep-bits (True = active) per prunable layer plus the target fraction."""

    layers: dict[str, np.ndarray] = field(default_factory=dict)
    target: float | None = None

    @classmethod
    def full(cls, params: ParamSet, target: float | None = None) -> "PruneMask":
        return cls({n: np.ones(params[n].shape, dtype=bool) for n in params.prunable_names()},
                   target)

    def copy(self) -> "PruneMask":
        return PruneMask({n: m.copy() for n, m in self.layers.items()}, self.target)

    def get(self, name: str):
        return self.layers.get(name)

    def apply(self, params: ParamSet) -> ParamSet:
        for name, keep in self.layers.items():
            params[name][~keep] = 0.0
        return params

    def pruned_count(self) -> int:
        return int(sum(m.size - np.count_nonzero(m) for m in self.layers.values()))

    def is_subset_of(self, other: "PruneMask") -> bool:
        """True when every position active here is also active in ``other``."""
        return all(not np.any(self.layers[n] & ~other.layers[n]) for n in self.layers)


# ---------------------------------------------------------------- scoring


def sample_rows(n: int, size: int, seed: int) -> np.ndarray:
    if n < size:
        log.warning("train split has %d examples, fewer than the %d requested; using all", n, size)
        return np.arange(n)
    rng = np.random.default_rng([seed, 0x1A7])
    return np.sort(rng.choice(n, size=size, replace=False))


def score(params: ParamSet, scoring: str, train_sample=None, seed: int = 0,
          sample_size: int = IMPACT_SAMPLE) -> dict[str, np.ndarray]:
    """Per-weight saliency for every prunable layer.

    ``train_sample`` is only used for impact scoring; it may be a whole split,
    from which ``sample_size`` rows are drawn without replacement.
    """
    names = params.prunable_names()
    if scoring == "magnitude":
        return {n: np.abs(params[n]).astype(np.float64) for n in names}
    if scoring == "random":
        rng = np.random.default_rng([seed, 0x4A4D])
        return {n: rng.random(params[n].shape) for n in names}
    if scoring == "impact":
        if train_sample is None:
            raise ValueError("impact scoring needs training examples")
        rows = sample_rows(len(train_sample), sample_size, seed)
        batch = train_sample.subset(rows)
        _, grads = loss_and_grad(params, batch)
        # loss is a batch mean; the summed per-example gradient is len * mean
        return {n: np.abs(params[n].astype(np.float64) * grads[n].astype(np.float64) * len(rows))
                for n in names}
    raise ValueError(f"unknown scoring {scoring!r}")


# ---------------------------------------------------------------- mask updates


def per_iteration_fraction(target: float, iterations: int = ITERATIONS) -> float:
    """Fraction r of remaining weights to drop per step so that ``iterations``
    steps remove ``target`` overall: (1 - r) ** iterations == 1 - target."""
    if not 0.0 <= target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target}")
    return 1.0 - (1.0 - target) ** (1.0 / iterations)


def _count(r: float, active: int) -> int:
    # tolerance keeps 0.7 * 10 = 7.000000000000001 and 0.29 * 100 = 28.999999999999996 exact
    return int(math.floor(r * active + 1e-9))


def prune_step(mask: PruneMask, scores: dict[str, np.ndarray], r: float) -> PruneMask:
    """Deactivate floor(r * active) lowest-scoring active weights per layer.

    Ties go to the lower flat index.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    out = mask.copy()
    for name, keep in out.layers.items():
        flat = keep.ravel()
        active = np.flatnonzero(flat)
        k = _count(r, active.size)
        if k == 0:
            continue
        s = np.asarray(scores[name]).ravel()[active]
        order = np.argsort(s, kind="stable")
        flat[active[order[:k]]] = False
    return out


def rewind_weights(params: ParamSet, initial: ParamSet, mask: PruneMask) -> ParamSet:
    """Fresh parameter set holding ``initial`` values with pruned positions zeroed."""
    if params.names() != initial.names():
        raise ValueError("parameter sets have different layers")
    layers = {}
    for name, layer in params.layers.items():
        init = initial[name]
        if init.shape != layer.value.shape:
            raise ValueError(f"shape mismatch for {name}: {init.shape} vs {layer.value.shape}")
        value = init.copy()
        keep = mask.get(name)
        if keep is not None:
            value[~keep] = 0.0
        layers[name] = Layer(value, layer.role, layer.prunable)
    return ParamSet(params.spec, layers)


def mask_stats(mask: PruneMask, params: ParamSet) -> dict:
    per_layer = []
    pruned_total = 0
    prunable_total = 0
    for name, layer in params.layers.items():
        keep = mask.get(name)
        pruned = 0 if keep is None else int(keep.size - np.count_nonzero(keep))
        pruned_total += pruned
        if layer.prunable:
            prunable_total += layer.value.size
        per_layer.append({"layer": name, "role": layer.role, "prunable": layer.prunable,
                          "size": int(layer.value.size), "pruned": pruned,
                          "pruned_fraction": pruned / layer.value.size if layer.value.size else 0.0})
    total = params.num_params()
    return {
        "nominal_pruned_fraction": pruned_total / prunable_total if prunable_total else 0.0,
        "effective_pruned_fraction": pruned_total / total if total else 0.0,
        "remaining_parameters": total - pruned_total,
        "per_layer": per_layer,
    }


# ---------------------------------------------------------------- schedules


@dataclass
class PruneEvent:
    kind: str  # "prune" or "rewind"
    after_epoch: int
    pruned_fraction: float


@dataclass
class PrunerResult:
    params: ParamSet
    mask: PruneMask
    epochs: int
    events: list[PruneEvent]
    losses: list[float]


EpochHook = Callable[[Checkpoint], None]
EventHook = Callable[[str, int, ParamSet, PruneMask, object], None]


def run_pruner(spec: PrunerSpec, model_spec, seed: int, train_split, hyper: TrainHyper,
               on_epoch: EpochHook | None = None, on_event: EventHook | None = None,
               extra: dict | None = None) -> PrunerResult:
    """Train and prune one initialisation.

    at_init: score the initial weights, prune straight to the target, train
    ``hyper.epochs`` epochs. iterative: train N epochs, then three rounds of
    score -> prune r of the remaining weights -> (rewind) -> train N epochs,
    4N epochs in total. ``on_epoch`` receives a checkpoint after every epoch
    (epoch 0 is the untouched initialisation); ``on_event`` sees every prune
    and rewind with the live params, mask and optimizer state.
    """
    N = hyper.epochs
    params = init_params(model_spec, seed)
    initial = params.copy()
    mask = PruneMask.full(params, spec.target)
    state = fresh_state(params)
    rng = np.random.default_rng([seed, 0x7A1])
    events: list[PruneEvent] = []
    losses: list[float] = []
    epoch = 0
    meta = {"pruner_id": spec.canonical_id, "target": spec.target, "seed": seed, **(extra or {})}

    def emit_epoch():
        if on_epoch is not None:
            on_epoch(Checkpoint(model_spec, epoch, params, mask, state,
                                rng.bit_generator.state, dict(meta)))

    def do_prune(r: float, score_seed: int):
        nonlocal mask
        scores = score(params, spec.scoring, train_split, seed=score_seed)
        mask = prune_step(mask, scores, r)
        mask.target = spec.target
        mask.apply(params)
        for name, keep in mask.layers.items():
            state.velocity[name][~keep] = 0.0
        frac = mask_stats(mask, params)["nominal_pruned_fraction"]
        events.append(PruneEvent("prune", epoch, frac))
        if on_event is not None:
            on_event("prune", epoch, params, mask, state)

    def train(n_epochs: int):
        nonlocal epoch
        for _ in range(n_epochs):
            losses.append(train_epoch(params, train_split, mask, state, hyper, rng))
            epoch += 1
            emit_epoch()

    emit_epoch()
    if spec.schedule == "at_init":
        do_prune(spec.target, seed)
        train(N)
    else:
        r = per_iteration_fraction(spec.target)
        train(N)
        for it in range(ITERATIONS):
            do_prune(r, seed * 1000 + it + 1)
            if spec.tuning == "rewind":
                params = rewind_weights(params, initial, mask)
                state = fresh_state(params)
                events.append(PruneEvent("rewind", epoch, events[-1].pruned_fraction))
                if on_event is not None:
                    on_event("rewind", epoch, params, mask, state)
            train(N)
    return PrunerResult(params, mask, epoch, events, losses)


def train_unpruned(model_spec, seed: int, train_split, hyper: TrainHyper,
                   on_epoch: EpochHook | None = None, extra: dict | None = None) -> PrunerResult:
    """Baseline: same initialisation and shuffling stream as the pruned runs,
    ``hyper.epochs`` epochs, no mask."""
    params = init_params(model_spec, seed)
    state = fresh_state(params)
    rng = np.random.default_rng([seed, 0x7A1])
    losses = []
    meta = {"pruner_id": None, "target": 0.0, "seed": seed, **(extra or {})}
    if on_epoch is not None:
        on_epoch(Checkpoint(model_spec, 0, params, None, state, rng.bit_generator.state, dict(meta)))
    for e in range(1, hyper.epochs + 1):
        losses.append(train_epoch(params, train_split, None, state, hyper, rng))
        if on_epoch is not None:
            on_epoch(Checkpoint(model_spec, e, params, None, state, rng.bit_generator.state,
                                dict(meta)))
    return PrunerResult(params, PruneMask(), hyper.epochs, [], losses)
