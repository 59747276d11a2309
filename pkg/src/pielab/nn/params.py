from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from ..corpus import OOV_ID, PAD_ID

FAMILIES = ("mlp", "bilstm")
ROLES = ("embedding", "recurrent", "dense", "classifier", "bias")
_NEVER_PRUNED = {"embedding", "bias", "classifier"}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    vocab_size: int
    embedding_dim: int
    hidden_dim: int
    num_classes: int
    kind: str = "single"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.kind not in ("single", "multi"):
            raise ValueError(f"kind must be 'single' or 'multi', got {self.kind!r}")
        for name in ("vocab_size", "embedding_dim", "hidden_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class Layer:
    value: np.ndarray
    role: str
    prunable: bool

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown layer role {self.role!r}")
        if self.prunable and self.role in _NEVER_PRUNED:
            raise ValueError(f"role {self.role!r} can never be prunable")


class ParamSet:
    """Ordered named parameter arrays with role and prunability tags."""

    def __init__(self, spec: ModelSpec, layers: dict[str, Layer]):
        n_cls = sum(1 for l in layers.values() if l.role == "classifier")
        if n_cls != 1:
            raise ValueError(f"expected exactly one classifier layer, found {n_cls}")
        self.spec = spec
        self.layers = dict(layers)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.layers[name].value

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.layers[name].value = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.layers)

    def names(self) -> list[str]:
        return list(self.layers)

    def prunable_names(self) -> list[str]:
        return [n for n, l in self.layers.items() if l.prunable]

    def items(self):
        return ((n, l.value) for n, l in self.layers.items())

    @property
    def dtype(self):
        return next(iter(self.layers.values())).value.dtype

    def num_params(self) -> int:
        return sum(l.value.size for l in self.layers.values())

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, {n: Layer(l.value.copy(), l.role, l.prunable)
                                    for n, l in self.layers.items()})

    def astype(self, dtype) -> "ParamSet":
        return ParamSet(self.spec, {n: Layer(l.value.astype(dtype), l.role, l.prunable)
                                    for n, l in self.layers.items()})

    def equal_bytes(self, other: "ParamSet") -> bool:
        if self.names() != other.names():
            return False
        return all(self[n].dtype == other[n].dtype and self[n].tobytes() == other[n].tobytes()
                   for n in self)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(spec: ModelSpec, seed: int) -> ParamSet:
    """Seeded initialisation.

    Embedding rows come from N(0, 0.1). The OOV row is then replaced by the
    mean of the real-token rows and the PAD row is redrawn from a normal with
    the per-dimension mean and std of those rows.
    """
    rng = np.random.default_rng(seed)
    V, E, H, C = spec.vocab_size, spec.embedding_dim, spec.hidden_dim, spec.num_classes
    emb = rng.normal(0.0, 0.1, size=(V, E))
    real = emb[2:]
    if real.shape[0] > 0:
        mu, sd = real.mean(axis=0), real.std(axis=0)
    else:
        mu, sd = np.zeros(E), np.full(E, 0.1)
    if V > OOV_ID:
        emb[OOV_ID] = mu
    emb[PAD_ID] = rng.normal(mu, sd)

    f32 = np.float32
    layers: dict[str, Layer] = {"embedding": Layer(emb.astype(f32), "embedding", False)}
    if spec.family == "mlp":
        layers["hidden.weight"] = Layer(_glorot(rng, E, H).astype(f32), "dense", True)
        layers["hidden.bias"] = Layer(np.zeros(H, f32), "bias", False)
        feat = H
    else:
        for d in ("fwd", "bwd"):
            layers[f"lstm_{d}.w_ih"] = Layer(_glorot(rng, E, 4 * H).astype(f32), "recurrent", True)
            layers[f"lstm_{d}.w_hh"] = Layer(_glorot(rng, H, 4 * H).astype(f32), "recurrent", True)
            layers[f"lstm_{d}.bias"] = Layer(np.zeros(4 * H, f32), "bias", False)
        feat = 2 * H
    layers["classifier.weight"] = Layer(_glorot(rng, feat, C).astype(f32), "classifier", False)
    layers["classifier.bias"] = Layer(np.zeros(C, f32), "bias", False)
    return ParamSet(spec, layers)


def load_embedding_matrix(path, vocab, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Read a space separated ``token v1 ... v_dim`` text file.

    Returns a (vocab_size, dim) float32 matrix and a boolean row mask of the
    tokens found. Missing rows stay zero; callers copy the found rows over an
    initialised embedding.
    """
    out = np.zeros((len(vocab.token_to_id), dim), dtype=np.float32)
    found = np.zeros(len(vocab.token_to_id), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.token_to_id.get(parts[0])
            if idx is not None and idx > OOV_ID:
                out[idx] = np.asarray(parts[1:], dtype=np.float32)
                found[idx] = True
    return out, found
