"""Forward pass, losses, gradients and prediction for both model families."""

from __future__ import annotations

import numpy as np

from . import kernels
from .params import ParamSet


class InputError(ValueError):
    pass


def _check_ids(params: ParamSet, token_ids: np.ndarray) -> None:
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= params.spec.vocab_size):
        raise InputError(f"token id out of range [0, {params.spec.vocab_size})")


def _as_batch(batch):
    ids = np.ascontiguousarray(batch.token_ids, dtype=np.int32)
    lengths = np.ascontiguousarray(batch.lengths, dtype=np.int32)
    return ids, lengths


def _forward(params: ParamSet, ids: np.ndarray, lengths: np.ndarray):
    spec = params.spec
    emb = params["embedding"]
    if spec.family == "mlp":
        pooled = kernels.mean_embed_forward(emb, ids, lengths)
        pre = pooled @ params["hidden.weight"] + params["hidden.bias"]
        feat = np.maximum(pre, 0)
        cache = {"pooled": pooled, "pre": pre, "feat": feat}
    else:
        rev = kernels.reverse_sequences(ids, lengths)
        h_f, *cache_f = kernels.lstm_forward(emb, ids, lengths, params["lstm_fwd.w_ih"],
                                            params["lstm_fwd.w_hh"], params["lstm_fwd.bias"])
        h_b, *cache_b = kernels.lstm_forward(emb, rev, lengths, params["lstm_bwd.w_ih"],
                                            params["lstm_bwd.w_hh"], params["lstm_bwd.bias"])
        feat = np.concatenate([h_f, h_b], axis=1)
        cache = {"rev": rev, "fwd": cache_f, "bwd": cache_b, "feat": feat}
    logits = feat @ params["classifier.weight"] + params["classifier.bias"]
    return logits, cache


def forward(params: ParamSet, batch) -> np.ndarray:
    """Logits of shape (batch, num_classes). ``batch`` needs ``token_ids`` and
    ``lengths`` attributes (an :class:`~pielab.corpus.EncodedSplit` works)."""
    ids, lengths = _as_batch(batch)
    _check_ids(params, ids)
    return _forward(params, ids, lengths)[0]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def loss(logits: np.ndarray, labels: np.ndarray, kind: str) -> float:
    """Mean softmax cross-entropy (single) or mean per-class sigmoid BCE (multi)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and labels {y.shape} disagree")
    if kind == "single":
        return float(-(y * _log_softmax(z)).sum(axis=1).mean())
    bce = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(bce.mean())


def _dlogits(logits: np.ndarray, labels: np.ndarray, kind: str) -> np.ndarray:
    B = logits.shape[0]
    if kind == "single":
        return (np.exp(_log_softmax(logits)) - labels) / B
    return (_sigmoid(logits) - labels) / (B * logits.shape[1])


def loss_and_grad(params: ParamSet, batch, labels: np.ndarray | None = None,
                  kind: str | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and its gradient per parameter array.

    Gradients of pruned positions are not zeroed here; the optimizer applies
    the mask.
    """
    ids, lengths = _as_batch(batch)
    _check_ids(params, ids)
    labels = batch.labels if labels is None else labels
    kind = params.spec.kind if kind is None else kind
    dtype = params.dtype
    labels = np.asarray(labels, dtype=dtype)
    logits, cache = _forward(params, ids, lengths)
    value = loss(logits, labels, kind)
    dz = _dlogits(logits, labels, kind).astype(dtype)

    grads = {n: np.zeros_like(v) for n, v in params.items()}
    feat = cache["feat"]
    grads["classifier.weight"] = feat.T @ dz
    grads["classifier.bias"] = dz.sum(axis=0)
    dfeat = dz @ params["classifier.weight"].T
    emb = params["embedding"]
    if params.spec.family == "mlp":
        dpre = dfeat * (cache["pre"] > 0)
        grads["hidden.weight"] = cache["pooled"].T @ dpre
        grads["hidden.bias"] = dpre.sum(axis=0)
        dpooled = dpre @ params["hidden.weight"].T
        kernels.mean_embed_backward(np.ascontiguousarray(dpooled), ids, lengths,
                                    grads["embedding"])
    else:
        H = params.spec.hidden_dim
        for d, seq, dh in (("fwd", ids, dfeat[:, :H]), ("bwd", cache["rev"], dfeat[:, H:])):
            kernels.lstm_backward(emb, seq, lengths, params[f"lstm_{d}.w_ih"],
                                  params[f"lstm_{d}.w_hh"], *cache[d],
                                  np.ascontiguousarray(dh), grads["embedding"],
                                  grads[f"lstm_{d}.w_ih"], grads[f"lstm_{d}.w_hh"],
                                  grads[f"lstm_{d}.bias"])
    return value, grads


def backward(params: ParamSet, batch, labels: np.ndarray | None = None,
             kind: str | None = None) -> dict[str, np.ndarray]:
    return loss_and_grad(params, batch, labels, kind)[1]


def probabilities(logits: np.ndarray, kind: str) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if kind == "single":
        p = np.exp(_log_softmax(z))
    else:
        p = _sigmoid(z)
    return p.astype(np.float32)


def predict(params: ParamSet, split, batch_size: int = 256) -> np.ndarray:
    """Probability matrix (examples x classes) for an encoded split."""
    ids, lengths = _as_batch(split)
    _check_ids(params, ids)
    n = ids.shape[0]
    out = np.zeros((n, params.spec.num_classes), dtype=np.float32)
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        out[sl] = probabilities(_forward(params, ids[sl], lengths[sl])[0], params.spec.kind)
    return out
