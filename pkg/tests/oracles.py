"""Independent reference implementations used to check the package.

Written in plain Python loops on purpose: they share no code with the
vectorised paths under test.
"""

from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path

import numpy as np


def central_difference(f, params, name, eps=1e-3, max_entries=None, rng=None):
    """Numerical gradient of scalar ``f()`` w.r.t. ``params[name]``."""
    w = params[name]
    flat = w.reshape(-1)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        idx = rng.choice(flat.size, size=max_entries, replace=False)
    out = {}
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out[int(i)] = (up - down) / (2 * eps)
    return out


def relative_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(floor, abs(analytic), abs(numeric))


def brute_mode(votes):
    """Most frequent class; among equally frequent classes the smallest."""
    best, best_count = None, -1
    for c in sorted(set(votes)):
        n = sum(1 for v in votes if v == c)
        if n > best_count:
            best, best_count = c, n
    return best


def brute_majority_set(label_sets, num_classes):
    """Classes predicted by strictly more than half of the label sets."""
    n = len(label_sets)
    return frozenset(c for c in range(num_classes)
                     if Fraction(sum(1 for s in label_sets if c in s)) > Fraction(n, 2))


def brute_pies(pruned_hard, unpruned_hard, kind, num_classes):
    """PIE flags from (inits, examples) class indices or (inits, examples, C) 0/1 arrays."""
    n_examples = len(pruned_hard[0])
    flags = []
    for j in range(n_examples):
        if kind == "single":
            a = brute_mode([int(row[j]) for row in pruned_hard])
            b = brute_mode([int(row[j]) for row in unpruned_hard])
        else:
            a = brute_majority_set([{c for c in range(num_classes) if row[j][c]}
                                    for row in pruned_hard], num_classes)
            b = brute_majority_set([{c for c in range(num_classes) if row[j][c]}
                                    for row in unpruned_hard], num_classes)
        flags.append(a != b)
    return flags


def brute_el2n(p, y):
    return math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(p, y)))


def brute_bins(scores, ids, k):
    """Sort by (score, id) and cut into k runs whose sizes differ by at most one,
    larger runs first."""
    order = sorted(zip(scores, ids))
    n = len(order)
    out, pos = [], 0
    for b in range(k):
        size = n // k + (1 if b < n % k else 0)
        out.append([i for _, i in order[pos:pos + size]])
        pos += size
    return out


def brute_prune(keep, scores, r):
    """One pruning step on a flat layer: drop floor(r * active) active entries
    with the lowest score, lower index first on ties."""
    active = [i for i, k in enumerate(keep) if k]
    n_drop = math.floor(r * len(active) + 1e-9)
    ranked = sorted(active, key=lambda i: (scores[i], i))
    out = list(keep)
    for i in ranked[:n_drop]:
        out[i] = False
    return out


def layer_relative_error(analytic, numeric):
    """max |a - n| over a layer, scaled by the larger of the two max-norms."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-12)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def gradient_check(family, kind, seed, eps=1e-3):
    """Worst layer relative error between analytic and central-difference
    gradients for one random tiny float64 model. Returns (error, layer)."""
    from types import SimpleNamespace

    from pielab.nn import ModelSpec, forward, init_params, loss, loss_and_grad

    rng = np.random.default_rng([seed, 77])
    V, C = 12, 3
    spec = ModelSpec(family, V, 4, 3, C, kind)
    params = init_params(spec, seed).astype(np.float64)
    # jitter everything so no ReLU sits exactly on its kink (zero biases would)
    for name in params:
        params[name] = params[name] + rng.normal(0.0, 0.3, params[name].shape)
    B, T = 5, 6
    lengths = rng.integers(0, T + 1, B).astype(np.int32)
    ids = np.zeros((B, T), np.int32)
    for b in range(B):
        ids[b, :lengths[b]] = rng.integers(1, V, lengths[b])
    if kind == "single":
        labels = np.eye(C)[rng.integers(0, C, B)]
    else:
        labels = (rng.random((B, C)) < 0.5).astype(np.float64)
    batch = SimpleNamespace(token_ids=ids, lengths=lengths, labels=labels)

    _, grads = loss_and_grad(params, batch)

    def f():
        return loss(forward(params, batch), labels, kind)

    worst, where = 0.0, None
    for name in params:
        num = central_difference(f, params, name, eps)
        numeric = np.array([num[i] for i in range(params[name].size)]).reshape(params[name].shape)
        err = layer_relative_error(grads[name], numeric)
        if err > worst:
            worst, where = err, name
    return worst, where


def brute_hard(prob_row, kind, threshold=0.5):
    """Hard prediction for one probability vector: first argmax, or the set
    of classes strictly above ``threshold``."""
    if kind == "single":
        best = 0
        for c in range(1, len(prob_row)):
            if prob_row[c] > prob_row[best]:
                best = c
        return best
    return [1 if p > threshold else 0 for p in prob_row]


def brute_pies_from_probs(pruned_probs, unpruned_probs, kind):
    C = len(pruned_probs[0][0])
    hp = [[brute_hard(row, kind) for row in init] for init in pruned_probs]
    hu = [[brute_hard(row, kind) for row in init] for init in unpruned_probs]
    return brute_pies(hp, hu, kind, C)


def random_prediction_matrices(rng, kind, max_inits=7, max_classes=5, max_examples=200):
    """Random pruned/unpruned probability tensors (N, n, C) whose votes are
    drawn from a small pool so that ties and exact N/2 counts are common."""
    N = int(rng.integers(1, max_inits + 1))
    C = int(rng.integers(2, max_classes + 1))
    n = int(rng.integers(1, max_examples + 1))
    out = []
    for _ in range(2):
        if kind == "single":
            pool = rng.integers(0, C, size=(n, 2))
            pick = rng.integers(0, 2, size=(N, n))
            votes = pool[np.arange(n)[None, :], pick]
            probs = rng.random((N, n, C)) * 0.3
            probs[np.arange(N)[:, None], np.arange(n)[None, :], votes] = 0.9
            probs /= probs.sum(axis=2, keepdims=True)
        else:
            on = rng.random((N, n, C)) < rng.random((1, n, C))
            probs = np.where(on, rng.uniform(0.5, 1.0, (N, n, C)),
                             rng.uniform(0.0, 0.5, (N, n, C)))
            # a probability of exactly 0.5 is a negative
            probs[rng.random((N, n, C)) < 0.05] = 0.5
        out.append(probs.astype(np.float32))
    if rng.random() < 0.1:
        out[1] = out[0].copy()
    return out[0], out[1]


# ------------------------------------------------------------------ readability fixture

READABILITY_FIXTURE = Path(__file__).parent / "fixtures" / "readability_10.txt"

# Easy words of the fixture; "books", "computers", "calculate", "numbers",
# "birds", "trees" and "education" are left out on purpose (7 difficult tokens).
READABILITY_FIXTURE_EASY = (
    "the cat sat on mat a dog ran to big red barn we like read good quickly table is in "
    "kitchen my friend has yellow umbrella fly over tall important for everybody i see sun "
    "it time go home".split())

# Counted by hand, sentence by sentence:
#   words      6 + 8 + 6 + 4 + 6 + 6 + 6 + 5 + 4 + 6 = 57
#   letters   17 +22 +21 +32 +22 +26 +24 +32 +10 +16 = 222
#   syllables  6 + 8 + 6 +10 + 8 + 9 + 7 +14 + 4 + 6 = 78
#   >= 3 syllables: computers, calculate, umbrella, education, important, everybody = 6
READABILITY_HAND_COUNTS = W, S, LETTERS, SYLL, COMPLEX, DIFFICULT = 57, 10, 222, 78, 6, 7
READABILITY_EXPECTED = {
    "ari": 4.71 * LETTERS / W + 0.5 * W / S - 21.43,                        # -0.235789...
    "coleman_liau": 0.0588 * 100 * LETTERS / W - 0.296 * 100 * S / W - 15.8,  # 1.908070...
    "flesch_kincaid": 0.39 * W / S + 11.8 * SYLL / W - 15.59,              # 2.780368...
    "linsear_write": ((W - COMPLEX) + 3 * COMPLEX) / S / 2 - 1,            # r = 6.9 -> 2.45
    "gunning_fog": 0.4 * (W / S + 100 * COMPLEX / W),                      # 6.490526...
    "dale_chall": 0.1579 * 100 * DIFFICULT / W + 0.0496 * W / S + 3.6365,  # PDW 12.28 > 5
    "difficult_words": 7.0,
    "token_length": 57.0,
}
