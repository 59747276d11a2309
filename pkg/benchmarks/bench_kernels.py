"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 64] [--length 60]

Each kernel is called once before timing so JIT compilation is excluded.
Outputs of both paths are compared and the max abs difference is printed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pielab._accel import NUMBA_AVAILABLE
from pielab.nn import kernels as K


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng, B, T, V, D, H):
    lengths = rng.integers(T // 2, T + 1, size=B).astype(np.int64)
    ids = rng.integers(1, V, size=(B, T)).astype(np.int64)
    ids[np.arange(T)[None, :] >= lengths[:, None]] = 0
    emb = rng.normal(0, 0.1, (V, D))
    w_ih = rng.normal(0, 0.1, (D, 4 * H))
    w_hh = rng.normal(0, 0.1, (H, 4 * H))
    bias = np.zeros(4 * H)
    dh = rng.normal(size=(B, H))
    d_mean = rng.normal(size=(B, D))

    def mean_fwd(impl):
        return lambda: impl(emb, ids, lengths)

    def mean_bwd(impl):
        def run():
            d_emb = np.zeros_like(emb)
            impl(d_mean, ids, lengths, d_emb)
            return d_emb
        return run

    def lstm_fwd(impl):
        return lambda: impl(emb, ids, lengths, w_ih, w_hh, bias)[0]

    def lstm_bwd(fwd, impl):
        cache = fwd(emb, ids, lengths, w_ih, w_hh, bias)[1:]

        def run():
            grads = [np.zeros_like(emb), np.zeros_like(w_ih), np.zeros_like(w_hh), np.zeros_like(bias)]
            impl(emb, ids, lengths, w_ih, w_hh, *cache, dh, *grads)
            return grads[1]
        return run

    return [
        ("mean_embed forward", mean_fwd(K.mean_embed_forward_nb), mean_fwd(K.mean_embed_forward_np)),
        ("mean_embed backward", mean_bwd(K.mean_embed_backward_nb), mean_bwd(K.mean_embed_backward_np)),
        ("lstm forward", lstm_fwd(K.lstm_forward_nb), lstm_fwd(K.lstm_forward_np)),
        ("lstm backward", lstm_bwd(K.lstm_forward_nb, K.lstm_backward_nb),
         lstm_bwd(K.lstm_forward_np, K.lstm_backward_np)),
    ]


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--length", type=int, default=60)
    ap.add_argument("--vocab", type=int, default=5000)
    ap.add_argument("--embed", type=int, default=64)
    ap.add_argument("--hidden", type=int, default=32)
    args = ap.parse_args(argv)
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    cases = _cases(rng, args.batch, args.length, args.vocab, args.embed, args.hidden)
    print(f"batch {args.batch}, length {args.length}, embed {args.embed}, hidden {args.hidden}")
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, nb, npy in cases:
        diff = float(np.max(np.abs(np.asarray(nb()) - np.asarray(npy()))))
        t_nb, t_np = _best(nb, args.repeat), _best(npy, args.repeat)
        print(f"{name:<22}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
