"""Hot loops of the two model families, in numba and numpy flavours.

Every public function here dispatches on :func:`pielab._accel.use_numba`.
The ``*_nb`` / ``*_np`` variants are importable directly so tests and the
benchmark can compare them. Both compute the same math but sum in different
orders, so results agree to rounding, not bit for bit.

LSTM gate layout along the 4H axis is ``i, f, g, o``. Sequences are
left-aligned; a row with ``length`` L is processed for t < L and its state is
frozen afterwards, so padding never touches the recurrence.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit, use_numba

# ---------------------------------------------------------------- mean embedding


@njit
def mean_embed_forward_nb(emb, ids, lengths):
    B = ids.shape[0]
    D = emb.shape[1]
    out = np.zeros((B, D), dtype=emb.dtype)
    for b in range(B):
        L = lengths[b]
        if L == 0:
            continue
        for t in range(L):
            row = ids[b, t]
            for d in range(D):
                out[b, d] += emb[row, d]
        inv = 1.0 / L
        for d in range(D):
            out[b, d] *= inv
    return out


@njit
def mean_embed_backward_nb(d_mean, ids, lengths, d_emb):
    B = ids.shape[0]
    D = d_mean.shape[1]
    for b in range(B):
        L = lengths[b]
        if L == 0:
            continue
        inv = 1.0 / L
        for t in range(L):
            row = ids[b, t]
            for d in range(D):
                d_emb[row, d] += d_mean[b, d] * inv


def mean_embed_forward_np(emb, ids, lengths):
    T = ids.shape[1]
    mask = np.arange(T)[None, :] < lengths[:, None]
    summed = np.einsum("btd,bt->bd", emb[ids], mask.astype(emb.dtype))
    denom = np.maximum(lengths, 1).astype(emb.dtype)[:, None]
    return summed / denom


def mean_embed_backward_np(d_mean, ids, lengths, d_emb):
    T = ids.shape[1]
    mask = np.arange(T)[None, :] < lengths[:, None]
    scale = (d_mean / np.maximum(lengths, 1).astype(d_mean.dtype)[:, None])
    rows = np.broadcast_to(scale[:, None, :], ids.shape + (d_mean.shape[1],))
    np.add.at(d_emb, ids[mask], rows[mask])


def mean_embed_forward(emb, ids, lengths):
    if use_numba():
        return mean_embed_forward_nb(emb, ids, lengths)
    return mean_embed_forward_np(emb, ids, lengths)


def mean_embed_backward(d_mean, ids, lengths, d_emb):
    if use_numba():
        mean_embed_backward_nb(d_mean, ids, lengths, d_emb)
    else:
        mean_embed_backward_np(d_mean, ids, lengths, d_emb)


# ---------------------------------------------------------------- LSTM


@njit
def _sigmoid_nb(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit
def lstm_forward_nb(emb, ids, lengths, w_ih, w_hh, bias):
    B = ids.shape[0]
    T = 0
    for b in range(B):
        if lengths[b] > T:
            T = lengths[b]
    H = w_hh.shape[0]
    dt = emb.dtype
    h_final = np.zeros((B, H), dtype=dt)
    gates = np.zeros((T, B, 4 * H), dtype=dt)
    c_prev = np.zeros((T, B, H), dtype=dt)
    h_prev = np.zeros((T, B, H), dtype=dt)
    c_out = np.zeros((T, B, H), dtype=dt)
    for b in range(B):
        h = np.zeros(H, dtype=dt)
        c = np.zeros(H, dtype=dt)
        for t in range(lengths[b]):
            x = emb[ids[b, t]]
            a = np.dot(x, w_ih) + np.dot(h, w_hh) + bias
            h_prev[t, b] = h
            c_prev[t, b] = c
            for j in range(H):
                ig = _sigmoid_nb(a[j])
                fg = _sigmoid_nb(a[H + j])
                gg = np.tanh(a[2 * H + j])
                og = _sigmoid_nb(a[3 * H + j])
                gates[t, b, j] = ig
                gates[t, b, H + j] = fg
                gates[t, b, 2 * H + j] = gg
                gates[t, b, 3 * H + j] = og
                c[j] = fg * c[j] + ig * gg
                h[j] = og * np.tanh(c[j])
            c_out[t, b] = c
        h_final[b] = h
    return h_final, gates, c_prev, h_prev, c_out


@njit
def lstm_backward_nb(emb, ids, lengths, w_ih, w_hh, gates, c_prev, h_prev, c_out,
                     dh_final, d_emb, dw_ih, dw_hh, dbias):
    B = ids.shape[0]
    H = w_hh.shape[0]
    D = emb.shape[1]
    dt = emb.dtype
    da = np.zeros(4 * H, dtype=dt)
    for b in range(B):
        dh = dh_final[b].copy()
        dc = np.zeros(H, dtype=dt)
        for t in range(lengths[b] - 1, -1, -1):
            for j in range(H):
                ig = gates[t, b, j]
                fg = gates[t, b, H + j]
                gg = gates[t, b, 2 * H + j]
                og = gates[t, b, 3 * H + j]
                tc = np.tanh(c_out[t, b, j])
                dct = dc[j] + dh[j] * og * (1.0 - tc * tc)
                da[j] = dct * gg * ig * (1.0 - ig)
                da[H + j] = dct * c_prev[t, b, j] * fg * (1.0 - fg)
                da[2 * H + j] = dct * ig * (1.0 - gg * gg)
                da[3 * H + j] = dh[j] * tc * og * (1.0 - og)
                dc[j] = dct * fg
            row = ids[b, t]
            for d in range(D):
                xd = emb[row, d]
                for k in range(4 * H):
                    dw_ih[d, k] += xd * da[k]
            for m in range(H):
                hm = h_prev[t, b, m]
                for k in range(4 * H):
                    dw_hh[m, k] += hm * da[k]
            for k in range(4 * H):
                dbias[k] += da[k]
            d_emb[row] += np.dot(w_ih, da)
            dh = np.dot(w_hh, da)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward_np(emb, ids, lengths, w_ih, w_hh, bias):
    B = ids.shape[0]
    T = int(lengths.max()) if B else 0
    H = w_hh.shape[0]
    dt = emb.dtype
    h = np.zeros((B, H), dt)
    c = np.zeros((B, H), dt)
    gates = np.zeros((T, B, 4 * H), dt)
    c_prev = np.zeros((T, B, H), dt)
    h_prev = np.zeros((T, B, H), dt)
    c_out = np.zeros((T, B, H), dt)
    for t in range(T):
        m = (t < lengths)[:, None]
        a = emb[ids[:, t]] @ w_ih + h @ w_hh + bias
        i, f, o = _sigmoid(a[:, :H]), _sigmoid(a[:, H:2 * H]), _sigmoid(a[:, 3 * H:])
        g = np.tanh(a[:, 2 * H:3 * H])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        gates[t] = np.where(m, np.concatenate([i, f, g, o], axis=1), 0)
        h_prev[t] = np.where(m, h, 0)
        c_prev[t] = np.where(m, c, 0)
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        c_out[t] = np.where(m, c, 0)
    return h, gates, c_prev, h_prev, c_out


def lstm_backward_np(emb, ids, lengths, w_ih, w_hh, gates, c_prev, h_prev, c_out,
                     dh_final, d_emb, dw_ih, dw_hh, dbias):
    T = gates.shape[0]
    H = w_hh.shape[0]
    dh = dh_final.copy()
    dc = np.zeros_like(dh)
    for t in range(T - 1, -1, -1):
        m = (t < lengths)[:, None]
        g4 = gates[t]
        i, f, g, o = g4[:, :H], g4[:, H:2 * H], g4[:, 2 * H:3 * H], g4[:, 3 * H:]
        tc = np.tanh(c_out[t])
        dct = dc + dh * o * (1.0 - tc * tc)
        da = np.concatenate([dct * g * i * (1.0 - i),
                             dct * c_prev[t] * f * (1.0 - f),
                             dct * i * (1.0 - g * g),
                             dh * tc * o * (1.0 - o)], axis=1)
        da = np.where(m, da, 0)
        x = emb[ids[:, t]]
        dw_ih += x.T @ da
        dw_hh += h_prev[t].T @ da
        dbias += da.sum(axis=0)
        active = m[:, 0]
        np.add.at(d_emb, ids[active, t], da[active] @ w_ih.T)
        dh = np.where(m, da @ w_hh.T, dh)
        dc = np.where(m, dct * f, dc)


def lstm_forward(emb, ids, lengths, w_ih, w_hh, bias):
    if use_numba():
        return lstm_forward_nb(emb, ids, lengths, w_ih, w_hh, bias)
    return lstm_forward_np(emb, ids, lengths, w_ih, w_hh, bias)


def lstm_backward(*args):
    if use_numba():
        lstm_backward_nb(*args)
    else:
        lstm_backward_np(*args)


def reverse_sequences(ids, lengths):
    """Reverse the first ``lengths[b]`` tokens of every row, keeping padding
    at the end; the backward LSTM then runs left to right like the forward
    one."""
    T = ids.shape[1]
    pos = np.arange(T)[None, :]
    L = lengths[:, None]
    src = np.where(pos < L, L - 1 - pos, pos)
    return np.take_along_axis(ids, src, axis=1)
