"""Forward/backward primitives for the pair classifier (float64 numpy, batched, masked).

Every ``*_forward`` returns its output plus a cache; the matching ``*_backward`` takes the
upstream gradient and the cache and returns input and parameter gradients. Sequences
are right-padded; ``mask`` is a boolean (N, T) array with a valid prefix per row.
"""
from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def dropout_mask(rng, shape, rate: float) -> np.ndarray | None:
    if rng is None or rate <= 0.0:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


# --- LSTM ---------------------------------------------------------------------------------

def lstm_forward(x, mask, W, b):
    """Unidirectional LSTM; gate order is input, forget, output, candidate.

    Padded steps carry the previous state unchanged, so the returned final state is the
    state after each row's last valid token. Outputs at padded steps are zero.
    """
    n, t_max, d_in = x.shape
    hid = W.shape[1] // 4
    h = np.zeros((n, hid))
    c = np.zeros((n, hid))
    y = np.zeros((n, t_max, hid))
    steps = []
    for t in range(t_max):
        m = mask[:, t, None].astype(float)
        xh = np.concatenate([x[:, t], h], axis=1)
        a = xh @ W + b
        i = sigmoid(a[:, :hid])
        f = sigmoid(a[:, hid:2 * hid])
        o = sigmoid(a[:, 2 * hid:3 * hid])
        g = np.tanh(a[:, 3 * hid:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((xh, c, i, f, o, g, tc, m))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        y[:, t] = m * h_new
    return y, h, (steps, W, d_in)


def lstm_backward(dy, dh_final, cache):
    steps, W, d_in = cache
    n, t_max, hid = dy.shape
    dx = np.zeros((n, t_max, d_in))
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[1])
    dh_next = dh_final.copy()
    dc_next = np.zeros((n, hid))
    for t in reversed(range(t_max)):
        xh, c_prev, i, f, o, g, tc, m = steps[t]
        dh_new = m * (dy[:, t] + dh_next)
        dc_new = m * dc_next + dh_new * o * (1.0 - tc * tc)
        do = dh_new * tc
        df = dc_new * c_prev
        di = dc_new * g
        dg = dc_new * i
        da = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f),
                             do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1)
        dW += xh.T @ da
        db += da.sum(axis=0)
        dxh = da @ W.T
        dx[:, t] = dxh[:, :d_in]
        dh_next = dxh[:, d_in:] + (1.0 - m) * dh_next
        dc_next = dc_new * f + (1.0 - m) * dc_next
    return dx, dW, db


def reverse_index(lengths, t_max: int) -> np.ndarray:
    """Per-row index that reverses the valid prefix and fixes padding (an involution)."""
    t = np.arange(t_max)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


def bilstm_layer_forward(x, mask, rev, Wf, bf, Wb, bb):
    rows = np.arange(x.shape[0])[:, None]
    yf, hf, cache_f = lstm_forward(x, mask, Wf, bf)
    yb_rev, hb, cache_b = lstm_forward(x[rows, rev], mask, Wb, bb)
    yb = yb_rev[rows, rev]
    return np.concatenate([yf, yb], axis=2), hf, hb, (cache_f, cache_b, rev, yf.shape[2])


def bilstm_layer_backward(dy, dhf, dhb, cache):
    cache_f, cache_b, rev, hid = cache
    rows = np.arange(dy.shape[0])[:, None]
    dxf, dWf, dbf = lstm_backward(dy[:, :, :hid], dhf, cache_f)
    dxb_rev, dWb, dbb = lstm_backward(dy[:, :, hid:][rows, rev], dhb, cache_b)
    return dxf + dxb_rev[rows, rev], (dWf, dbf, dWb, dbb)


# --- attention ----------------------------------------------------------------------------

def attention_forward(z, e, mask):
    """alpha_j = softmax_j(z . e_j) over valid positions; m = sum_j alpha_j e_j."""
    logits = np.einsum("nk,ntk->nt", z, e)
    logits = np.where(mask, logits, -np.inf)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    alpha = w / w.sum(axis=1, keepdims=True)
    m = np.einsum("nt,ntk->nk", alpha, e)
    return m, alpha, (z, e, alpha)


def attention_backward(dm, cache):
    z, e, alpha = cache
    dalpha = np.einsum("nk,ntk->nt", dm, e)
    dlogits = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dz = np.einsum("nt,ntk->nk", dlogits, e)
    de = alpha[:, :, None] * dm[:, None, :] + dlogits[:, :, None] * z[:, None, :]
    return dz, de


# --- convolutional context reader ---------------------------------------------------------

def conv_maxpool_forward(x, lengths, F, b, width: int):
    """One filter bank: valid 1-D convolution over token windows, max over time, ReLU."""
    n, t_max, d = x.shape
    positions = t_max - width + 1
    if positions <= 0:
        out = np.zeros((n, F.shape[1]))
        return out, None
    windows = np.concatenate([x[:, k:k + positions] for k in range(width)], axis=2)
    pre = windows @ F + b
    valid = np.arange(positions)[None, :] <= (np.asarray(lengths) - width)[:, None]
    pre = np.where(valid[:, :, None], pre, -np.inf)
    arg = pre.argmax(axis=1)
    best = np.take_along_axis(pre, arg[:, None, :], axis=1)[:, 0]
    out = np.maximum(best, 0.0)
    return out, (windows, arg, best, F, width, x.shape)


def conv_maxpool_backward(dout, cache, x_shape=None, F_shape=None):
    if cache is None:
        return np.zeros(x_shape), np.zeros(F_shape), np.zeros(F_shape[1])
    windows, arg, best, F, width, x_shape = cache
    n, t_max, d = x_shape
    dpre = dout * (best > 0.0)
    rows = np.arange(n)[:, None]
    picked = windows[rows, arg]  # (n, filters, width*d)
    dF = np.einsum("nfk,nf->kf", picked, dpre)
    db = dpre.sum(axis=0)
    dx = np.zeros(x_shape)
    # each filter's gradient lands on its own winning window
    dwin = dpre[:, :, None] * F.T[None, :, :]  # (n, filters, width*d)
    for k in range(width):
        np.add.at(dx, (np.repeat(np.arange(n), F.shape[1]), (arg + k).ravel()),
                  dwin[:, :, k * d:(k + 1) * d].reshape(-1, d))
    return dx, dF, db


# --- event feed-forward -------------------------------------------------------------------

def event_ffnn_forward(word_embed, slots, pp_ids, pp_event, n_events, W, b):
    """Event embeddings tanh([verb; subj; dobj; mean_pp(prep; pobj)] W + b).

    ``slots`` is (E, 3) word ids; ``pp_ids`` is (P, 2) with ``pp_event`` naming the owning
    event of each prepositional pair. Events without pairs get a zero pp block.
    """
    dim = word_embed.shape[1]
    x = np.zeros((n_events, 5 * dim))
    x[:, :3 * dim] = word_embed[slots].reshape(n_events, 3 * dim)
    counts = np.bincount(pp_event, minlength=n_events).astype(float)
    if len(pp_ids):
        pp_vec = word_embed[pp_ids].reshape(len(pp_ids), 2 * dim)
        np.add.at(x[:, 3 * dim:], pp_event, pp_vec)
        x[:, 3 * dim:] /= np.maximum(counts, 1.0)[:, None]
    h = np.tanh(x @ W + b)
    return h, (x, h, slots, pp_ids, pp_event, counts, W, dim)


def event_ffnn_backward(dh, cache, vocab_size: int):
    x, h, slots, pp_ids, pp_event, counts, W, dim = cache
    da = dh * (1.0 - h * h)
    dW = x.T @ da
    db = da.sum(axis=0)
    dx = da @ W.T
    dE = np.zeros((vocab_size, dim))
    np.add.at(dE, slots.ravel(), dx[:, :3 * dim].reshape(-1, dim))
    if len(pp_ids):
        dpp = (dx[:, 3 * dim:] / np.maximum(counts, 1.0)[:, None])[pp_event]
        np.add.at(dE, pp_ids.ravel(), dpp.reshape(-1, dim))
    return dE, dW, db
