"""Batched building blocks of the hierarchical gating network.

Every block has a forward function returning ``(output, cache)`` and a
backward function mapping the output gradient and the cache to the input
gradient plus a dict of parameter gradients.  Arrays carry a leading batch
axis; sequences are ``(batch, time)`` arrays of scalars.

LSTM gate blocks are stacked along the last axis in the order
forget, input, candidate, output.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------- LSTM


def lstm_cell_step(x_t, h_prev, c_prev, params: dict):
    """One LSTM step.

    ``params`` holds ``Wx`` (input_dim, 4h), ``Wh`` (h, 4h) and ``b`` (4h,).
    Works on single vectors or on a leading batch axis.
    """
    h_t, c_t, _ = _lstm_step(np.asarray(x_t, dtype=np.float64),
                             np.asarray(h_prev, dtype=np.float64),
                             np.asarray(c_prev, dtype=np.float64), params)
    return h_t, c_t


def _lstm_step(x_t, h_prev, c_prev, params):
    Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    hidden = Wh.shape[0]
    if x_t.shape[-1] != Wx.shape[0] or h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
        raise InvalidInput("LSTM input/state shapes do not match the parameters")
    z = x_t @ Wx + h_prev @ Wh + b
    f = sigmoid(z[..., :hidden])
    i = sigmoid(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = sigmoid(z[..., 3 * hidden:])
    c_t = i * g + f * c_prev
    tc = np.tanh(c_t)
    h_t = o * tc
    return h_t, c_t, (x_t, h_prev, c_prev, f, i, g, o, tc)


def lstm_forward(seq: np.ndarray, params: dict):
    """Run an LSTM over ``seq`` (batch, time) from a zero state; return the final h."""
    batch, steps = seq.shape
    hidden = params["Wh"].shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    caches = []
    for t in range(steps):
        h, c, cache = _lstm_step(seq[:, t:t + 1], h, c, params)
        caches.append(cache)
    return h, caches


def lstm_backward(dh: np.ndarray, caches: list, params: dict):
    Wx, Wh = params["Wx"], params["Wh"]
    grads = {"Wx": np.zeros_like(Wx), "Wh": np.zeros_like(Wh), "b": np.zeros_like(params["b"])}
    batch = dh.shape[0]
    dseq = np.zeros((batch, len(caches)))
    dc = np.zeros_like(dh)
    for t in range(len(caches) - 1, -1, -1):
        x_t, h_prev, c_prev, f, i, g, o, tc = caches[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        grads["Wx"] += x_t.T @ dz
        grads["Wh"] += h_prev.T @ dz
        grads["b"] += dz.sum(axis=0)
        dseq[:, t] = (dz @ Wx.T)[:, 0]
        dh = dz @ Wh.T
        dc = dc * f
    return dseq, grads


def bilstm_forward(seq: np.ndarray, fwd: dict, bwd: dict):
    """Final forward state spliced with the final state of the reversed pass."""
    if seq.shape[1] < 1:
        raise InvalidInput("BiLSTM needs a sequence of length >= 1")
    h_f, cache_f = lstm_forward(seq, fwd)
    h_b, cache_b = lstm_forward(seq[:, ::-1], bwd)
    return np.concatenate([h_f, h_b], axis=1), (cache_f, cache_b, h_f.shape[1])


def bilstm_backward(dout: np.ndarray, cache, fwd: dict, bwd: dict):
    cache_f, cache_b, hidden = cache
    dseq_f, g_f = lstm_backward(dout[:, :hidden], cache_f, fwd)
    dseq_b, g_b = lstm_backward(dout[:, hidden:], cache_b, bwd)
    return dseq_f + dseq_b[:, ::-1], g_f, g_b


def bilstm_encode(sequence, fwd: dict, bwd: dict | None = None) -> np.ndarray:
    """Encode one scalar sequence into a ``2h`` vector.  ``bwd=None`` ties weights."""
    seq = np.asarray(sequence, dtype=np.float64).reshape(1, -1)
    if seq.shape[1] == 0:
        raise InvalidInput("BiLSTM needs a sequence of length >= 1")
    out, _ = bilstm_forward(seq, fwd, fwd if bwd is None else bwd)
    return out[0]


# ---------------------------------------------------------------- CNN


def conv_forward(seq: np.ndarray, params: dict):
    """Valid 1-D convolution, ReLU, then max over positions.

    ``params``: ``W`` (filters, d) and ``b`` (filters,).
    """
    W, b = params["W"], params["b"]
    d = W.shape[1]
    if seq.shape[1] < d:
        raise InvalidInput(f"sequence length {seq.shape[1]} shorter than kernel {d}")
    patches = np.lib.stride_tricks.sliding_window_view(seq, d, axis=1)  # (B, P, d)
    pre = patches @ W.T + b  # (B, P, F)
    idx = np.argmax(pre, axis=1)  # ReLU is monotone, so argmax(pre) is argmax(relu(pre))
    top = np.take_along_axis(pre, idx[:, None, :], axis=1)[:, 0, :]
    out = np.maximum(top, 0.0)
    return out, (patches, idx, top, seq.shape[1])


def conv_backward(dout: np.ndarray, cache, params: dict):
    patches, idx, top, length = cache
    W = params["W"]
    batch, filters = dout.shape
    d = W.shape[1]
    dtop = dout * (top > 0)
    win = np.take_along_axis(patches, idx[:, :, None], axis=1)  # (B, F, d) patch at each argmax
    grads = {"W": np.einsum("bf,bfd->fd", dtop, win), "b": dtop.sum(axis=0)}
    dseq = np.zeros((batch, length))
    contrib = dtop[:, :, None] * W[None, :, :]  # (B, F, d)
    rows = np.repeat(np.arange(batch), filters * d)
    cols = (idx[:, :, None] + np.arange(d)[None, None, :]).reshape(-1)
    np.add.at(dseq, (rows, cols), contrib.reshape(-1))
    return dseq, grads


def conv_maxpool(sequence, params: dict) -> np.ndarray:
    """Pooled filter responses of one scalar sequence."""
    seq = np.asarray(sequence, dtype=np.float64).reshape(1, -1)
    out, _ = conv_forward(seq, params)
    return out[0]


# ---------------------------------------------------------------- GMBC


def gmbc_weight(lam, eta):
    """Assignment weight ``eta*(1-(1-lam)**2) + (1-eta)*lam``, elementwise."""
    lam = np.asarray(lam, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    psi = eta * (1.0 - (1.0 - lam) ** 2) + (1.0 - eta) * lam
    return float(psi) if psi.ndim == 0 else psi


def gmbc_forward(fc: np.ndarray, fl: np.ndarray, params: dict, psi_override=None):
    """Blend context and local features: ``(1 - psi) * fc + psi * fl``.

    ``params``: ``Wc``, ``bc`` gate the context features, ``Wl``, ``bl`` the
    local ones.  ``psi_override`` pins the weight (testing hook).
    """
    if fc.shape != fl.shape:
        raise InvalidInput(f"feature shapes differ: {fc.shape} vs {fl.shape}")
    lam = sigmoid(fc @ params["Wc"].T + params["bc"])
    eta = sigmoid(fl @ params["Wl"].T + params["bl"])
    psi = gmbc_weight(lam, eta) if psi_override is None else np.broadcast_to(
        np.asarray(psi_override, dtype=np.float64), fc.shape)
    out = (1.0 - psi) * fc + psi * fl
    return out, (fc, fl, lam, eta, psi)


def gmbc_backward(dout: np.ndarray, cache, params: dict):
    fc, fl, lam, eta, psi = cache
    dpsi = dout * (fl - fc)
    dlam = dpsi * (1.0 + eta * (1.0 - 2.0 * lam))
    deta = dpsi * lam * (1.0 - lam)
    dzc = dlam * lam * (1.0 - lam)
    dzl = deta * eta * (1.0 - eta)
    grads = {"Wc": dzc.T @ fc, "bc": dzc.sum(axis=0), "Wl": dzl.T @ fl, "bl": dzl.sum(axis=0)}
    dfc = dout * (1.0 - psi) + dzc @ params["Wc"]
    dfl = dout * psi + dzl @ params["Wl"]
    return dfc, dfl, grads


def gmbc_fuse(f_c, f_l, params: dict, psi_override=None) -> np.ndarray:
    f_c = np.asarray(f_c, dtype=np.float64)
    f_l = np.asarray(f_l, dtype=np.float64)
    if f_c.shape != f_l.shape:
        raise InvalidInput(f"feature lengths differ: {f_c.shape} vs {f_l.shape}")
    single = f_c.ndim == 1
    out, _ = gmbc_forward(np.atleast_2d(f_c), np.atleast_2d(f_l), params, psi_override)
    return out[0] if single else out
