"""Array-level building blocks with explicit forward/backward passes.

Everything is float64 numpy.  Layouts:

  conv activations  [B, T, C, F]   (batch, time, sensor channel, feature map)
  recurrent inputs  [B, T, D]      with D = C * F flattened per time step
  gate order        (input, forget, cell, output)

Convolutions run along the time axis only, in valid mode, with kernels
shared across sensor channels, so a length-L window shrinks by K-1 instants
per layer and the sensor-channel axis is untouched.
"""

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Time-axis convolution (per sensor channel, shared kernels)
# ---------------------------------------------------------------------------

def conv_time_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x [B,T,C,Fin], weight [K,Fin,Fout], bias [Fout] -> [B,T-K+1,C,Fout]."""
    k, f_in, f_out = weight.shape
    windows = sliding_window_view(x, k, axis=1)  # [B,To,C,Fin,K]
    b, t_out, c = windows.shape[:3]
    unfolded = windows.transpose(0, 1, 2, 4, 3).reshape(b * t_out * c, k * f_in)
    y = unfolded @ weight.reshape(k * f_in, f_out)
    return y.reshape(b, t_out, c, f_out) + bias


def conv_time_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (grad_x, grad_weight, grad_bias) for :func:`conv_time_forward`."""
    k, f_in, f_out = weight.shape
    b, t_out, c, _ = grad_out.shape

    windows = sliding_window_view(x, k, axis=1)
    unfolded = windows.transpose(0, 1, 2, 4, 3).reshape(b * t_out * c, k * f_in)
    grad_flat = grad_out.reshape(b * t_out * c, f_out)
    grad_w = (unfolded.T @ grad_flat).reshape(k, f_in, f_out)
    grad_b = grad_out.sum(axis=(0, 1, 2))

    # Full correlation of the padded output gradient with the flipped kernel.
    padded = np.zeros((b, t_out + 2 * (k - 1), c, f_out))
    padded[:, k - 1 : k - 1 + t_out] = grad_out
    w_rev = weight[::-1].transpose(0, 2, 1).reshape(k * f_out, f_in)
    pwin = sliding_window_view(padded, k, axis=1)  # [B,Tin,C,Fout,K]
    t_in = pwin.shape[1]
    punf = pwin.transpose(0, 1, 2, 4, 3).reshape(b * t_in * c, k * f_out)
    grad_x = (punf @ w_rev).reshape(b, t_in, c, f_in)
    return grad_x, grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0.0)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

class LstmCache:
    """Stacked per-step tensors kept for backpropagation through time."""

    __slots__ = ("x", "h", "c", "i", "f", "g", "o", "tc")

    def __init__(self, x, h, c, i, f, g, o, tc):
        self.x, self.h, self.c = x, h, c
        self.i, self.f, self.g, self.o, self.tc = i, f, g, o, tc


def lstm_forward(
    x: np.ndarray, wx: np.ndarray, wh: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, LstmCache]:
    """x [B,T,D], wx [D,4H], wh [H,4H], bias [4H] -> (h [B,T,H], cache)."""
    b, t, _ = x.shape
    hidden = wh.shape[0]
    h = np.zeros((t, b, hidden))
    c = np.zeros((t, b, hidden))
    gates_i = np.zeros((t, b, hidden))
    gates_f = np.zeros((t, b, hidden))
    gates_g = np.zeros((t, b, hidden))
    gates_o = np.zeros((t, b, hidden))
    tanh_c = np.zeros((t, b, hidden))

    h_prev = np.zeros((b, hidden))
    c_prev = np.zeros((b, hidden))
    for step in range(t):
        z = x[:, step] @ wx + h_prev @ wh + bias
        zi, zf, zg, zo = np.split(z, 4, axis=1)
        i_t = sigmoid(zi)
        f_t = sigmoid(zf)
        g_t = np.tanh(zg)
        o_t = sigmoid(zo)
        c_t = f_t * c_prev + i_t * g_t
        tc_t = np.tanh(c_t)
        h_t = o_t * tc_t

        gates_i[step], gates_f[step], gates_g[step], gates_o[step] = i_t, f_t, g_t, o_t
        c[step], tanh_c[step], h[step] = c_t, tc_t, h_t
        h_prev, c_prev = h_t, c_t

    cache = LstmCache(x, h, c, gates_i, gates_f, gates_g, gates_o, tanh_c)
    return h.transpose(1, 0, 2), cache


def lstm_backward(
    grad_h: np.ndarray, cache: LstmCache, wx: np.ndarray, wh: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """grad_h [B,T,H] upstream on every step's output -> (dx, dWx, dWh, db)."""
    x = cache.x
    b, t, d = x.shape
    hidden = wh.shape[0]

    grad_x = np.zeros_like(x)
    grad_wx = np.zeros_like(wx)
    grad_wh = np.zeros_like(wh)
    grad_b = np.zeros(4 * hidden)

    dh_next = np.zeros((b, hidden))
    dc_next = np.zeros((b, hidden))
    for step in range(t - 1, -1, -1):
        i_t, f_t = cache.i[step], cache.f[step]
        g_t, o_t = cache.g[step], cache.o[step]
        tc_t = cache.tc[step]
        c_prev = cache.c[step - 1] if step > 0 else np.zeros((b, hidden))
        h_prev = cache.h[step - 1] if step > 0 else np.zeros((b, hidden))

        dh = grad_h[:, step] + dh_next
        do = dh * tc_t
        dc = dc_next + dh * o_t * (1.0 - tc_t * tc_t)
        di = dc * g_t
        dg = dc * i_t
        df = dc * c_prev

        dz = np.concatenate(
            [
                di * i_t * (1.0 - i_t),
                df * f_t * (1.0 - f_t),
                dg * (1.0 - g_t * g_t),
                do * o_t * (1.0 - o_t),
            ],
            axis=1,
        )
        grad_wx += x[:, step].T @ dz
        grad_wh += h_prev.T @ dz
        grad_b += dz.sum(axis=0)
        grad_x[:, step] = dz @ wx.T
        dh_next = dz @ wh.T
        dc_next = dc * f_t
    return grad_x, grad_wx, grad_wh, grad_b


# ---------------------------------------------------------------------------
# Dense head + softmax cross-entropy
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray, weights: Optional[np.ndarray] = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean (optionally per-instance weighted) cross-entropy.

    Returns (loss, grad_logits, probabilities); grad already carries the
    1/batch factor and the instance weights.
    """
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    per_instance = -log_probs[np.arange(n), targets]
    if weights is None:
        weights = np.ones(n)
    loss = float(np.dot(weights, per_instance) / n)

    probs = np.exp(log_probs)
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1.0
    grad *= (weights / n)[:, None]
    return loss, grad, probs


def dropout_forward(
    x: np.ndarray, rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout; returns (output, mask) with mask already scaled."""
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask
