"""Layers with hand-written backward passes, all in float64.

Every layer keeps ``params`` and ``grads`` dictionaries with matching keys
and shapes. ``forward`` caches what ``backward`` needs; ``backward`` adds to
``grads`` (call ``zero_grad`` between steps) and returns the input gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import BatchTooSmall, ShapeError
from .rng import RngStream, glorot_uniform


# ---------------------------------------------------------------------------
# functional kernels


def dense_forward(x, W, b):
    if x.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b


def dense_backward(dy, x, W):
    """(dx, dW, db) for y = xW + b."""
    if dy.shape != (x.shape[0], W.shape[1]):
        raise ShapeError(f"dense backward: dy{dy.shape} for x{x.shape} W{W.shape}")
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def relu(x):
    return np.maximum(x, 0.0)


def tanh(x):
    return np.tanh(x)


def softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the pre-softmax logits.

    The logit gradient of softmax followed by this loss is
    ``(probs - onehot(labels)) / batch``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise ShapeError(f"labels {labels.shape} for probs {probs.shape}")
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# ---------------------------------------------------------------------------
# layer objects


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _register(self, **params):
        self.params.update(params)
        self.zero_grad()


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: RngStream | None = None):
        super().__init__()
        W = glorot_uniform(rng, n_in, n_out) if rng is not None else np.zeros((n_in, n_out))
        self._register(W=W, b=np.zeros(n_out))
        self._x = None

    def forward(self, x, train=True):
        self._x = x
        return dense_forward(x, self.params["W"], self.params["b"])

    def backward(self, dy):
        dx, dW, db = dense_backward(dy, self._x, self.params["W"])
        self.grads["W"] += dW
        self.grads["b"] += db
        return dx


class Sigmoid(Layer):
    def forward(self, x, train=True):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class ReLU(Layer):
    def forward(self, x, train=True):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Tanh(Layer):
    def forward(self, x, train=True):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y ** 2)


ACTIVATIONS = {"sigmoid": Sigmoid, "relu": ReLU, "tanh": Tanh}


class Embedding(Layer):
    def __init__(self, n_rows: int, dim: int, rng: RngStream | None = None):
        super().__init__()
        E = glorot_uniform(rng, n_rows, dim) if rng is not None else np.zeros((n_rows, dim))
        self._register(E=E)

    def forward(self, idx, train=True):
        idx = np.asarray(idx, dtype=np.int64)
        self._idx = idx
        return self.params["E"][idx]

    def backward(self, dy):
        np.add.at(self.grads["E"], self._idx, dy)
        return None


class BatchNorm(Layer):
    """Per-feature batch normalisation with running statistics for eval mode."""

    def __init__(self, n: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self._register(gamma=np.ones(n), beta=np.zeros(n))
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.track_running = True

    @property
    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=True):
        g, b = self.params["gamma"], self.params["beta"]
        if not train:
            self._train = False
            self._inv = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * self._inv * g + b
        if x.shape[0] < 2:
            raise BatchTooSmall("batch normalisation needs at least 2 rows in train mode")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        if self.track_running:
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mu
            self.running_var[...] = m * self.running_var + (1 - m) * var
        self._train = True
        self._xhat, self._inv = xhat, inv
        return xhat * g + b

    def backward(self, dy):
        g = self.params["gamma"]
        if not self._train:
            # running statistics are constants here
            return dy * g * self._inv
        xhat, inv = self._xhat, self._inv
        self.grads["gamma"] += (dy * xhat).sum(axis=0)
        self.grads["beta"] += dy.sum(axis=0)
        dxhat = dy * g
        n = dy.shape[0]
        return inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


def batchnorm_forward(x, gamma, beta, mode="train", bn: BatchNorm | None = None):
    bn = bn or BatchNorm(x.shape[1])
    bn.params["gamma"][...] = gamma
    bn.params["beta"][...] = beta
    return bn.forward(x, train=(mode == "train")), bn


class LSTM(Layer):
    """Stacked LSTM returning the top layer's final hidden state.

    Gate blocks in the fused weight matrices are ordered input, forget,
    output, candidate. Layer ``k`` consumes the full hidden sequence of
    layer ``k-1``.
    """

    def __init__(self, n_in: int, hidden: int, layers: int = 2, rng: RngStream | None = None,
                 forget_bias: float = 1.0):
        super().__init__()
        self.n_in, self.hidden, self.layers = n_in, hidden, layers
        H = hidden
        params = {}
        for k in range(layers):
            d = n_in if k == 0 else H
            if rng is not None:
                params[f"Wx{k}"] = glorot_uniform(rng, d, 4 * H)
                params[f"Wh{k}"] = glorot_uniform(rng, H, 4 * H)
            else:
                params[f"Wx{k}"] = np.zeros((d, 4 * H))
                params[f"Wh{k}"] = np.zeros((H, 4 * H))
            b = np.zeros(4 * H)
            b[H:2 * H] = forget_bias
            params[f"b{k}"] = b
        self._register(**params)

    def forward(self, seq, train=True, initial=None, return_state=False):
        """``seq`` is (batch, steps, n_in); ``initial`` optional list of (h0, c0)."""
        seq = np.asarray(seq, dtype=float)
        if seq.ndim != 3 or seq.shape[2] != self.n_in:
            raise ShapeError(f"LSTM expects (batch, steps, {self.n_in}), got {seq.shape}")
        n, T, _ = seq.shape
        H = self.hidden
        self._caches = []
        x = seq
        final = []
        for k in range(self.layers):
            Wx, Wh, b = self.params[f"Wx{k}"], self.params[f"Wh{k}"], self.params[f"b{k}"]
            if initial is not None:
                h, c = (np.array(a, dtype=float) for a in initial[k])
            else:
                h, c = np.zeros((n, H)), np.zeros((n, H))
            h0 = h
            xw = (x.reshape(n * T, -1) @ Wx).reshape(n, T, 4 * H) + b
            hs = np.empty((n, T, H))
            cache = []
            for t in range(T):
                z = xw[:, t] + h @ Wh
                gates = sigmoid(z[:, :3 * H])
                i, f, o = gates[:, :H], gates[:, H:2 * H], gates[:, 2 * H:]
                g = np.tanh(z[:, 3 * H:])
                c_prev = c
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                hs[:, t] = h
                cache.append((c_prev, i, f, o, g, tc))
            hprev_all = np.concatenate([h0[:, None], hs[:, :-1]], axis=1)
            self._caches.append((x, hprev_all, cache))
            final.append((h, c))
            x = hs
        self._shape = (n, T)
        if return_state:
            return final[-1][0], final
        return final[-1][0]

    def backward(self, dh_final):
        n, T = self._shape
        H = self.hidden
        dhs = np.zeros((n, T, H))
        dhs[:, -1] = dh_final
        for k in reversed(range(self.layers)):
            x, hprev_all, cache = self._caches[k]
            Wx, Wh = self.params[f"Wx{k}"], self.params[f"Wh{k}"]
            dz_all = np.empty((n, T, 4 * H))
            dh_next = np.zeros((n, H))
            dc_next = np.zeros((n, H))
            for t in reversed(range(T)):
                c_prev, i, f, o, g, tc = cache[t]
                dh = dhs[:, t] + dh_next
                dc = dh * o * (1.0 - tc * tc) + dc_next
                dz = dz_all[:, t]
                dz[:, :H] = dc * g * i * (1 - i)
                dz[:, H:2 * H] = dc * c_prev * f * (1 - f)
                dz[:, 2 * H:3 * H] = dh * tc * o * (1 - o)
                dz[:, 3 * H:] = dc * i * (1 - g * g)
                dc_next = dc * f
                dh_next = dz @ Wh.T
            flat_dz = dz_all.reshape(n * T, 4 * H)
            self.grads[f"Wx{k}"] += x.reshape(n * T, -1).T @ flat_dz
            self.grads[f"Wh{k}"] += hprev_all.reshape(n * T, H).T @ flat_dz
            self.grads[f"b{k}"] += flat_dz.sum(axis=0)
            dhs = (flat_dz @ Wx.T).reshape(n, T, -1)
        return dhs
