"""Minimal NumPy layers with hand-written backward passes.

Tensors are NHWC, as in the (6, 48, 1) feature maps. Each layer caches what
its backward pass needs during ``forward`` and accumulates parameter
gradients into ``grads`` (same keys as ``params``).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def config(self) -> dict:
        return {"type": type(self).__name__}


class Conv2D(Layer):
    """3x3 (by default) convolution, stride 1, zero 'same' padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, rng=None, dtype=np.float32):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, kernel
        fan_in = kernel * kernel * in_ch
        limit = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-limit, limit, (kernel, kernel, in_ch, out_ch)).astype(dtype)
        self.params["b"] = np.zeros(out_ch, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _cols(self, x: np.ndarray) -> np.ndarray:
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = sliding_window_view(xp, (self.k, self.k), axis=(1, 2))  # B,H,W,C,kh,kw
        b, h, w = x.shape[:3]
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, self.k * self.k * self.in_ch)

    def forward(self, x, training=False):
        self.x_shape = x.shape
        self.cols = self._cols(x)
        b, h, w, _ = x.shape
        out = self.cols @ self.params["W"].reshape(-1, self.out_ch) + self.params["b"]
        return out.reshape(b, h, w, self.out_ch)

    def backward(self, dout):
        b, h, w, _ = self.x_shape
        d2 = dout.reshape(-1, self.out_ch)
        self.grads["W"] += (self.cols.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] += d2.sum(axis=0)
        dcols = (d2 @ self.params["W"].reshape(-1, self.out_ch).T).reshape(b, h, w, self.k, self.k, self.in_ch)
        p = self.k // 2
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, self.in_ch), dtype=dout.dtype)
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p:p + h, p:p + w, :]

    def output_shape(self, s):
        return (s[0], s[1], self.out_ch)

    def config(self):
        return {"type": "Conv2D", "in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.k}


class ReLU(Layer):
    def forward(self, x, training=False):
        self.mask = x > 0
        return x * self.mask

    def backward(self, dout):
        return dout * self.mask


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2, with 'same' (ceil) output size.

    Odd edges are padded with -inf so the trailing row/column pools alone.
    """

    def forward(self, x, training=False):
        b, h, w, c = x.shape
        ho, wo = -(-h // 2), -(-w // 2)
        xp = np.full((b, 2 * ho, 2 * wo, c), -np.inf, dtype=x.dtype)
        xp[:, :h, :w] = x
        win = xp.reshape(b, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, 4)
        self.arg = win.argmax(axis=-1)
        self.x_shape = x.shape
        return np.take_along_axis(win, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        b, h, w, c = self.x_shape
        ho, wo = dout.shape[1:3]
        grad = np.zeros((b, ho, wo, c, 4), dtype=dout.dtype)
        np.put_along_axis(grad, self.arg[..., None], dout[..., None], axis=-1)
        dxp = grad.reshape(b, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * ho, 2 * wo, c)
        return dxp[:, :h, :w]

    def output_shape(self, s):
        return (-(-s[0] // 2), -(-s[1] // 2), s[2])


class Flatten(Layer):
    def forward(self, x, training=False):
        self.x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self.x_shape)

    def output_shape(self, s):
        return (int(np.prod(s)),)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float32, gain: float = 6.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        limit = np.sqrt(gain / n_in)
        self.params["W"] = rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, training=False):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] += self.x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T

    def output_shape(self, s):
        return (self.n_out,)

    def config(self):
        return {"type": "Dense", "n_in": self.n_in, "n_out": self.n_out}


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float, rng=None):
        super().__init__()
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self.keep = None
            return x
        self.keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        return x * self.keep

    def backward(self, dout):
        return dout if self.keep is None else dout * self.keep

    def config(self):
        return {"type": "Dropout", "rate": self.rate}


class Sigmoid(Layer):
    def forward(self, x, training=False):
        self.y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                          np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
        return self.y

    def backward(self, dout):
        return dout * self.y * (1.0 - self.y)


class Adam:
    def __init__(self, layers, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.layers = [l for l in layers if l.params]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in self.layers]
        self.v = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in self.layers]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for layer, m, v in zip(self.layers, self.m, self.v):
            for k, p in layer.params.items():
                g = layer.grads[k]
                m[k] *= b1
                m[k] += (1 - b1) * g
                v[k] *= b2
                v[k] += (1 - b2) * g * g
                p -= (lr_t * m[k] / (np.sqrt(v[k]) + self.eps)).astype(p.dtype)
