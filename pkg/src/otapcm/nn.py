"""Small reverse-mode neural network engine on float64 numpy arrays.

Tensors are plain ``numpy.ndarray`` objects with the mini-batch on the leading
axis. Every layer caches what it needs during ``forward`` and consumes that
cache in ``backward``; parameter gradients are left in ``layer.grads``.
"""
from __future__ import annotations

import copy
from typing import Iterable

import numpy as np

from .errors import DimensionError, NumericError, StateError

DTYPE = np.float64


class Layer:
    kind: str = ""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def hyperparams(self) -> dict:
        return {}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-sample output shape; raises DimensionError on mismatch."""
        return input_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called before forward")
        return self._cache

    def clear(self) -> None:
        self._cache = None

    def with_params(self, params: dict[str, np.ndarray]) -> "Layer":
        """Shallow copy sharing hyperparameters but carrying other weights."""
        clone = copy.copy(self)
        clone.params = {k: np.array(params[k], dtype=DTYPE) for k in self.params}
        clone.grads = {}
        clone._cache = None
        return clone

    def __repr__(self) -> str:
        hp = ", ".join(f"{k}={v}" for k, v in self.hyperparams().items())
        return f"{type(self).__name__}({hp})"


class Conv2D(Layer):
    """2-D convolution over (N, C, H, W) inputs with square kernels."""

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, rng: np.random.Generator | None = None):
        super().__init__()
        if stride < 1:
            raise ValueError("conv2d stride must be >= 1")
        if padding < 0 or kernel_size < 1:
            raise ValueError("conv2d needs kernel_size >= 1 and padding >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(6.0 / fan_in)
        self.params = {
            "weight": rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size)),
            "bias": np.zeros(out_channels, dtype=DTYPE),
        }

    def hyperparams(self) -> dict:
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "stride": self.stride, "padding": self.padding}

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise DimensionError(
                f"conv2d expects (C={self.in_channels}, H, W) per sample, got {tuple(input_shape)}")
        _, h, w = input_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv2d kernel {k} larger than padded input {h}x{w}")
        return (self.out_channels, ho, wo)

    def _columns(self, x):
        k, s, p = self.kernel_size, self.stride, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return cols, x.shape, (ho, wo)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        cols, padded_shape, (ho, wo) = self._columns(x)
        wmat = self.params["weight"].reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.params["bias"]
        self._cache = (cols, padded_shape, (ho, wo))
        return out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad_out):
        cols, padded_shape, (ho, wo) = self._take_cache()
        n = grad_out.shape[0]
        k, s, p = self.kernel_size, self.stride, self.padding
        g = grad_out.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_channels)
        self.grads = {
            "weight": (g.T @ cols).reshape(self.params["weight"].shape),
            "bias": g.sum(axis=0),
        }
        dcols = (g @ self.params["weight"].reshape(self.out_channels, -1))
        dcols = dcols.reshape(n, ho, wo, self.in_channels, k, k)
        dx = np.zeros(padded_shape, dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx


class Dense(Layer):
    """Fully connected layer: ``y = x @ W.T + b`` with W of shape (out, in)."""

    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(6.0 / n_in)
        self.params = {
            "weight": rng.uniform(-bound, bound, (n_out, n_in)),
            "bias": np.zeros(n_out, dtype=DTYPE),
        }

    def hyperparams(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.n_in,):
            raise DimensionError(f"dense expects ({self.n_in},) per sample, got {tuple(input_shape)}")
        return (self.n_out,)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_out):
        x = self._take_cache()
        self.grads = {"weight": grad_out.T @ x, "bias": grad_out.sum(axis=0)}
        return grad_out @ self.params["weight"]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, grad_out):
        return grad_out * self._take_cache()


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._take_cache())


LAYER_KINDS = {cls.kind: cls for cls in (Conv2D, Dense, ReLU, Flatten)}


def build_layer(kind: str, hyperparams: dict, rng: np.random.Generator | None = None) -> Layer:
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    if cls in (Conv2D, Dense):
        return cls(**hyperparams, rng=rng)
    return cls()


def infer_shape(layers: Iterable[Layer], input_shape: tuple[int, ...]) -> tuple[int, ...]:
    shape = tuple(input_shape)
    for idx, layer in enumerate(layers):
        try:
            shape = layer.output_shape(shape)
        except DimensionError as exc:
            raise DimensionError(f"layer {idx} ({layer.kind}): {exc}") from None
    return shape


def forward(layers: Iterable[Layer], x: np.ndarray) -> np.ndarray:
    """Run ``x`` (batch-leading) through ``layers`` in order."""
    out = np.asarray(x, dtype=DTYPE)
    for idx, layer in enumerate(layers):
        try:
            out = layer.forward(out)
        except DimensionError as exc:
            raise DimensionError(f"layer {idx} ({layer.kind}): {exc}") from None
    return out


def backward(layers: list[Layer], grad_out: np.ndarray) -> np.ndarray:
    """Propagate ``grad_out`` back through ``layers``; returns the input gradient."""
    grad = grad_out
    for layer in reversed(layers):
        grad = layer.backward(grad)
    return grad


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def loss_softmax_xent(logits: np.ndarray, label: int) -> float:
    """Cross-entropy of a single 1-D logit vector against a class index."""
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.ndim != 1:
        raise DimensionError(f"expected 1-D logits, got shape {logits.shape}")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    return float(-log_softmax(logits)[label])


def softmax_xent_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label out of range")
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        for name, g in grads.items():
            if params[name].shape != np.shape(g):
                raise DimensionError(f"{name}: grad shape {np.shape(g)} != param shape {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
