"""Multilayer perceptron backbone with hand-written backpropagation and Adam.

The network maps a flattened entity plus a sinusoidal embedding of ``t`` to
two heads that share every hidden layer and split at the last affine map:

* a continuous head, returned unchanged (predicted Dirac locations), and
* an optional categorical head, normalised with a softmax over each
  contiguous block of ``type_group`` outputs (one block per point).

Everything runs in float64. All parameters live in one flat vector so the
optimizer and checkpoints deal with a single array; per-layer matrices are
views into it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetConfig",
    "Weights",
    "NonFiniteError",
    "init_weights",
    "time_embedding",
    "forward",
    "backward",
    "AdamState",
    "adam_step",
]


class NonFiniteError(FloatingPointError):
    """A forward activation or gradient contained NaN/inf."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class NetConfig:
    in_dim: int
    out_cont_dim: int
    out_type_dim: int = 0
    type_group: int = 0
    hidden_dim: int = 128
    depth: int = 6
    time_embed_dim: int = 32

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.in_dim < 1 or self.hidden_dim < 1 or self.out_cont_dim < 0:
            raise ValueError("layer widths must be positive")
        if self.time_embed_dim < 0 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be a non-negative even number")
        if self.out_type_dim == 1 or self.out_type_dim < 0:
            raise ValueError("out_type_dim must be 0 or >= 2")
        if self.out_cont_dim + self.out_type_dim == 0:
            raise ValueError("network needs at least one output")
        if self.out_type_dim:
            group = self.group_size
            if group < 2 or self.out_type_dim % group:
                raise ValueError("type_group must be >= 2 and divide out_type_dim")

    @property
    def group_size(self):
        return self.type_group or self.out_type_dim

    @property
    def layer_sizes(self):
        sizes = [self.in_dim + self.time_embed_dim]
        sizes += [self.hidden_dim] * (self.depth - 1)
        sizes.append(self.out_cont_dim + self.out_type_dim)
        return sizes

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass(eq=False)
class Weights:
    """Flat parameter vector with ``(W, b)`` views per affine layer."""

    config: NetConfig
    flat: np.ndarray
    layers: list = field(init=False, repr=False)

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.config.n_params,):
            raise ValueError(
                f"expected {self.config.n_params} parameters, got {self.flat.shape}"
            )
        self.layers = _views(self.flat, self.config.layer_sizes)

    def copy(self):
        return Weights(self.config, self.flat.copy())


def _views(flat, sizes):
    layers, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def init_weights(config, rng):
    """Uniform ``±1/sqrt(fan_in)`` initialisation for weights and biases."""
    sizes = config.layer_sizes
    parts = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_out))
    return Weights(config, np.concatenate(parts))


def time_embedding(t, dim):
    """Sinusoidal features of ``t * 1000`` at geometrically spaced frequencies."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    if half == 0:
        return np.zeros((t.shape[0], 0))
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = 1000.0 * t * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _silu(z, with_deriv=True):
    """Return ``(z * sigmoid(z), d/dz of it)``; the derivative is optional."""
    s = np.negative(z)
    with np.errstate(over="ignore"):
        np.exp(s, out=s)
    s += 1.0
    np.reciprocal(s, out=s)
    h = z * s
    if not with_deriv:
        return h, None
    deriv = 1.0 - s
    deriv *= h
    deriv += s
    return h, deriv


def _prepare(config, x, t):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != config.in_dim:
        raise ValueError(f"input must have trailing size {config.in_dim}, got {x.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x2.shape[0],))
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("t must lie in [0, 1]")
    if config.time_embed_dim:
        x2 = np.concatenate([x2, time_embedding(t, config.time_embed_dim)], axis=1)
    return x2, single


def _softmax_groups(z, group):
    zg = z.reshape(z.shape[0], -1, group)
    # The floor keeps every probability strictly positive.
    zg = np.maximum(zg - zg.max(axis=-1, keepdims=True), -700.0)
    e = np.exp(zg)
    return (e / e.sum(axis=-1, keepdims=True)).reshape(z.shape)


def _run(weights, h, with_deriv=True):
    config = weights.config
    cache = []
    last = len(weights.layers) - 1
    for i, (W, b) in enumerate(weights.layers):
        z = h @ W
        z += b
        if i == last:
            cache.append((h, None))
            h = z
            break
        h_next, deriv = _silu(z, with_deriv)
        cache.append((h, deriv))
        h = h_next
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("non-finite network output", layer=last)
    means = h[:, :config.out_cont_dim]
    simplex = h[:, config.out_cont_dim:]
    if config.out_type_dim:
        simplex = _softmax_groups(simplex, config.group_size)
    return means, simplex, cache


def forward(weights, x, t, return_cache=False):
    """Predict ``(means, simplex)`` for one input vector or a batch of rows.

    ``simplex`` has zero columns when the network has no categorical head.
    With ``return_cache=True`` a third item is returned for :func:`backward`.
    """
    h, single = _prepare(weights.config, x, t)
    means, simplex, cache = _run(weights, h, with_deriv=return_cache)
    if return_cache:
        return means, simplex, (cache, simplex)
    if single:
        return means[0], simplex[0]
    return means, simplex


def backward(weights, x, t, grad_means, grad_simplex=None, cache=None):
    """Gradient of a scalar loss with respect to ``weights.flat``.

    ``grad_means`` and ``grad_simplex`` are the loss gradients with respect to
    the two head outputs (same shapes as returned by :func:`forward`).
    """
    config = weights.config
    if cache is None:
        _, _, cache = forward(weights, x, t, return_cache=True)
    layer_cache, simplex = cache
    B = layer_cache[0][0].shape[0]

    g_out = np.zeros((B, config.out_cont_dim + config.out_type_dim))
    if config.out_cont_dim:
        g_out[:, :config.out_cont_dim] = np.asarray(grad_means, dtype=np.float64).reshape(B, -1)
    if config.out_type_dim and grad_simplex is not None:
        gs = np.asarray(grad_simplex, dtype=np.float64).reshape(B, -1)
        k = config.group_size
        s3 = simplex.reshape(B, -1, k)
        g3 = gs.reshape(B, -1, k)
        dz = s3 * (g3 - (g3 * s3).sum(axis=-1, keepdims=True))
        g_out[:, config.out_cont_dim:] = dz.reshape(B, -1)

    grad = np.empty_like(weights.flat)
    gviews = _views(grad, config.layer_sizes)
    g = g_out
    for i in range(len(weights.layers) - 1, -1, -1):
        h_in, deriv = layer_cache[i]
        if deriv is not None:
            g = g * deriv
        gW, gb = gviews[i]
        np.matmul(h_in.T, g, out=gW)
        gb[:] = g.sum(axis=0)
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise NonFiniteError(f"non-finite gradient in layer {i}", layer=i)
        if i:
            g = g @ weights.layers[i][0].T
    return grad


@dataclass(eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(state, params, grad):
    """One bias-corrected Adam update, applied to ``params`` and ``state`` in place.

    ``params`` is a flat float64 array (typically ``Weights.flat``). Returns
    ``(params, state)`` for convenience.
    """
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params, grad and optimizer moments must share one shape")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    params -= (state.lr / bc1) * state.m / (np.sqrt(state.v / bc2) + state.eps)
    return params, state
