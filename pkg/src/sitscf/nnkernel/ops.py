"""Differentiable primitives.

Every op takes and returns :class:`Tensor`; numpy broadcasting applies to the
elementwise ones. Reductions accumulate in float64 and cast back.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_node


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result_dtype(*ts: Tensor):
    return np.result_type(*(t.data.dtype for t in ts))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = (a.data + b.data).astype(_result_dtype(a, b), copy=False)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = (a.data - b.data).astype(_result_dtype(a, b), copy=False)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = b
        out = a.data * np.asarray(c, dtype=a.dtype)
        return make_node(out, (a,), lambda g: (g * np.asarray(c, dtype=g.dtype),))
    out = (a.data * b.data).astype(_result_dtype(a, b), copy=False)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_node(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: left {a.shape} vs right {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return make_node(out, (a, b), backward)


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(axis=axis, dtype=np.float64), dtype=x.dtype)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return make_node(out, (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    out = np.asarray(x.data.mean(axis=axis, dtype=np.float64), dtype=x.dtype)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).astype(x.dtype),)

    return make_node(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),))


def concat(ts: list[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tuple(ts), backward)


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[start:stop]`` along the first axis."""
    out = x.data[start:stop]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return make_node(out, (x,), backward)


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """``x[i, index[i]]`` for a 2-d ``x``."""
    index = np.asarray(index)
    rows = np.arange(x.shape[0])
    out = x.data[rows, index]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[rows, index] = g
        return (gx,)

    return make_node(out, (x,), backward)


def abs(x: Tensor) -> Tensor:  # noqa: A001
    out = np.abs(x.data)
    return make_node(out, (x,), lambda g: (g * np.sign(x.data),))


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    return make_node(out, (x,), lambda g: (g / x.data,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,))


def clamp(x: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values; gradient is zero where clipping happened."""
    out = np.clip(x.data, lo, hi)
    inside = out == x.data
    return make_node(out, (x,), lambda g: (g * inside,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = x.data * mask
    return make_node(out, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1 - out * out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return make_node(out, (x,), lambda g: (g * out * (1 - out),))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    z = x.data
    out = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    return make_node(out, (x,), lambda g: (g * _sigmoid(z),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64).astype(g.dtype)
        return (out * (g - inner),)

    return make_node(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True, dtype=np.float64)).astype(x.dtype)
    out = z - lse

    def backward(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=axis, keepdims=True, dtype=np.float64).astype(g.dtype),)

    return make_node(out, (x,), backward)


def log1m_softmax_at(logits: Tensor, index: np.ndarray) -> Tensor:
    """log(1 - softmax(logits)[i, index[i]]) per row, computed in the log domain.

    Equals logsumexp over the other classes minus logsumexp over all classes,
    so it stays finite and keeps its gradient when the probability rounds to 1.
    """
    z = logits.data
    n, k = z.shape
    if k < 2:
        raise ShapeError("log(1 - p) needs at least two classes")
    index = np.asarray(index)
    rows = np.arange(n)
    m = z.max(axis=1, keepdims=True)
    e = np.exp((z - m).astype(np.float64))
    total = e.sum(axis=1)
    masked = e.copy()
    masked[rows, index] = 0.0
    others = np.maximum(masked.sum(axis=1), np.finfo(np.float64).tiny)
    out = (np.log(others) - np.log(total)).astype(z.dtype)

    def backward(g):
        p = e / total[:, None]
        q = masked / others[:, None]
        return ((g[:, None] * (q - p)).astype(z.dtype),)

    return make_node(out, (logits,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for a batch ``x`` of shape (N, in)."""
    single = x.data.ndim == 1
    xd = x.data[None, :] if single else x.data
    if xd.ndim != 2:
        raise ShapeError(f"dense input must be 1-d or 2-d, got {x.shape}")
    if weight.data.ndim != 2 or weight.shape[1] != xd.shape[1]:
        raise ShapeError(
            f"dense weights shape {weight.shape} do not accept input features {xd.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense bias shape {bias.shape} != (out_features={weight.shape[0]},)")
    out = xd @ weight.data.T + bias.data
    if single:
        out = out[0]

    def backward(g):
        g2 = g[None, :] if single else g
        gx = None
        if x.requires_grad:
            gx = g2 @ weight.data
            gx = gx[0] if single else gx
        gw = g2.T @ xd if weight.requires_grad else None
        gb = g2.sum(axis=0, dtype=np.float64).astype(g.dtype) if bias.requires_grad else None
        return gx, gw, gb

    return make_node(out, (x, weight, bias), backward)


def _im2col(xp: np.ndarray, k: int, t: int) -> np.ndarray:
    """(N, T + k - 1, C) padded input -> (N * T, k * C) windows, column index j * C + c."""
    n, _, c = xp.shape
    return np.concatenate([xp[:, j:j + t, :] for j in range(k)], axis=2).reshape(n * t, k * c)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """'Same' zero-padded 1-d convolution (cross-correlation), time-major layout.

    ``x`` is (N, T, C_in); ``weight`` is (C_out, C_in, k) with k odd; the
    result is (N, T, C_out) with
    ``out[n, t, c] = bias[c] + sum_{c', j} weight[c, c', j] * x_padded[n, t + j, c']``.
    """
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"conv1d input must be (N, T, C_in), got {x.shape}")
    if weight.data.ndim != 3:
        raise ShapeError(f"conv1d weights must be (C_out, C_in, k), got {weight.shape}")
    n, t, c_in = xd.shape
    c_out, w_in, k = weight.shape
    if w_in != c_in:
        raise ShapeError(f"input channels C_in={c_in} != weights in-channels {w_in}")
    if k % 2 != 1:
        raise ShapeError(f"kernel width k={k} must be odd for 'same' padding")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != (C_out={c_out},)")
    pad = k // 2
    cols = _im2col(np.pad(xd, ((0, 0), (pad, pad), (0, 0))), k, t)
    wmat = weight.data.transpose(0, 2, 1).reshape(c_out, k * c_in)
    out = (cols @ wmat.T + bias.data).reshape(n, t, c_out)

    def backward(g):
        g2 = g.reshape(n * t, c_out)
        gw = None
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(c_out, k, c_in).transpose(0, 2, 1)
        gb = g2.sum(axis=0, dtype=np.float64).astype(g.dtype) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            # correlation of the upstream gradient with the flipped kernel
            gcols = _im2col(np.pad(g, ((0, 0), (pad, pad), (0, 0))), k, t)
            wflip = weight.data[:, :, ::-1].transpose(2, 0, 1).reshape(k * c_out, c_in)
            gx = (gcols @ wflip).reshape(n, t, c_in)
        return gx, gw, gb

    return make_node(out, (x, weight, bias), backward)


def conv1d_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Channel-first convenience form: (C_in, T) or (N, C_in, T) in, same layout out."""
    single = x.data.ndim == 2
    xt = reshape(x, (1,) + x.shape) if single else x
    if xt.data.ndim != 3:
        raise ShapeError(f"conv1d input must be (C_in, T) or (N, C_in, T), got {x.shape}")
    out = transpose(conv1d(transpose(xt, (0, 2, 1)), weight, bias), (0, 2, 1))
    return reshape(out, out.shape[1:]) if single else out


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    out = x.data.transpose(axes)
    return make_node(out, (x,), lambda g: (g.transpose(inverse),))


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over the last axis of (N, C) or (N, T, C) input.

    Statistics pool every axis but the channel axis. In train mode the running
    buffers are updated in place (unbiased variance, exponential moving
    average with ``momentum``).
    """
    xd = x.data
    if xd.ndim not in (2, 3):
        raise ShapeError(f"batchnorm input must be (N, C) or (N, T, C), got {x.shape}")
    c = xd.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm gamma/beta shapes {gamma.shape}/{beta.shape} != (C={c},)")
    axes = tuple(range(xd.ndim - 1))
    if train:
        if xd.shape[0] < 2:
            raise ValueError("batchnorm in train mode needs a batch of at least 2 samples")
        m = xd.size // c
        mu = xd.mean(axis=axes, dtype=np.float64)
        centered = xd - mu.astype(xd.dtype)
        var = np.square(centered).mean(axis=axes, dtype=np.float64)
        running_mean *= 1 - momentum
        running_mean += (momentum * mu).astype(running_mean.dtype)
        running_var *= 1 - momentum
        running_var += (momentum * var * m / (m - 1)).astype(running_var.dtype)
        inv_std = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
        xhat = centered * inv_std
    else:
        inv_std = (1.0 / np.sqrt(running_var.astype(np.float64) + eps)).astype(xd.dtype)
        xhat = (xd - running_mean.astype(xd.dtype)) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes, dtype=np.float64).astype(g.dtype)
        gbeta = g.sum(axis=axes, dtype=np.float64).astype(g.dtype)
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            if train:
                mean_d = dxhat.mean(axis=axes, dtype=np.float64).astype(g.dtype)
                mean_dx = (dxhat * xhat).mean(axis=axes, dtype=np.float64).astype(g.dtype)
                gx = inv_std * (dxhat - mean_d - xhat * mean_dx)
            else:
                gx = dxhat * inv_std
        return gx, ggamma, gbeta

    return make_node(out, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1 - rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(x.shape, dtype=np.float32) >= rate
    mask = keep * np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None
    return fn(x)
