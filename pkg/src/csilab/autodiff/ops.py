"""Differentiable primitives. Each returns a new ``Tensor``; backward closures
return one gradient per parent (``None`` where no gradient flows)."""

from __future__ import annotations

import numpy as np

from .tensor import AutodiffError, Tensor, _needs_grad, as_tensor

LEAKY_SLOPE = 0.01
L2_EPS = 1e-12
LN_EPS = 1e-5


def _make(data, parents, backward) -> Tensor:
    parents = tuple(parents)
    if any(_needs_grad(p) for p in parents):
        return Tensor(data, _parents=parents, _backward=backward)
    return Tensor(data)


# -- elementwise arithmetic -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise AutodiffError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc
    return _make(out, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise AutodiffError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc
    return _make(out, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise AutodiffError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc
    return _make(out, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b), lambda g: (g / b.data, -g * a.data / (b.data * b.data)))


def scale_shift(x, gamma, beta) -> Tensor:
    """``gamma * x + beta`` in one node."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    out = gamma.data * x.data + beta.data
    return _make(out, (x, gamma, beta), lambda g: (g * gamma.data, g * x.data, g))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise AutodiffError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise AutodiffError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if _needs_grad(a) else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if _needs_grad(b) else None
        return ga, gb

    return _make(out, (a, b), back)


# -- reductions and shape ------------------------------------------------------

def _expand(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)
    return _make(out, (x,), lambda g: (_expand(g, x.shape, axis, keepdims),))


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size / max(out.size, 1)
    return _make(out, (x,), lambda g: (_expand(g, x.shape, axis, keepdims) / n,))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise AutodiffError(f"reshape: cannot view {x.shape} as {shape}") from exc
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (x,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis or i is None for i in items)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]
    basic = _is_basic_index(idx)

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g  # views never alias twice
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(out, (x,), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise AutodiffError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return _make(out, tensors, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# -- nonlinearities ---------------------------------------------------------------

def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    d = np.where(x.data > 0, 1.0, slope)
    return _make(x.data * d, (x,), lambda g: (g * d,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (x,), back)


def masked_softmax(x, mask, axis: int = -1) -> Tensor:
    """Softmax over entries where ``mask`` is true; all-masked rows give zeros.

    Masked logits never reach an arithmetic operation, so their values (even
    non-finite) cannot influence the output.
    """
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    safe = np.where(mask, x.data, -np.inf)
    m = safe.max(axis=axis, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    e = np.exp(safe - m)  # exp(-inf) = 0 for masked entries
    s = e.sum(axis=axis, keepdims=True)
    s[s == 0] = 1.0
    p = e / s

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (x,), back)


def log_softmax(x, axis: int = -1, mask=None) -> Tensor:
    x = as_tensor(x)
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    vals = np.where(mask, x.data, 0.0)
    m = np.where(mask, vals, -np.inf).max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(vals - m), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    lse = m + np.log(np.where(s > 0, s, 1.0))
    out = np.where(mask, vals - lse, 0.0)
    p = np.where(s > 0, e / np.where(s > 0, s, 1.0), 0.0)

    def back(g):
        g = np.where(mask, g, 0.0)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), back)


def l2_normalize(x, axis: int = -1, eps: float = L2_EPS) -> Tensor:
    """``x / max(||x||, eps)``; the zero vector maps to itself."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    big = norm > eps
    denom = np.where(big, norm, eps)
    y = x.data / denom

    def back(g):
        proj = (g * y).sum(axis=axis, keepdims=True)
        return (np.where(big, (g - y * proj) / denom, g / eps),)

    return _make(y, (x,), back)


def masked_mean(x, mask, axis: int) -> Tensor:
    """Mean over entries with ``mask`` true along ``axis``; empty rows give 0."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    w = mask.astype(np.float64)
    cnt = w.sum(axis=axis, keepdims=True)
    w = w / np.where(cnt > 0, cnt, 1.0)
    out = np.where(mask, x.data, 0.0)
    out = (out * w).sum(axis=axis)
    return _make(out, (x,), lambda g: (np.expand_dims(g, axis) * w,))


def layer_norm(x, gain=None, bias=None, axis: int = -1, eps: float = LN_EPS) -> Tensor:
    x = as_tensor(x)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _make(xhat, (x,), lambda g: (inv * (g - g.mean(axis=axis, keepdims=True)
                                              - xhat * (g * xhat).mean(axis=axis, keepdims=True)),))
    if gain is not None:
        out = scale_shift(out, gain, 0.0 if bias is None else bias)
    return out


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (np.where(inside, g, 0.0),))


def sanitize(x) -> Tensor:
    """Replace NaN/Inf by 0; gradients stop at the replaced entries."""
    x = as_tensor(x)
    ok = np.isfinite(x.data)
    if ok.all():
        return x
    return _make(np.where(ok, x.data, 0.0), (x,), lambda g: (np.where(ok, g, 0.0),))


def where(cond, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, b.data)
    return _make(out, (a, b), lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)))


def gather_last(x, index) -> Tensor:
    """``x[..., index]`` picking one entry per leading row."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]

    def back(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, index[..., None], g[..., None], axis=-1)
        return (full,)

    return _make(out, (x,), back)


# -- stochastic -------------------------------------------------------------------

def dropout_mask(shape, p: float, seed: int, layer: int, step: int) -> np.ndarray:
    """Keep-mask scaled by 1/(1-p), from a Philox stream keyed by (seed, layer, step)."""
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(layer), int(step)])
    rng = np.random.Generator(np.random.Philox(key))
    keep = rng.random(shape, dtype=np.float32) >= p
    return keep / (1.0 - p)


def dropout(x, p: float, train: bool, seed: int = 0, layer: int = 0, step: int = 0) -> Tensor:
    x = as_tensor(x)
    if not train or p <= 0.0:
        return x
    if p >= 1.0:
        return mul(x, 0.0)
    m = dropout_mask(x.shape, p, seed, layer, step)
    return _make(x.data * m, (x,), lambda g: (g * m,))
