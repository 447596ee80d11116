from __future__ import annotations

import numpy as np

from .tensor import Tensor


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(fn, arrays: list, k: int, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``fn(*arrays)`` w.r.t. ``arrays[k]``."""
    x = arrays[k]
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(*arrays)
        flat[i] = orig - step
        fm = fn(*arrays)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return out


def gradcheck(build, arrays, step: float = 1e-6) -> list:
    """Compare analytic and numeric gradients of ``build(*tensors) -> scalar Tensor``.

    Returns the relative error for each input array.
    """
    arrays = [np.array(a, dtype=float) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    build(*tensors).backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def value(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    return [rel_error(analytic[k], numeric_grad(value, arrays, k, step)) for k in range(len(arrays))]
