"""Dense math primitives with paired forward/backward passes.

Everything is plain float64 numpy. Vector arguments are 1-D arrays; every
operation also accepts a leading batch axis (rows are independent samples)
because the trainer works on batches. Backward passes are hand-derived and
checked against :func:`finite_difference_gradient` in the test suite.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

ACTIVATIONS = ("tanh", "identity")


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def affine_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str) -> np.ndarray:
    """activation(W^T x + b) for 1-D x, or row-wise for a 2-D batch.

    W has shape (len(x), len(b)); the identity activation is used for final
    layers whose logits must stay unbounded.
    """
    x, W, b = _as_f64(x), _as_f64(W), _as_f64(b)
    if activation not in ACTIVATIONS:
        raise ShapeError(f"unknown activation {activation!r}")
    if W.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"expected 2-D W and 1-D b, got W.ndim={W.ndim} b.ndim={b.ndim}")
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"non-conforming affine: x{x.shape} W{W.shape} b{b.shape}")
    out = x @ W + b
    if activation == "tanh":
        out = np.tanh(out)
    return out


def affine_backward(
    x: np.ndarray,
    W: np.ndarray,
    b: np.ndarray,
    activation: str,
    upstream_grad: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum(upstream_grad * affine_forward(...)) w.r.t. (x, W, b).

    Batched inputs sum parameter gradients over the batch axis.
    """
    x, W, b = _as_f64(x), _as_f64(W), _as_f64(b)
    upstream_grad = _as_f64(upstream_grad)
    if activation not in ACTIVATIONS:
        raise ShapeError(f"unknown activation {activation!r}")
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"non-conforming affine: x{x.shape} W{W.shape} b{b.shape}")
    if upstream_grad.shape != x.shape[:-1] + (W.shape[1],):
        raise ShapeError(f"upstream grad shape {upstream_grad.shape} does not match output")
    pre = x @ W + b
    if activation == "tanh":
        delta = upstream_grad * (1.0 - np.tanh(pre) ** 2)
    else:
        delta = upstream_grad
    grad_x = delta @ W.T
    if x.ndim == 1:
        grad_W = np.outer(x, delta)
        grad_b = delta.copy()
    else:
        grad_W = x.reshape(-1, x.shape[-1]).T @ delta.reshape(-1, delta.shape[-1])
        grad_b = delta.reshape(-1, delta.shape[-1]).sum(axis=0)
    return grad_x, grad_W, grad_b


def softmax(v: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (max subtraction)."""
    v = _as_f64(v)
    if v.shape[-1] == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = v - v.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def temperated_softmax(v: np.ndarray, temperature: float) -> np.ndarray:
    """softmax(v / T); T=1 is bitwise identical to softmax, T->0 approaches one-hot."""
    if not temperature > 0.0:
        raise ShapeError(f"temperature must be positive, got {temperature}")
    return softmax(_as_f64(v) / temperature)


def temperated_softmax_backward(
    soft: np.ndarray, upstream_grad: np.ndarray, temperature: float
) -> np.ndarray:
    """Jacobian-vector product of temperated_softmax at its output ``soft``.

    grad_v = (1/T) * (soft * g - soft * <soft, g>) per sample; this is the
    backward half of the soft selection path.
    """
    soft, g = _as_f64(soft), _as_f64(upstream_grad)
    if soft.shape != g.shape:
        raise ShapeError(f"soft {soft.shape} vs upstream {g.shape}")
    if not temperature > 0.0:
        raise ShapeError(f"temperature must be positive, got {temperature}")
    inner = (soft * g).sum(axis=-1, keepdims=True)
    return (soft * g - soft * inner) / temperature


def sigmoid(x):
    """Overflow-safe logistic function, elementwise; scalars in, float out."""
    x = _as_f64(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-4
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, per coordinate."""
    x = _as_f64(x)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for j in range(xf.size):
        orig = xf[j]
        xf[j] = orig + eps
        fp = f(x)
        xf[j] = orig - eps
        fm = f(x)
        xf[j] = orig
        flat[j] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1e-12, |a|, |b|) elementwise; the gradient-check metric."""
    a, b = _as_f64(a), _as_f64(b)
    denom = np.maximum(1e-12, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
