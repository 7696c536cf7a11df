"""The adaptively-masked twins layer: dimension selection for embeddings.

Two small MLP branches (one effectively trained by high-frequency samples,
one by low-frequency samples) map a 2-feature frequency descriptor to D
selection logits. Their outputs are mixed by a per-value weight
alpha = sigmoid(standardized log-count), so back-propagation scales branch
updates by alpha and (1 - alpha) and the low-frequency branch is not
drowned out by head-of-distribution traffic.

The selection logits pick a kept-prefix length k+1 through an argmax
one-hot; training relaxes it with a temperature softmax and a
straight-through combination (hard value forward, soft gradient backward).
A fixed lower-triangular matrix turns the one-hot into the prefix mask.

Single branch ablation: mixing with alpha fixed at 1 makes the layer a
single MLP updated by every sample, which is the one-branch variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .ops import affine_backward, affine_forward, softmax, temperated_softmax

DEFAULT_HIDDEN = 16
DEFAULT_TEMPERATURE = 0.2
TEMPERATURE_GRID = (1.0, 0.5, 0.2, 0.1, 0.05)


def mask_matrix(dim: int) -> np.ndarray:
    """D x D matrix with ones where column <= row; transposed against a one-hot
    at k it yields the prefix mask keeping dimensions 0..k."""
    if dim < 1:
        raise ShapeError("mask matrix needs dim >= 1")
    return np.tril(np.ones((dim, dim)))


@dataclass
class AmlParams:
    """One selection branch: an MLP with tanh hidden layers and identity output."""

    layers: list[tuple[np.ndarray, np.ndarray]]  # (W, b) per layer

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][1].shape[0]

    def activations(self) -> list[str]:
        return ["tanh"] * (len(self.layers) - 1) + ["identity"]


@dataclass
class AmtlParams:
    """Twin branches plus the selection temperature and the fixed mask matrix.

    The branches share shapes but never parameters.
    """

    h_aml: AmlParams
    l_aml: AmlParams
    temperature: float
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        shapes_h = [(W.shape, b.shape) for W, b in self.h_aml.layers]
        shapes_l = [(W.shape, b.shape) for W, b in self.l_aml.layers]
        if shapes_h != shapes_l:
            raise ShapeError("twin branches must share layer shapes")
        if not self.temperature > 0.0:
            raise ShapeError(f"temperature must be positive, got {self.temperature}")
        if self.mask is None:
            self.mask = mask_matrix(self.h_aml.output_dim)

    @property
    def dim(self) -> int:
        return self.h_aml.output_dim


@dataclass
class SelectionResult:
    """Everything the selection step produces for one feature value."""

    logits: np.ndarray
    probs: np.ndarray
    soft: np.ndarray
    hard: np.ndarray
    k: int
    alpha: float = float("nan")


def init_aml(rng: np.random.Generator, layer_dims: list[int]) -> AmlParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
    layers = []
    for nin, nout in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / np.sqrt(nin)
        W = rng.uniform(-bound, bound, (nin, nout))
        b = rng.uniform(-bound, bound, nout)
        layers.append((W, b))
    return AmlParams(layers)


def init_amtl(
    rng: np.random.Generator,
    input_dim: int,
    dim: int,
    hidden: int = DEFAULT_HIDDEN,
    temperature: float = DEFAULT_TEMPERATURE,
) -> AmtlParams:
    """Two independently initialized branches drawn from one seeded stream."""
    dims = [input_dim, hidden, dim]
    return AmtlParams(h_aml=init_aml(rng, dims), l_aml=init_aml(rng, dims), temperature=temperature)


def aml_forward(aml: AmlParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Branch output plus the per-layer inputs needed for the backward pass."""
    cache = []
    h = np.asarray(x, dtype=np.float64)
    for (W, b), act in zip(aml.layers, aml.activations()):
        cache.append(h)
        h = affine_forward(h, W, b, act)
    return h, cache


def aml_backward(
    aml: AmlParams, cache: list[np.ndarray], upstream: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients per layer; batched upstreams sum over the batch."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(aml.layers)  # type: ignore[list-item]
    acts = aml.activations()
    g = upstream
    for idx in range(len(aml.layers) - 1, -1, -1):
        W, b = aml.layers[idx]
        g, gW, gb = affine_backward(cache[idx], W, b, acts[idx], g)
        grads[idx] = (gW, gb)
    return grads


def amtl_logits(
    params: AmtlParams, s: np.ndarray, alpha
) -> tuple[np.ndarray, dict]:
    """Frequency-weighted mix of the two branch outputs.

    alpha is a scalar for a single sample or a (B,) vector for a batch; the
    caches retain both branches' activations for amtl_backward.
    """
    s = np.asarray(s, dtype=np.float64)
    alpha_arr = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha_arr < 0.0) or np.any(alpha_arr > 1.0):
        raise ShapeError("alpha must lie in [0, 1]")
    if s.ndim == 1 and alpha_arr.ndim != 0:
        raise ShapeError("scalar alpha required for a single sample")
    if s.ndim == 2 and alpha_arr.shape != (s.shape[0],):
        raise ShapeError("batched alpha must be one weight per row")
    h_out, h_cache = aml_forward(params.h_aml, s)
    l_out, l_cache = aml_forward(params.l_aml, s)
    a = alpha_arr if s.ndim == 1 else alpha_arr[:, None]
    logits = a * h_out + (1.0 - a) * l_out
    caches = {"alpha": alpha_arr, "h_cache": h_cache, "l_cache": l_cache}
    return logits, caches


def select(logits: np.ndarray, temperature: float) -> SelectionResult:
    """Hard and relaxed selection from D logits for one feature value.

    k is the argmax of the softmax probabilities, ties broken toward the
    lower index (the smaller dimension).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ShapeError("select works on one logit vector; batch in the caller")
    probs = softmax(logits)
    soft = temperated_softmax(logits, temperature)
    k = int(np.argmax(probs))
    hard = np.zeros_like(probs)
    hard[k] = 1.0
    return SelectionResult(logits=logits, probs=probs, soft=soft, hard=hard, k=k)


def select_hard(logits: np.ndarray) -> np.ndarray:
    """Inference-path selection: argmax indices only, no relaxation, batched."""
    logits = np.asarray(logits, dtype=np.float64)
    probs = softmax(logits)
    return np.argmax(probs, axis=-1)


def one_hot_rows(ks: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((len(ks), dim))
    out[np.arange(len(ks)), ks] = 1.0
    return out


def ste_combine(soft: np.ndarray, hard: np.ndarray) -> np.ndarray:
    """Straight-through combination soft + stop_gradient(hard - soft).

    The forward value equals the hard one-hot exactly; by contract the
    backward pass routes the full upstream gradient to the soft vector and
    none to the hard one (see model backward and temperated_softmax_backward).
    """
    soft = np.asarray(soft, dtype=np.float64)
    hard = np.asarray(hard, dtype=np.float64)
    if soft.shape != hard.shape:
        raise ShapeError(f"soft {soft.shape} vs hard {hard.shape}")
    ones = hard == 1.0
    if not ((hard == 0.0) | ones).all() or np.any(ones.sum(axis=-1) != 1):
        raise ShapeError("hard vector must be exactly one-hot")
    return hard.copy()


def mask_from_selection(t: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Prefix mask M^T t; rows of a batched t are masked independently."""
    t = np.asarray(t, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or t.shape[-1] != M.shape[0]:
        raise ShapeError(f"selection {t.shape} does not conform with mask matrix {M.shape}")
    return t @ M


def apply_mask(e: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Elementwise product; a prefix mask zeroes everything past the kept prefix."""
    e = np.asarray(e, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if e.shape != m.shape:
        raise ShapeError(f"embedding {e.shape} vs mask {m.shape}")
    return e * m


def amtl_backward(
    params: AmtlParams, caches: dict, upstream_grad_on_logits: np.ndarray
) -> dict:
    """Branch parameter gradients; the mixing weight scales the high-frequency
    branch by alpha and the low-frequency branch by (1 - alpha)."""
    g = np.asarray(upstream_grad_on_logits, dtype=np.float64)
    alpha = caches["alpha"]
    a = alpha if g.ndim == 1 else np.asarray(alpha)[:, None]
    h_grads = aml_backward(params.h_aml, caches["h_cache"], a * g)
    l_grads = aml_backward(params.l_aml, caches["l_cache"], (1.0 - a) * g)
    return {"h": h_grads, "l": l_grads}
