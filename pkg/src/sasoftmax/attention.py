"""Single-head causal attention with a pluggable scoring variant and a
hand-written backward pass.

The forward pass computes z = QK^T/sqrt(d_k) (+ bias), applies the selected
scoring function row by row under the causal mask, and returns the weighted
sum of values. The backward pass rebuilds one T x T JacobianBlock per query
row from the cached logits instead of storing all of them, keeping memory at
O(T^2) while staying exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CacheMismatch, NonFiniteInput, OddHeadDim, ShapeMismatch
from .jacobians import variant_jacobian
from .variants import DEFAULT_EPS, LogitRow, VariantKind, variant_weights


def causal_mask(t: int) -> np.ndarray:
    """Boolean lower-triangular mask: row i may attend to columns j <= i."""
    return np.tril(np.ones((t, t), dtype=bool))


@dataclass(frozen=True)
class AttentionInput:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    kind: VariantKind = VariantKind.BASELINE
    bias: np.ndarray | None = None
    rope: bool = False
    rope_base: float = 10000.0
    eps: float = DEFAULT_EPS
    d_k: int | None = None


@dataclass(frozen=True)
class AttentionCache:
    """Forward intermediates needed for the exact backward pass."""

    q_rot: np.ndarray
    k_rot: np.ndarray
    v: np.ndarray
    scores: np.ndarray
    weights: np.ndarray
    kind: VariantKind
    eps: float
    scale: float
    rope: bool
    rope_base: float
    has_bias: bool


@dataclass(frozen=True)
class AttentionGrads:
    dq: np.ndarray
    dk: np.ndarray
    dv: np.ndarray
    dbias: np.ndarray | None


def _as_matrix(name: str, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {x.shape}")
    return x


def scaled_scores(q: np.ndarray, k: np.ndarray, d_k: int | None = None,
                  bias: np.ndarray | None = None) -> np.ndarray:
    """Causal logit matrix z[i][j] = q_i . k_j / sqrt(d_k) (+ bias).

    Row i is live for columns j <= i; entries above the diagonal are computed
    but carry no meaning and are ignored downstream.
    """
    q = _as_matrix("q", q)
    k = _as_matrix("k", k)
    if q.shape != k.shape:
        raise ShapeMismatch(f"q {q.shape} and k {k.shape} must agree")
    if d_k is None:
        d_k = q.shape[1]
    z = (q @ k.T) / np.sqrt(float(d_k))
    if bias is not None:
        bias = _as_matrix("bias", bias)
        if bias.shape != (q.shape[0], q.shape[0]):
            raise ShapeMismatch(f"bias must be {q.shape[0]}x{q.shape[0]}, got {bias.shape}")
        z = z + bias
    return z


def rope_tables(t: int, d: int, base: float = 10000.0) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (t, d//2) for rotary position embedding."""
    if d % 2 != 0:
        raise OddHeadDim(f"head dimension must be even for rotation pairs, got {d}")
    inv_freq = base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    angles = np.arange(t, dtype=np.float64)[:, np.newaxis] * inv_freq[np.newaxis, :]
    return np.cos(angles), np.sin(angles)


def rope_rotate(x: np.ndarray, base: float = 10000.0) -> np.ndarray:
    """Rotate consecutive feature pairs of each row by its position angle.

    Row p, pair m rotates by p * base**(-2m/d); position 0 is unchanged and
    every row keeps its Euclidean norm.
    """
    x = np.asarray(x, dtype=np.float64)
    cos, sin = rope_tables(x.shape[-2], x.shape[-1], base)
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_rotate_back(grad: np.ndarray, base: float = 10000.0) -> np.ndarray:
    """Pull a gradient back through rope_rotate (rotation by the negated angle)."""
    grad = np.asarray(grad, dtype=np.float64)
    cos, sin = rope_tables(grad.shape[-2], grad.shape[-1], base)
    g_even = grad[..., 0::2]
    g_odd = grad[..., 1::2]
    out = np.empty_like(grad)
    out[..., 0::2] = g_even * cos + g_odd * sin
    out[..., 1::2] = -g_even * sin + g_odd * cos
    return out


def attention_forward(inp: AttentionInput) -> tuple[np.ndarray, AttentionCache]:
    """output[i] = sum_{j<=i} weights[i][j] * v[j], weights per the variant."""
    q = _as_matrix("q", inp.q)
    k = _as_matrix("k", inp.k)
    v = _as_matrix("v", inp.v)
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeMismatch(f"q {q.shape}, k {k.shape}, v {v.shape} must agree")
    for name, arr in (("q", q), ("k", k), ("v", v), ("bias", inp.bias)):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NonFiniteInput(f"{name} contains NaN or Inf")

    d_k = inp.d_k if inp.d_k is not None else q.shape[1]
    q_rot = rope_rotate(q, inp.rope_base) if inp.rope else q
    k_rot = rope_rotate(k, inp.rope_base) if inp.rope else k
    scores = scaled_scores(q_rot, k_rot, d_k, inp.bias)
    weights = variant_weights(scores, causal_mask(q.shape[0]), inp.kind, inp.eps)
    out = weights @ v
    cache = AttentionCache(
        q_rot=q_rot, k_rot=k_rot, v=v, scores=scores, weights=weights,
        kind=inp.kind, eps=inp.eps, scale=1.0 / np.sqrt(float(d_k)),
        rope=inp.rope, rope_base=inp.rope_base, has_bias=inp.bias is not None,
    )
    return out, cache


def attention_backward(cache: AttentionCache, d_out: np.ndarray) -> AttentionGrads:
    """Exact gradients of the attention output with respect to q, k, v, bias.

    dz for query row i is JacobianBlock(row i)^T applied to the weight-space
    gradient d_out[i] @ v^T; blocks are recomputed from the cached logits one
    row at a time.
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != cache.v.shape:
        raise CacheMismatch(f"d_out shape {d_out.shape} does not match forward {cache.v.shape}")

    t = cache.v.shape[0]
    dv = cache.weights.T @ d_out
    dw = d_out @ cache.v.T

    dz = np.zeros((t, t))
    for i in range(t):
        block = variant_jacobian(LogitRow(cache.scores[i], i + 1), cache.kind, cache.eps)
        dz[i] = block.entries.T @ dw[i]

    dq_rot = (dz @ cache.k_rot) * cache.scale
    dk_rot = (dz.T @ cache.q_rot) * cache.scale
    if cache.rope:
        dq = rope_rotate_back(dq_rot, cache.rope_base)
        dk = rope_rotate_back(dk_rot, cache.rope_base)
    else:
        dq, dk = dq_rot, dk_rot
    dbias = dz if cache.has_bias else None
    return AttentionGrads(dq=dq, dk=dk, dv=dv, dbias=dbias)
