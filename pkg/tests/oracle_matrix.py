"""Independent matrix-level reference for the scoring variants.

Computes each variant directly on whole (T, T) score matrices the way a
tensor-library implementation would: mask to the lower triangle, take
extrema with +-inf fills (or over the tril-zeroed matrix followed by a
clamp, for v4), divide with the 1e-10 epsilon, and zero the upper triangle
of the final result. Shares no code with sasoftmax.variants; used as an
oracle for the row-based kernels and the attention layer.
"""

import numpy as np

EPS = 1e-10


def _tril_mask(t: int) -> np.ndarray:
    return np.tril(np.ones((t, t), dtype=bool))


def masked_softmax_matrix(scores: np.ndarray) -> np.ndarray:
    mask = _tril_mask(scores.shape[0])
    filled = np.where(mask, scores, -np.inf)
    shifted = filled - filled.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def reference_weights(scores: np.ndarray, name: str) -> np.ndarray:
    """name is one of softmax, v1, v2, v3, v4."""
    scores = np.asarray(scores, dtype=np.float64)
    t = scores.shape[0]
    mask = _tril_mask(t)
    probs = masked_softmax_matrix(scores)

    if name == "softmax":
        pass
    elif name == "v1":
        probs = probs * scores
    elif name == "v2":
        mn = np.where(mask, scores, np.inf).min(axis=-1, keepdims=True)
        tril_scores = np.where(mask, scores, 0.0)
        probs = probs * (tril_scores - mn)
    elif name == "v3":
        mn = np.where(mask, scores, np.inf).min(axis=-1, keepdims=True)
        mx = np.where(mask, scores, -np.inf).max(axis=-1, keepdims=True)
        probs = probs * ((scores - mn) / (mx - mn + EPS))
    elif name == "v4":
        tril_scores = np.where(mask, scores, 0.0)
        mn = np.minimum(tril_scores.min(axis=-1, keepdims=True), 0.0)
        mx = np.maximum(tril_scores.max(axis=-1, keepdims=True), 0.0)
        probs = probs * ((scores - mn) / (mx - mn + EPS))
    else:
        raise ValueError(f"unknown variant name {name!r}")

    # Final lower-triangular zeroing, applied to every branch.
    return np.where(mask, probs, 0.0)


def reference_attention(q, k, v, name, bias=None):
    """Whole-matrix causal attention using reference_weights."""
    d_k = q.shape[1]
    scores = (q @ k.T) / np.sqrt(d_k)
    if bias is not None:
        scores = scores + bias
    return reference_weights(scores, name) @ v
