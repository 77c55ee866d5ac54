"""Row-wise scoring kernels: softmax and its self-adjusting variants.

Each variant multiplies the softmax output elementwise by a scaler built
from the same logits:

    baseline:  softmax(x)
    v1:        x * softmax(x)
    v2:        (x - x_min) * softmax(x)
    v3:        (x - x_min) / (x_max - x_min + eps) * softmax(x)
    v4:        (x - min(x_min, 0)) / (max(x_max, 0) - min(x_min, 0) + eps)
                 * softmax(x)

Extrema are taken over the unmasked (causal) entries only, ties resolve to
the lowest index, and masked positions are forced to exactly 0 in every
output. All arithmetic is 64-bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRow, NonFiniteInput

DEFAULT_EPS = 1e-10


class VariantKind(enum.Enum):
    """Selects the scoring function applied to a logit row."""

    BASELINE = "baseline"
    V1 = "v1"
    V2 = "v2"
    V3 = "v3"
    V4 = "v4"

    @classmethod
    def from_string(cls, name: str) -> "VariantKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown variant {name!r} (expected one of: {valid})") from None


# Enum order doubles as the canonical serialization order.
ALL_KINDS = tuple(VariantKind)


@dataclass(frozen=True)
class LogitRow:
    """Pre-softmax scores for one query position.

    Only the first ``valid_len`` entries are live; the tail is masked and
    ignored by every operation.
    """

    values: np.ndarray
    valid_len: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError(f"logit row must be 1-D, got shape {self.values.shape}")


@dataclass(frozen=True)
class ScoreRow:
    """Post-variant attention weights; entries at index >= valid_len are exactly 0."""

    weights: np.ndarray
    valid_len: int


@dataclass(frozen=True)
class RowExtrema:
    """Min/max over the unmasked entries of a row, ties resolved to the lowest index."""

    min_val: float
    max_val: float
    argmin: int
    argmax: int


def _checked_values(z: LogitRow) -> np.ndarray:
    if z.valid_len < 1:
        raise EmptyRow(f"valid_len must be >= 1, got {z.valid_len}")
    if z.valid_len > z.values.shape[0]:
        raise ValueError(f"valid_len {z.valid_len} exceeds row length {z.values.shape[0]}")
    if not np.all(np.isfinite(z.values[: z.valid_len])):
        raise NonFiniteInput("unmasked logit entries must be finite")
    return z.values


# ---------------------------------------------------------------------------
# Masked array kernels. These operate on arrays of shape (..., T) with a
# boolean mask of live positions and are shared by the row API, the attention
# layer, and the batched trainer, so all paths compute identical values.
# ---------------------------------------------------------------------------

def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax over masked rows; masked entries come out 0.

    Computed with per-row max subtraction. Every row of ``mask`` must have at
    least one live entry.
    """
    neg = np.where(mask, scores, -np.inf)
    shifted = neg - np.max(neg, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def masked_extrema(scores: np.ndarray, mask: np.ndarray):
    """(min, max, argmin, argmax) over the live entries of each row.

    np.argmin/np.argmax return the first occurrence, which gives the
    lowest-index tie rule needed for deterministic gradients.
    """
    hi_fill = np.where(mask, scores, np.inf)
    lo_fill = np.where(mask, scores, -np.inf)
    return (
        np.min(hi_fill, axis=-1),
        np.max(lo_fill, axis=-1),
        np.argmin(hi_fill, axis=-1),
        np.argmax(lo_fill, axis=-1),
    )


def variant_scaler(scores: np.ndarray, mask: np.ndarray, kind: VariantKind,
                   eps: float = DEFAULT_EPS) -> np.ndarray:
    """The self-adjusting multiplier applied to the softmax output.

    Masked entries are returned as 0 (their value is never used).
    """
    if kind is VariantKind.BASELINE:
        return np.where(mask, 1.0, 0.0)
    if kind is VariantKind.V1:
        return np.where(mask, scores, 0.0)

    mn, mx, _, _ = masked_extrema(scores, mask)
    mn = mn[..., np.newaxis]
    mx = mx[..., np.newaxis]
    if kind is VariantKind.V2:
        scaled = scores - mn
    elif kind is VariantKind.V3:
        scaled = (scores - mn) / (mx - mn + eps)
    elif kind is VariantKind.V4:
        lo = np.minimum(mn, 0.0)
        hi = np.maximum(mx, 0.0)
        scaled = (scores - lo) / (hi - lo + eps)
    else:
        raise ValueError(f"unhandled kind {kind}")
    return np.where(mask, scaled, 0.0)


def variant_weights(scores: np.ndarray, mask: np.ndarray, kind: VariantKind,
                    eps: float = DEFAULT_EPS) -> np.ndarray:
    """scaler(x) * softmax(x) on live entries, exact 0 on masked ones."""
    probs = masked_softmax(scores, mask)
    if kind is VariantKind.BASELINE:
        return probs
    w = variant_scaler(scores, mask, kind, eps) * probs
    return np.where(mask, w, 0.0)


# ---------------------------------------------------------------------------
# Single-row API.
# ---------------------------------------------------------------------------

def _row_mask(total: int, valid_len: int) -> np.ndarray:
    mask = np.zeros(total, dtype=bool)
    mask[:valid_len] = True
    return mask


def softmax_row(z: LogitRow) -> ScoreRow:
    """Baseline softmax of the live entries; masked tail exactly 0."""
    values = _checked_values(z)
    w = masked_softmax(values, _row_mask(values.shape[0], z.valid_len))
    return ScoreRow(weights=w, valid_len=z.valid_len)


def row_extrema(z: LogitRow) -> RowExtrema:
    """Extrema over the live entries only; ties go to the lowest index."""
    values = _checked_values(z)
    mn, mx, amin, amax = masked_extrema(values, _row_mask(values.shape[0], z.valid_len))
    return RowExtrema(min_val=float(mn), max_val=float(mx),
                      argmin=int(amin), argmax=int(amax))


def apply_variant(z: LogitRow, kind: VariantKind, eps: float = DEFAULT_EPS) -> ScoreRow:
    """Evaluate the selected scoring function on one causally masked row."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    values = _checked_values(z)
    w = variant_weights(values, _row_mask(values.shape[0], z.valid_len), kind, eps)
    return ScoreRow(weights=w, valid_len=z.valid_len)
