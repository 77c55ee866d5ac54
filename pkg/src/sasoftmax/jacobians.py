"""Analytic Jacobians of the scoring variants and a finite-difference harness.

For a live row z with s = softmax(z), c = scaler(z) and weights w = c * s,
the Jacobian entry J[j][k] = dw_j/dz_k splits into

    J[j][k] = dc[j][k] * s_j  +  c_j * s_j * (1[j=k] - s_k)

where the first term routes gradient through the scaler (including its
min/max extrema, whose subgradient goes to the lowest tied index) and the
second is the usual softmax Jacobian weighted by the scaler. The v4 clamp
branches min(x_min, 0) / max(x_max, 0) contribute gradient only while they
are strictly active (x_min < 0, x_max > 0); at the boundary the constant
branch owns the derivative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NotNormalized
from .variants import (
    DEFAULT_EPS,
    ALL_KINDS,
    LogitRow,
    ScoreRow,
    VariantKind,
    _checked_values,
    apply_variant,
    masked_extrema,
    masked_softmax,
    variant_scaler,
    variant_weights,
)

FD_STEP = 1e-5
TIE_MARGIN_STEPS = 10.0
ABS_FLOOR = 1e-9


@dataclass(frozen=True)
class JacobianBlock:
    """Dense T x T matrix with entries[j][k] = dweight_j/dlogit_k.

    Rows and columns at indices >= valid_len are exactly 0.
    """

    entries: np.ndarray
    valid_len: int


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing one analytic Jacobian against central differences.

    max_rel_err is the effective relative error: entries whose absolute error
    is at or below the absolute floor contribute 0, so
    passed == (max_rel_err <= tol_rel) holds by construction.
    """

    kind: VariantKind
    t: int
    sample: int
    max_abs_err: float
    max_rel_err: float
    worst_entry: tuple[int, int]
    passed: bool
    skipped_tie: bool


def _jacobian_full_rows(z: np.ndarray, kind: VariantKind, eps: float) -> np.ndarray:
    """Batched closed-form Jacobians for fully live rows. z: (N, T) -> (N, T, T)."""
    z = np.asarray(z, dtype=np.float64)
    n, t = z.shape
    mask = np.ones_like(z, dtype=bool)
    s = masked_softmax(z, mask)
    c = variant_scaler(z, mask, kind, eps)
    cs = c * s

    # Scaler-weighted softmax part: diag(c*s) - outer(c*s, s).
    jac = -cs[:, :, np.newaxis] * s[:, np.newaxis, :]
    diag = np.arange(t)
    jac[:, diag, diag] += cs

    if kind is VariantKind.BASELINE:
        return jac

    # Scaler part dc[j][k] * s_j. All variants contribute the identity term;
    # v2-v4 add extrema columns, v3/v4 add the denominator's quotient-rule term.
    rows = np.arange(n)[:, np.newaxis]
    cols = np.arange(t)[np.newaxis, :]
    mn, mx, amin, amax = masked_extrema(z, mask)

    if kind is VariantKind.V1:
        jac[:, diag, diag] += s
        return jac

    if kind is VariantKind.V2:
        jac[:, diag, diag] += s
        jac[rows, cols, amin[:, np.newaxis]] -= s
        return jac

    if kind is VariantKind.V3:
        u = z - mn[:, np.newaxis]
        d = (mx - mn + eps)[:, np.newaxis]
        gate_min = np.ones(n)
        gate_max = np.ones(n)
    elif kind is VariantKind.V4:
        lo = np.minimum(mn, 0.0)
        hi = np.maximum(mx, 0.0)
        u = z - lo[:, np.newaxis]
        d = (hi - lo + eps)[:, np.newaxis]
        gate_min = (mn < 0.0).astype(np.float64)
        gate_max = (mx > 0.0).astype(np.float64)
    else:
        raise ValueError(f"unhandled kind {kind}")

    jac[:, diag, diag] += s / d
    jac[rows, cols, amin[:, np.newaxis]] -= gate_min[:, np.newaxis] * s / d
    quot = u * s / (d * d)
    jac[rows, cols, amax[:, np.newaxis]] -= gate_max[:, np.newaxis] * quot
    jac[rows, cols, amin[:, np.newaxis]] += gate_min[:, np.newaxis] * quot
    return jac


def _embed_block(block: np.ndarray, total: int) -> np.ndarray:
    v = block.shape[0]
    out = np.zeros((total, total))
    out[:v, :v] = block
    return out


def softmax_jacobian(alpha: ScoreRow) -> JacobianBlock:
    """diag(a) - a a^T on the live block of a baseline weight row."""
    w = np.asarray(alpha.weights, dtype=np.float64)
    a = w[: alpha.valid_len]
    if abs(a.sum() - 1.0) > 1e-8:
        raise NotNormalized(f"weights sum to {a.sum()!r}, expected 1")
    block = np.diag(a) - np.outer(a, a)
    return JacobianBlock(entries=_embed_block(block, w.shape[0]), valid_len=alpha.valid_len)


def variant_jacobian(z: LogitRow, kind: VariantKind, eps: float = DEFAULT_EPS) -> JacobianBlock:
    """Closed-form Jacobian of apply_variant with respect to the logit row."""
    values = _checked_values(z)
    live = values[: z.valid_len][np.newaxis, :]
    block = _jacobian_full_rows(live, kind, eps)[0]
    return JacobianBlock(entries=_embed_block(block, values.shape[0]), valid_len=z.valid_len)


def fd_jacobian(z: LogitRow, kind: VariantKind, eps: float = DEFAULT_EPS,
                h: float = FD_STEP) -> JacobianBlock:
    """Central-difference Jacobian oracle; perturbs live entries only."""
    if h <= 0.0:
        raise ValueError(f"h must be positive, got {h}")
    values = _checked_values(z)
    t = values.shape[0]
    out = np.zeros((t, t))
    for k in range(z.valid_len):
        bump = np.zeros(t)
        bump[k] = h
        plus = apply_variant(LogitRow(values + bump, z.valid_len), kind, eps)
        minus = apply_variant(LogitRow(values - bump, z.valid_len), kind, eps)
        out[:, k] = (plus.weights - minus.weights) / (2.0 * h)
    return JacobianBlock(entries=out, valid_len=z.valid_len)


def is_tie_row(z: LogitRow, kind: VariantKind, h: float = FD_STEP) -> bool:
    """True if a +-h perturbation could flip an extrema choice (or a v4 clamp
    branch), making the finite-difference comparison ill-defined."""
    values = _checked_values(z)
    live = values[: z.valid_len]
    margin = TIE_MARGIN_STEPS * h
    if live.shape[0] > 1:
        gaps = np.diff(np.sort(live))
        if gaps.min() < margin:
            return True
    if kind is VariantKind.V4:
        if abs(live.min()) < margin or abs(live.max()) < margin:
            return True
    return False


def _tie_rows(z: np.ndarray, kind: VariantKind, h: float) -> np.ndarray:
    margin = TIE_MARGIN_STEPS * h
    n, t = z.shape
    tie = np.zeros(n, dtype=bool)
    if t > 1:
        gaps = np.diff(np.sort(z, axis=-1), axis=-1)
        tie |= gaps.min(axis=-1) < margin
    if kind is VariantKind.V4:
        tie |= np.abs(z.min(axis=-1)) < margin
        tie |= np.abs(z.max(axis=-1)) < margin
    return tie


def _fd_full_rows(z: np.ndarray, kind: VariantKind, eps: float, h: float) -> np.ndarray:
    """Batched central differences for fully live rows. z: (N, T) -> (N, T, T)."""
    n, t = z.shape
    mask = np.ones_like(z, dtype=bool)
    out = np.empty((n, t, t))
    for k in range(t):
        bump = np.zeros(t)
        bump[k] = h
        plus = variant_weights(z + bump, mask, kind, eps)
        minus = variant_weights(z - bump, mask, kind, eps)
        out[:, :, k] = (plus - minus) / (2.0 * h)
    return out


def gradcheck(samples: int, t_range: tuple[int, int] = (1, 8),
              kinds: tuple[VariantKind, ...] = ALL_KINDS,
              tol_rel: float = 1e-6, seed: int = 0,
              eps: float = DEFAULT_EPS, h: float = FD_STEP,
              abs_floor: float = ABS_FLOOR) -> list[GradCheckReport]:
    """Compare analytic and central-difference Jacobians on random rows.

    Draws ``samples`` rows with entries uniform in [-8, 8] for every
    (row length, kind) pair; rows where the finite-difference stencil could
    cross an extrema tie are reported with skipped_tie=True and not compared.
    Deterministic given the seed.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if tol_rel <= 0.0:
        raise ValueError(f"tol_rel must be positive, got {tol_rel}")
    t_lo, t_hi = t_range
    if not 1 <= t_lo <= t_hi:
        raise ValueError(f"bad row-length range {t_range}")
    kinds = tuple(k for k in ALL_KINDS if k in set(kinds))
    if not kinds:
        raise ValueError("kinds must be non-empty")

    rng = np.random.default_rng(seed)
    reports: list[GradCheckReport] = []
    for t in range(t_lo, t_hi + 1):
        for kind in kinds:
            z = rng.uniform(-8.0, 8.0, size=(samples, t))
            ties = _tie_rows(z, kind, h)
            analytic = _jacobian_full_rows(z, kind, eps)
            fd = _fd_full_rows(z, kind, eps, h)
            abs_err = np.abs(analytic - fd)
            denom = np.maximum(np.abs(analytic), np.abs(fd))
            rel = np.divide(abs_err, denom, out=np.zeros_like(abs_err), where=denom > 0)
            eff_rel = np.where(abs_err <= abs_floor, 0.0, rel)
            for i in range(samples):
                if ties[i]:
                    reports.append(GradCheckReport(
                        kind=kind, t=t, sample=i, max_abs_err=0.0, max_rel_err=0.0,
                        worst_entry=(0, 0), passed=True, skipped_tie=True))
                    continue
                worst_flat = int(np.argmax(eff_rel[i]))
                worst = (worst_flat // t, worst_flat % t)
                max_rel = float(eff_rel[i].max())
                reports.append(GradCheckReport(
                    kind=kind, t=t, sample=i,
                    max_abs_err=float(abs_err[i].max()),
                    max_rel_err=max_rel,
                    worst_entry=worst,
                    passed=bool(max_rel <= tol_rel),
                    skipped_tie=False))
    return reports


def reports_to_json(reports: list[GradCheckReport]) -> str:
    rows = [
        {
            "kind": r.kind.value,
            "t": r.t,
            "sample": r.sample,
            "max_abs_err": r.max_abs_err,
            "max_rel_err": r.max_rel_err,
            "worst_entry": list(r.worst_entry),
            "passed": r.passed,
            "skipped_tie": r.skipped_tie,
        }
        for r in reports
    ]
    return json.dumps(rows, indent=0)


def variant_weight_vjp(scores: np.ndarray, mask: np.ndarray, grad_w: np.ndarray,
                       kind: VariantKind, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Vector-Jacobian product: dL/dz given dL/dw, batched over rows.

    Equivalent to applying the transposed JacobianBlock of each row but in
    O(T) memory per row; the trainer's hot path. Masked entries of the result
    are exactly 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    s = masked_softmax(scores, mask)
    c = variant_scaler(scores, mask, kind, eps)
    w = c * s
    g = np.where(mask, grad_w, 0.0)

    # Softmax part: s_k * (g_k c_k - sum_j g_j w_j).
    gw_sum = np.sum(g * w, axis=-1, keepdims=True)
    dz = g * w - s * gw_sum
    if kind is VariantKind.BASELINE:
        return np.where(mask, dz, 0.0)

    gs = g * s
    if kind is VariantKind.V1:
        return np.where(mask, dz + gs, 0.0)

    mn, mx, amin, amax = masked_extrema(scores, mask)
    gs_sum = np.sum(gs, axis=-1)

    flat_dz = dz.reshape(-1, scores.shape[-1])
    flat_gs = gs.reshape(-1, scores.shape[-1])
    flat_amin = amin.reshape(-1)
    flat_amax = amax.reshape(-1)
    idx = np.arange(flat_dz.shape[0])

    if kind is VariantKind.V2:
        flat_dz += flat_gs
        flat_dz[idx, flat_amin] -= gs_sum.reshape(-1)
        return np.where(mask, flat_dz.reshape(scores.shape), 0.0)

    if kind is VariantKind.V3:
        d = mx - mn + eps
        gate_min = np.ones_like(d)
        gate_max = np.ones_like(d)
    elif kind is VariantKind.V4:
        lo = np.minimum(mn, 0.0)
        hi = np.maximum(mx, 0.0)
        d = hi - lo + eps
        gate_min = (mn < 0.0).astype(np.float64)
        gate_max = (mx > 0.0).astype(np.float64)
    else:
        raise ValueError(f"unhandled kind {kind}")

    flat_d = d.reshape(-1)
    flat_dz += flat_gs / flat_d[:, np.newaxis]
    flat_dz[idx, flat_amin] -= gate_min.reshape(-1) * gs_sum.reshape(-1) / flat_d
    # Denominator quotient-rule term: sum_j g_j s_j u_j / D^2 = gw_sum / D.
    quot = gw_sum.reshape(-1) / flat_d
    flat_dz[idx, flat_amax] -= gate_max.reshape(-1) * quot
    flat_dz[idx, flat_amin] += gate_min.reshape(-1) * quot
    return np.where(mask, flat_dz.reshape(scores.shape), 0.0)
