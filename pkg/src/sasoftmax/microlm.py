"""Desk-scale byte-level transformer language model with manual backprop.

Pre-norm decoder blocks (single attention head, 4x GELU MLP, tied input and
output embeddings), trained with Adam. No autograd anywhere: every gradient
is computed by hand, with the attention weights differentiated through the
selected scoring variant. Everything runs in float64 and is deterministic
given (seed, config, corpus).
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .attention import causal_mask, rope_rotate, rope_rotate_back
from .errors import (
    CacheMismatch,
    CorpusTooSmall,
    NonFiniteGradient,
    ShapeMismatch,
    TextTooShort,
    UnknownSymbol,
)
from .jacobians import variant_weight_vjp
from .variants import DEFAULT_EPS, VariantKind, variant_weights

LN_EPS = 1e-5
CHECKPOINT_MAGIC = b"SAXLM001"


@dataclass(frozen=True)
class TrainConfig:
    corpus_path: str
    kind: VariantKind = VariantKind.BASELINE
    layers: int = 2
    d_model: int = 32
    seq_len: int = 64
    batch: int = 16
    steps: int = 2000
    lr: float = 3e-3
    adam_betas: tuple[float, float] = (0.9, 0.95)
    adam_eps: float = 1e-8
    seed: int = 0
    rope: bool = True
    rope_base: float = 10000.0
    eps: float = DEFAULT_EPS
    init_std: float = 0.02

    def __post_init__(self):
        for name in ("layers", "d_model", "seq_len", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        b1, b2 = self.adam_betas
        if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
            raise ValueError(f"adam betas must lie in (0, 1), got {self.adam_betas}")
        if self.d_model % 2 != 0 and self.rope:
            raise ValueError("rope requires an even d_model")


@dataclass
class RunMetrics:
    """Per-step training history."""

    loss: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step_time: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)


@dataclass(frozen=True)
class Vocabulary:
    """Byte-level vocabulary; ids are assigned by ascending byte value."""

    byte_values: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.byte_values)

    def _table(self) -> np.ndarray:
        table = np.full(256, -1, dtype=np.int64)
        table[list(self.byte_values)] = np.arange(self.size)
        return table

    def encode(self, data: bytes) -> np.ndarray:
        ids = self._table()[np.frombuffer(data, dtype=np.uint8)]
        if ids.size and ids.min() < 0:
            bad = int(np.frombuffer(data, dtype=np.uint8)[int(np.argmin(ids))])
            raise UnknownSymbol(f"byte 0x{bad:02x} is not in the vocabulary")
        return ids

    def decode(self, ids: np.ndarray) -> bytes:
        return bytes(self.byte_values[int(i)] for i in np.asarray(ids).ravel())


def load_corpus(path: str | Path) -> tuple[np.ndarray, Vocabulary]:
    """Read a UTF-8 text file and tokenize at the byte level."""
    data = Path(path).read_bytes()
    if len(data) < 2:
        raise CorpusTooSmall(f"corpus {path} has {len(data)} bytes; need at least 2")
    vocab = Vocabulary(byte_values=tuple(sorted(set(data))))
    return vocab.encode(data), vocab


# ---------------------------------------------------------------------------
# Parameters.
# ---------------------------------------------------------------------------

def layer_param_names(layer: int) -> list[str]:
    pre = f"h{layer}."
    return [pre + n for n in
            ("ln1.g", "ln1.b", "wq", "wk", "wv", "wo", "ln2.g", "ln2.b", "w1", "w2")]


def param_names(cfg: TrainConfig) -> list[str]:
    names = ["embed"]
    for i in range(cfg.layers):
        names.extend(layer_param_names(i))
    names.extend(["lnf.g", "lnf.b"])
    return names


def init_params(cfg: TrainConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Normal(0, init_std) weights, unit layer-norm gains, zero biases."""
    d = cfg.d_model
    std = cfg.init_std
    params: dict[str, np.ndarray] = {"embed": rng.normal(0.0, std, (vocab_size, d))}
    for i in range(cfg.layers):
        pre = f"h{i}."
        params[pre + "ln1.g"] = np.ones(d)
        params[pre + "ln1.b"] = np.zeros(d)
        for w in ("wq", "wk", "wv", "wo"):
            params[pre + w] = rng.normal(0.0, std, (d, d))
        params[pre + "ln2.g"] = np.ones(d)
        params[pre + "ln2.b"] = np.zeros(d)
        params[pre + "w1"] = rng.normal(0.0, std, (d, 4 * d))
        params[pre + "w2"] = rng.normal(0.0, std, (4 * d, d))
    params["lnf.g"] = np.ones(d)
    params["lnf.b"] = np.zeros(d)
    return params


# ---------------------------------------------------------------------------
# Elementwise pieces and their backward rules.
# ---------------------------------------------------------------------------

def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * rstd
    return gain * xhat + bias, (xhat, rstd)


def _layer_norm_backward(dy, gain, ctx):
    xhat, rstd = ctx
    dgain = np.sum(dy * xhat, axis=(0, 1))
    dbias = np.sum(dy, axis=(0, 1))
    dxhat = dy * gain
    dx = rstd * (dxhat
                 - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dgain, dbias


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x):
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * phi, phi


def _gelu_backward(dy, x, phi):
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return dy * (phi + x * pdf)


# ---------------------------------------------------------------------------
# Forward / backward.
# ---------------------------------------------------------------------------

def forward_loss(params: dict, inputs: np.ndarray, targets: np.ndarray,
                 cfg: TrainConfig) -> tuple[float, dict]:
    """Mean next-token cross-entropy (nats) plus a cache for backward."""
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if inputs.shape != targets.shape or inputs.ndim != 2:
        raise ShapeMismatch(f"inputs {inputs.shape} and targets {targets.shape} must be equal 2-D")
    b, t = inputs.shape
    d = cfg.d_model
    scale = 1.0 / np.sqrt(float(d))
    mask = causal_mask(t)

    x = params["embed"][inputs]
    layers = []
    for i in range(cfg.layers):
        pre = f"h{i}."
        a, ln1_ctx = _layer_norm(x, params[pre + "ln1.g"], params[pre + "ln1.b"])
        q = a @ params[pre + "wq"]
        k = a @ params[pre + "wk"]
        v = a @ params[pre + "wv"]
        if cfg.rope:
            q_rot = rope_rotate(q, cfg.rope_base)
            k_rot = rope_rotate(k, cfg.rope_base)
        else:
            q_rot, k_rot = q, k
        z = (q_rot @ k_rot.transpose(0, 2, 1)) * scale
        w = variant_weights(z, mask, cfg.kind, cfg.eps)
        att = w @ v
        o = att @ params[pre + "wo"]
        x_mid = x + o
        m_in, ln2_ctx = _layer_norm(x_mid, params[pre + "ln2.g"], params[pre + "ln2.b"])
        h_pre = m_in @ params[pre + "w1"]
        h, phi = _gelu(h_pre)
        mlp = h @ params[pre + "w2"]
        layers.append({
            "a": a, "ln1": ln1_ctx, "q_rot": q_rot, "k_rot": k_rot, "v": v,
            "z": z, "w": w, "att": att, "x_mid": x_mid, "ln2": ln2_ctx,
            "m_in": m_in, "h_pre": h_pre, "h": h, "phi": phi,
        })
        x = x_mid + mlp

    hf, lnf_ctx = _layer_norm(x, params["lnf.g"], params["lnf.b"])
    logits = hf @ params["embed"].T

    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    norm = exp.sum(axis=-1, keepdims=True)
    log_probs = shifted - np.log(norm)
    rows = np.arange(b)[:, np.newaxis]
    cols = np.arange(t)[np.newaxis, :]
    loss = float(-log_probs[rows, cols, targets].mean())

    cache = {
        "cfg": cfg, "inputs": inputs, "targets": targets, "mask": mask,
        "scale": scale, "layers": layers, "hf": hf, "lnf": lnf_ctx,
        "probs": exp / norm, "params": params,
    }
    return loss, cache


def backward(cache: dict) -> dict[str, np.ndarray]:
    """Exact gradients of the mean cross-entropy for every parameter."""
    if "probs" not in cache:
        raise CacheMismatch("cache was not produced by forward_loss")
    cfg: TrainConfig = cache["cfg"]
    params = cache["params"]
    inputs = cache["inputs"]
    targets = cache["targets"]
    b, t = inputs.shape
    d = cfg.d_model

    dlogits = cache["probs"].copy()
    rows = np.arange(b)[:, np.newaxis]
    cols = np.arange(t)[np.newaxis, :]
    dlogits[rows, cols, targets] -= 1.0
    dlogits /= b * t

    grads = {name: None for name in param_names(cfg)}
    grads["embed"] = np.einsum("btv,btd->vd", dlogits, cache["hf"])
    dhf = dlogits @ params["embed"]
    dx, grads["lnf.g"], grads["lnf.b"] = _layer_norm_backward(dhf, params["lnf.g"], cache["lnf"])

    for i in reversed(range(cfg.layers)):
        pre = f"h{i}."
        ctx = cache["layers"][i]

        # x_out = x_mid + mlp(ln2(x_mid))
        dh = dx @ params[pre + "w2"].T
        grads[pre + "w2"] = np.einsum("btk,btd->kd", ctx["h"], dx)
        dh_pre = _gelu_backward(dh, ctx["h_pre"], ctx["phi"])
        dm_in = dh_pre @ params[pre + "w1"].T
        grads[pre + "w1"] = np.einsum("btd,btk->dk", ctx["m_in"], dh_pre)
        dln2, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = _layer_norm_backward(
            dm_in, params[pre + "ln2.g"], ctx["ln2"])
        dx_mid = dx + dln2

        # x_mid = x + attention(ln1(x)) @ wo
        datt = dx_mid @ params[pre + "wo"].T
        grads[pre + "wo"] = np.einsum("btd,bte->de", ctx["att"], dx_mid)
        dw = datt @ ctx["v"].transpose(0, 2, 1)
        dv = ctx["w"].transpose(0, 2, 1) @ datt
        dz = variant_weight_vjp(ctx["z"], cache["mask"], dw, cfg.kind, cfg.eps)
        dq_rot = (dz @ ctx["k_rot"]) * cache["scale"]
        dk_rot = (dz.transpose(0, 2, 1) @ ctx["q_rot"]) * cache["scale"]
        if cfg.rope:
            dq = rope_rotate_back(dq_rot, cfg.rope_base)
            dk = rope_rotate_back(dk_rot, cfg.rope_base)
        else:
            dq, dk = dq_rot, dk_rot
        da = dq @ params[pre + "wq"].T + dk @ params[pre + "wk"].T + dv @ params[pre + "wv"].T
        a = ctx["a"]
        grads[pre + "wq"] = np.einsum("btd,bte->de", a, dq)
        grads[pre + "wk"] = np.einsum("btd,bte->de", a, dk)
        grads[pre + "wv"] = np.einsum("btd,bte->de", a, dv)
        dln1, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = _layer_norm_backward(
            da, params[pre + "ln1.g"], ctx["ln1"])
        dx = dx_mid + dln1

    np.add.at(grads["embed"], inputs.reshape(-1), dx.reshape(-1, d))
    return grads


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for name in grads:
        g = grads[name]
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# Adam.
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={n: np.zeros_like(p) for n, p in params.items()},
        v={n: np.zeros_like(p) for n, p in params.items()},
    )


def adam_step(params: dict, grads: dict, state: AdamState,
              cfg: TrainConfig) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; no weight decay, no clipping."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for {name!r} is not finite at step {state.step + 1}")
    b1, b2 = cfg.adam_betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    return params, state


# ---------------------------------------------------------------------------
# Training loop and evaluation.
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    metrics: RunMetrics
    vocab: Vocabulary
    config: TrainConfig


def sample_windows(tokens: np.ndarray, seq_len: int, batch: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    starts = rng.integers(0, len(tokens) - seq_len, size=batch)
    idx = starts[:, np.newaxis] + np.arange(seq_len)[np.newaxis, :]
    return tokens[idx], tokens[idx + 1]


def train(cfg: TrainConfig) -> TrainResult:
    """Run the full training loop; deterministic given (seed, config, corpus)."""
    tokens, vocab = load_corpus(cfg.corpus_path)
    if len(tokens) < cfg.seq_len + 1:
        raise CorpusTooSmall(
            f"corpus has {len(tokens)} tokens; need at least seq_len+1 = {cfg.seq_len + 1}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, vocab.size, rng)
    state = init_adam(params)
    metrics = RunMetrics()
    for _ in range(cfg.steps):
        t0 = time.perf_counter()
        inputs, targets = sample_windows(tokens, cfg.seq_len, cfg.batch, rng)
        loss, cache = forward_loss(params, inputs, targets, cfg)
        grads = backward(cache)
        norm = global_grad_norm(grads)
        params, state = adam_step(params, grads, state, cfg)
        metrics.loss.append(loss)
        metrics.grad_norm.append(norm)
        metrics.step_time.append(time.perf_counter() - t0)
    return TrainResult(params=params, metrics=metrics, vocab=vocab, config=cfg)


def evaluate_ppl(params: dict, cfg: TrainConfig, vocab: Vocabulary,
                 text: str | bytes) -> float:
    """exp(mean next-token cross-entropy) over non-overlapping windows.

    Windows advance by seq_len so every position is predicted at most once;
    a trailing fragment shorter than one window is dropped.
    """
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    ids = vocab.encode(data)
    t = cfg.seq_len
    if len(ids) < t + 1:
        raise TextTooShort(f"need at least seq_len+1 = {t + 1} tokens, got {len(ids)}")
    n_windows = (len(ids) - 1) // t
    starts = np.arange(n_windows) * t
    idx = starts[:, np.newaxis] + np.arange(t)[np.newaxis, :]
    loss, _ = forward_loss(params, ids[idx], ids[idx + 1], cfg)
    return float(np.exp(loss))


def attention_maps(params: dict, cfg: TrainConfig, vocab: Vocabulary,
                   text: str | bytes) -> list[np.ndarray]:
    """Per-layer attention weight matrices for a single prompt (masked tail 0)."""
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    ids = vocab.encode(data)
    if len(ids) < 1:
        raise TextTooShort("prompt must contain at least one byte")
    inputs = ids[np.newaxis, :]
    _, cache = forward_loss(params, inputs, np.zeros_like(inputs), cfg)
    return [layer["w"][0] for layer in cache["layers"]]


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

def metrics_to_csv(metrics: RunMetrics, wall_times: bool = False) -> str:
    """CSV history. Wall-clock step times are recorded only on request so the
    default artifact is byte-reproducible across runs."""
    lines = ["step,loss,grad_norm,step_time_s"]
    for i in range(len(metrics)):
        dt = metrics.step_time[i] if wall_times else 0.0
        lines.append("%d,%.17g,%.17g,%.17g" % (i, metrics.loss[i], metrics.grad_norm[i], dt))
    return "\n".join(lines) + "\n"


def save_checkpoint(path: str | Path, params: dict, cfg: TrainConfig,
                    vocab: Vocabulary) -> None:
    """Single binary blob: magic, manifest length, JSON manifest, raw float64
    little-endian parameter buffers in manifest order."""
    manifest = {
        "format_version": 1,
        "kind": cfg.kind.value,
        "layers": cfg.layers,
        "d_model": cfg.d_model,
        "seq_len": cfg.seq_len,
        "rope": cfg.rope,
        "rope_base": cfg.rope_base,
        "eps": cfg.eps,
        "vocab": list(vocab.byte_values),
        "params": [{"name": n, "shape": list(params[n].shape)} for n in params],
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in params)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(CHECKPOINT_MAGIC + struct.pack("<Q", len(payload)) + payload + blob)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict, TrainConfig, Vocabulary]:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic header)")
    off = len(CHECKPOINT_MAGIC)
    (payload_len,) = struct.unpack("<Q", raw[off:off + 8])
    off += 8
    manifest = json.loads(raw[off:off + payload_len].decode("utf-8"))
    off += payload_len
    params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        params[entry["name"]] = arr.astype(np.float64)
        off += count * 8
    cfg = TrainConfig(
        corpus_path="",
        kind=VariantKind.from_string(manifest["kind"]),
        layers=manifest["layers"],
        d_model=manifest["d_model"],
        seq_len=manifest["seq_len"],
        rope=manifest["rope"],
        rope_base=manifest["rope_base"],
        eps=manifest["eps"],
    )
    vocab = Vocabulary(byte_values=tuple(manifest["vocab"]))
    return params, cfg, vocab
