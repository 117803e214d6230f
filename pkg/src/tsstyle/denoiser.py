"""Patchified denoising transformer with dual cross-attention and ALiBi.

A noisy series is split into non-overlapping patches, linearly embedded,
time-conditioned, and processed by a stack of blocks, each applying, in order:
self-attention over the noisy tokens, cross-attention to content tokens,
cross-attention to style tokens, and a position-wise MLP. Every sublayer is
pre-LayerNorm with a residual connection. Relative position enters only
through additive linear attention biases (-slope * |i - j|), which is what
lets a model trained at one length run at much longer ones.

Dropped conditions contribute exactly zero: the condition's embedded tokens
and its cross-attention sublayer output are both multiplied by the keep mask,
so an absent condition and an explicitly zeroed one are indistinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ops
from .tensor import ParamStore, as_tensor


@dataclass(frozen=True)
class DenoiserConfig:
    hidden: int = 256
    heads: int = 4
    layers: int = 4
    patch: int = 8
    drop_content: float = 0.10
    drop_style: float = 0.15
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.patch < 1:
            raise ValueError(f"patch size must be >= 1, got {self.patch}")
        for name, p in (("drop_content", self.drop_content), ("drop_style", self.drop_style)):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {p}")

    @property
    def head_dim(self):
        return self.hidden // self.heads


def alibi_slopes(heads: int) -> tuple[float, ...]:
    """Geometric slope set 2^(-8i/heads), i = 1..heads."""
    return tuple(2.0 ** (-8.0 * (i + 1) / heads) for i in range(heads))


def alibi_bias(n_q: int, n_k: int, slope: float) -> np.ndarray:
    """Additive attention bias -slope * |i - j| for one head."""
    if slope <= 0:
        raise ValueError(f"alibi slope must be positive, got {slope}")
    i = np.arange(n_q, dtype=np.float64)[:, None]
    j = np.arange(n_k, dtype=np.float64)[None, :]
    return -slope * np.abs(i - j)


@lru_cache(maxsize=64)
def _alibi_stack(n_q: int, n_k: int, slopes: tuple) -> np.ndarray:
    return np.stack([alibi_bias(n_q, n_k, s) for s in slopes])


def patchify(x, p: int, weight=None, bias=None):
    """Split (B, L) series into ceil(L/p) patches of length p.

    The tail is right-padded with zeros; the pad amount is returned so the
    inverse can crop. With ``weight`` (p, h) the patches are linearly embedded
    into tokens (B, n, h); otherwise raw patches (B, n, p) are returned.
    """
    x = as_tensor(x)
    B, L = x.data.shape
    n = (L + p - 1) // p
    pad = n * p - L
    if pad:
        x = ops.pad1d(x, 0, pad, "zero")
    patches = ops.reshape(x, (B, n, p))
    if weight is None:
        return patches, pad
    tokens = ops.matmul(patches, weight)
    if bias is not None:
        tokens = ops.add(tokens, bias)
    return tokens, pad


def unpatchify(patches, pad: int, length: int):
    """Concatenate (B, n, p) patches back into (B, L) series, cropping the pad."""
    B, n, p = patches.data.shape
    flat = ops.reshape(patches, (B, n * p))
    if pad:
        flat = ops.crop_last(flat, length)
    return flat


def time_embedding(t: int, h: int) -> np.ndarray:
    """Sinusoidal step embedding [sin(t*w0), cos(t*w0), ...] with
    w_j = exp(-j * log(10000) / (h/2 - 1))."""
    if h % 2 != 0:
        raise ValueError(f"time embedding width must be even, got {h}")
    if h < 4:
        raise ValueError(f"time embedding width must be >= 4, got {h}")
    if t < 0:
        raise ValueError(f"diffusion step must be >= 0, got {t}")
    return time_embedding_batch(np.array([t]), h)[0]


def time_embedding_batch(ts, h: int) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64)
    half = h // 2
    freqs = np.exp(-np.arange(half) * np.log(10000.0) / (half - 1))
    args = ts[:, None] * freqs[None, :]
    emb = np.empty((ts.shape[0], h), dtype=np.float64)
    emb[:, 0::2] = np.sin(args)
    emb[:, 1::2] = np.cos(args)
    return emb


def _xavier(rng, shape, dtype):
    fan_in, fan_out = shape[0], shape[1]
    return (rng.normal(shape, dtype=np.float64) * np.sqrt(2.0 / (fan_in + fan_out))).astype(dtype)


def init_denoiser(store: ParamStore, cfg: DenoiserConfig, rng, dtype, prefix="denoiser."):
    """Xavier-normal attention/MLP/patch weights, unit LayerNorm affine, and a
    zero-initialized unpatch head so the initial noise estimate is zero."""
    h, p = cfg.hidden, cfg.patch

    for stream in ("t", "c", "s"):
        store.add(prefix + f"patch.{stream}.w", _xavier(rng, (p, h), dtype))
        store.add(prefix + f"patch.{stream}.b", np.zeros(h, dtype=dtype))

    store.add(prefix + "time.w1", _xavier(rng, (h, h), dtype))
    store.add(prefix + "time.b1", np.zeros(h, dtype=dtype))
    store.add(prefix + "time.w2", _xavier(rng, (h, h), dtype))
    store.add(prefix + "time.b2", np.zeros(h, dtype=dtype))

    for i in range(cfg.layers):
        for sub in ("self", "cross_c", "cross_s"):
            base = prefix + f"block{i}.{sub}."
            store.add(base + "ln.g", np.ones(h, dtype=dtype))
            store.add(base + "ln.s", np.zeros(h, dtype=dtype))
            for w in ("wq", "wk", "wv", "wo"):
                store.add(base + w, _xavier(rng, (h, h), dtype))
        base = prefix + f"block{i}.mlp."
        store.add(base + "ln.g", np.ones(h, dtype=dtype))
        store.add(base + "ln.s", np.zeros(h, dtype=dtype))
        store.add(base + "w1", _xavier(rng, (h, cfg.mlp_ratio * h), dtype))
        store.add(base + "b1", np.zeros(cfg.mlp_ratio * h, dtype=dtype))
        store.add(base + "w2", _xavier(rng, (cfg.mlp_ratio * h, h), dtype))
        store.add(base + "b2", np.zeros(h, dtype=dtype))

    store.add(prefix + "out.w", np.zeros((h, p), dtype=dtype))
    store.add(prefix + "out.b", np.zeros(p, dtype=dtype))


def _attention(store, base, cfg, q_in, kv_in, bias):
    """Multi-head attention: pre-normalized queries attend to raw kv tokens.

    Projections are bias-free (attending to all-zero tokens yields exactly
    zero), and ``bias`` (heads, n_q, n_k) is added to the logits pre-softmax.
    """
    B, n_q, h = q_in.data.shape
    n_k = kv_in.data.shape[1]
    heads, dk = cfg.heads, cfg.head_dim

    def split(x, n):
        x = ops.reshape(x, (B, n, heads, dk))
        return ops.transpose(x, (0, 2, 1, 3))

    q = split(ops.matmul(q_in, store[base + "wq"]), n_q)
    k = split(ops.matmul(kv_in, store[base + "wk"]), n_k)
    v = split(ops.matmul(kv_in, store[base + "wv"]), n_k)

    scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))
    scores = ops.mul(scores, np.asarray(1.0 / np.sqrt(dk), dtype=q.data.dtype))
    scores = ops.add(scores, bias[None].astype(q.data.dtype))
    attn = ops.softmax_rows(scores)
    out = ops.matmul(attn, v)
    out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (B, n_q, h))
    return ops.matmul(out, store[base + "wo"])


def scdit_block(store, prefix, cfg, tokens, cond_c, cond_s, keep_c, keep_s,
                bias_self, bias_c, bias_s):
    """One denoising block. ``cond_c`` / ``cond_s`` are token matrices or None;
    an absent condition leaves its residual branch untouched."""
    ln = lambda x, base: ops.layer_norm(x, store[base + "ln.g"], store[base + "ln.s"])

    base = prefix + "self."
    normed = ln(tokens, base)
    tokens = ops.add(tokens, _attention(store, base, cfg, normed, normed, bias_self))

    if cond_c is not None:
        base = prefix + "cross_c."
        out = _attention(store, base, cfg, ln(tokens, base), cond_c, bias_c)
        if keep_c is not None:
            out = ops.mul(out, keep_c[:, None, None])
        tokens = ops.add(tokens, out)

    if cond_s is not None:
        base = prefix + "cross_s."
        out = _attention(store, base, cfg, ln(tokens, base), cond_s, bias_s)
        if keep_s is not None:
            out = ops.mul(out, keep_s[:, None, None])
        tokens = ops.add(tokens, out)

    base = prefix + "mlp."
    m = ln(tokens, base)
    m = ops.add(ops.matmul(m, store[base + "w1"]), store[base + "b1"])
    m = ops.gelu(m)
    m = ops.add(ops.matmul(m, store[base + "w2"]), store[base + "b2"])
    return ops.add(tokens, m)


def predict_noise(store: ParamStore, cfg: DenoiserConfig, x_t, t, cond_c=None,
                  cond_s=None, keep_c=None, keep_s=None, prefix="denoiser."):
    """Predict the injected noise for a batch of noisy series.

    Args:
        x_t: (B, L) noisy series.
        t: diffusion step in [1, T], scalar or (B,); the embedding sees t - 1.
        cond_c, cond_s: (B, L) content / style representations, or None when
            the condition is absent for the whole batch.
        keep_c, keep_s: optional (B,) 0/1 masks for per-item dropping; a zero
            zeroes the condition's tokens and its cross-attention output.

    Returns the (B, L) noise estimate.
    """
    dtype = store[prefix + "out.w"].data.dtype
    x_t = as_tensor(np.asarray(x_t.data if hasattr(x_t, "data") else x_t, dtype=dtype))
    B, L = x_t.data.shape
    p, h = cfg.patch, cfg.hidden

    tokens, pad = patchify(x_t, p, store[prefix + "patch.t.w"], store[prefix + "patch.t.b"])
    n = tokens.data.shape[1]

    ts = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,))
    if ts.min() < 1:
        raise ValueError(f"diffusion step must be >= 1, got {ts.min()}")
    temb = as_tensor(time_embedding_batch(ts - 1, h).astype(dtype))
    temb = ops.add(ops.matmul(temb, store[prefix + "time.w1"]), store[prefix + "time.b1"])
    temb = ops.silu(temb)
    temb = ops.add(ops.matmul(temb, store[prefix + "time.w2"]), store[prefix + "time.b2"])
    tokens = ops.add(tokens, ops.reshape(temb, (B, 1, h)))

    def embed_condition(cond, keep, stream):
        if cond is None:
            return None
        arr = cond.data if hasattr(cond, "data") else np.asarray(cond)
        if arr.shape != (B, L):
            raise ValueError(
                f"condition shape {arr.shape} does not match noisy input {(B, L)}"
            )
        if not hasattr(cond, "data"):
            cond = as_tensor(arr.astype(dtype))
        toks, _ = patchify(cond, p, store[prefix + f"patch.{stream}.w"],
                           store[prefix + f"patch.{stream}.b"])
        if keep is not None:
            toks = ops.mul(toks, keep[:, None, None])
        return toks

    keep_c = None if keep_c is None else np.asarray(keep_c, dtype=dtype)
    keep_s = None if keep_s is None else np.asarray(keep_s, dtype=dtype)
    tok_c = embed_condition(cond_c, keep_c, "c")
    tok_s = embed_condition(cond_s, keep_s, "s")

    slopes = alibi_slopes(cfg.heads)
    bias_self = _alibi_stack(n, n, slopes)
    bias_c = _alibi_stack(n, tok_c.data.shape[1], slopes) if tok_c is not None else None
    bias_s = _alibi_stack(n, tok_s.data.shape[1], slopes) if tok_s is not None else None

    for i in range(cfg.layers):
        tokens = scdit_block(store, prefix + f"block{i}.", cfg, tokens, tok_c, tok_s,
                             keep_c, keep_s, bias_self, bias_c, bias_s)

    patches = ops.add(ops.matmul(tokens, store[prefix + "out.w"]), store[prefix + "out.b"])
    return unpatchify(patches, pad, L)
