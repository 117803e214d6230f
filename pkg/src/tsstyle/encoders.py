"""Conditioning encoders.

The content encoder is a strided low-pass stack: it shortens the sequence with
a stride-``ds`` convolution, processes it at the reduced resolution, projects
to one channel, and restores the input length by linear interpolation, so the
output is a smoothed, temporally aligned view of the input.

The style encoder runs at full resolution with small constrained kernels: each
constrained kernel is kept zero-mean (it cannot pass a constant offset) and
symmetric (linear phase, no lag), which makes it a learnable high-pass filter.
Constraints are re-projected onto the kernel set after every optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ParamStore, as_tensor


@dataclass(frozen=True)
class ContentEncoderConfig:
    downsample: int = 8
    hidden: int = 128
    blocks: int = 3
    kernel: int = 5

    def __post_init__(self):
        if self.downsample < 1 or self.hidden < 1 or self.blocks < 0 or self.kernel < 1:
            raise ValueError(f"invalid content encoder config {self}")


@dataclass(frozen=True)
class StyleEncoderConfig:
    hidden: int = 16
    depth: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.hidden < 1 or self.depth < 1 or self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"invalid style encoder config {self}")


@dataclass(frozen=True)
class PlainEncoderConfig:
    """Generic conv stack used by the encoder-replacement ablation."""

    hidden: int = 16
    depth: int = 2
    kernel: int = 3


def _he_normal(rng, shape, fan_in, dtype):
    return (rng.normal(shape, dtype=np.float64) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_content_encoder(store: ParamStore, cfg: ContentEncoderConfig, rng, dtype, prefix="content."):
    k, H = cfg.kernel, cfg.hidden
    store.add(prefix + "down.w", _he_normal(rng, (H, 1, k), k, dtype))
    store.add(prefix + "down.b", np.zeros(H, dtype=dtype))
    for i in range(cfg.blocks):
        for j in range(2):
            store.add(prefix + f"block{i}.conv{j}.w", _he_normal(rng, (H, H, k), H * k, dtype))
            store.add(prefix + f"block{i}.conv{j}.b", np.zeros(H, dtype=dtype))
    store.add(prefix + "proj.w", _he_normal(rng, (1, H, 1), H, dtype))
    store.add(prefix + "proj.b", np.zeros(1, dtype=dtype))


def encode_content(store: ParamStore, cfg: ContentEncoderConfig, x, prefix="content."):
    """Map (B, L) series to their (B, L) low-frequency content representation.

    The input is right-padded with zeros to a multiple of ``downsample``; the
    final interpolation restores the padded length, which is then cropped
    back to L.
    """
    x = as_tensor(x)
    B, L = x.data.shape
    ds = cfg.downsample
    if L < ds:
        raise ValueError(f"encode_content: input length {L} shorter than downsample {ds}")
    padded = ds * ((L + ds - 1) // ds)
    h = ops.reshape(x, (B, 1, L))
    if padded > L:
        h = ops.pad1d(h, 0, padded - L, "zero")
    h = ops.gelu(
        ops.conv1d(h, store[prefix + "down.w"], stride=ds, padding="none",
                   bias=store[prefix + "down.b"])
    )
    for i in range(cfg.blocks):
        for j in range(2):
            h = ops.gelu(
                ops.conv1d(h, store[prefix + f"block{i}.conv{j}.w"], padding="zero",
                           bias=store[prefix + f"block{i}.conv{j}.b"])
            )
    h = ops.conv1d(h, store[prefix + "proj.w"], padding="none", bias=store[prefix + "proj.b"])
    low = h.data.shape[-1]
    if low == 1:
        h = ops.repeat_last(h, padded)
    else:
        h = ops.linear_interp_resize(h, padded)
    if padded > L:
        h = ops.crop_last(h, L)
    return ops.reshape(h, (B, L))


def init_style_encoder(store: ParamStore, cfg: StyleEncoderConfig, rng, dtype, prefix="style."):
    """Constrained kernels carry no bias and the head projection is bias-free,
    so constant inputs are annihilated exactly (not just at init)."""
    k, H = cfg.kernel, cfg.hidden
    c_in = 1
    for i in range(cfg.depth):
        w = _he_normal(rng, (H, c_in, k), c_in * k, dtype)
        store.add(prefix + f"conv{i}.w", project_kernel(w))
        c_in = H
    store.add(prefix + "proj.w", _he_normal(rng, (1, H, 1), H, dtype))


def encode_style(store: ParamStore, cfg: StyleEncoderConfig, x, prefix="style."):
    """Map (B, L) series to their (B, L) high-frequency style representation."""
    x = as_tensor(x)
    B, L = x.data.shape
    if L < cfg.kernel:
        raise ValueError(f"encode_style: input length {L} shorter than kernel {cfg.kernel}")
    h = ops.reshape(x, (B, 1, L))
    for i in range(cfg.depth):
        h = ops.gelu(ops.conv1d(h, store[prefix + f"conv{i}.w"], padding="reflect"))
    h = ops.conv1d(h, store[prefix + "proj.w"], padding="none")
    return ops.reshape(h, (B, L))


def init_plain_encoder(store: ParamStore, cfg: PlainEncoderConfig, rng, dtype, prefix):
    k, H = cfg.kernel, cfg.hidden
    c_in = 1
    for i in range(cfg.depth):
        store.add(prefix + f"conv{i}.w", _he_normal(rng, (H, c_in, k), c_in * k, dtype))
        store.add(prefix + f"conv{i}.b", np.zeros(H, dtype=dtype))
        c_in = H
    store.add(prefix + "proj.w", _he_normal(rng, (1, H, 1), H, dtype))
    store.add(prefix + "proj.b", np.zeros(1, dtype=dtype))


def encode_plain(store: ParamStore, cfg: PlainEncoderConfig, x, prefix):
    x = as_tensor(x)
    B, L = x.data.shape
    if L < cfg.kernel:
        raise ValueError(f"encode_plain: input length {L} shorter than kernel {cfg.kernel}")
    h = ops.reshape(x, (B, 1, L))
    for i in range(cfg.depth):
        h = ops.gelu(
            ops.conv1d(h, store[prefix + f"conv{i}.w"], padding="reflect",
                       bias=store[prefix + f"conv{i}.b"])
        )
    h = ops.conv1d(h, store[prefix + "proj.w"], padding="none", bias=store[prefix + "proj.b"])
    return ops.reshape(h, (B, L))


def _demean_fixed_point(w, max_iter=64):
    # Iterate until subtracting the (fp64) per-slice mean changes no element.
    # Exiting at a bitwise fixed point is what makes the projection exactly
    # idempotent in floating point.
    for _ in range(max_iter):
        m = w.mean(axis=-1, keepdims=True, dtype=np.float64)
        w2 = (w.astype(np.float64) - m).astype(w.dtype)
        if np.array_equal(w2, w):
            return w2
        w = w2
    raise RuntimeError("kernel demean did not converge to a fixed point")


def project_kernel(w: np.ndarray) -> np.ndarray:
    """Project a (C_out, C_in, k) kernel onto the symmetric, zero-mean set.

    Symmetrize first (average with the time-reversed kernel), then remove the
    per-(out, in) slice mean. Projecting twice equals projecting once exactly.
    """
    sym = 0.5 * (w + w[..., ::-1])
    return _demean_fixed_point(sym.astype(w.dtype))


def project_style_constraints(store: ParamStore, cfg: StyleEncoderConfig, prefix="style."):
    """Re-project every constrained style kernel in place; returns the store."""
    for i in range(cfg.depth):
        p = store[prefix + f"conv{i}.w"]
        p.data = project_kernel(p.data)
    return store


def constrained_kernel_names(cfg: StyleEncoderConfig, prefix="style."):
    return [prefix + f"conv{i}.w" for i in range(cfg.depth)]
