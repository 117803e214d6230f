"""Differentiable array operations: elementwise math, matmul, 1-D convolution
variants, interpolation, softmax, layer norm, and the activations.

Each op computes its forward value with numpy and registers a vector-Jacobian
closure on the active GradTape. Ops never mutate inputs. All of them accept
plain arrays (lifted to constant Tensors) or Tensors.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import Tensor, as_tensor, record_op

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record_op(out, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return record_op(out, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad * bd

    def vjp(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return record_op(out, (a, b), vjp)


def matmul(a, b):
    """Matrix product: 2-D x 2-D, N-D x 2-D (applied to the last axis), or
    batched N-D x N-D with identical leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        out = ad @ bd

        def vjp(g):
            ga = g @ bd.T if a.requires_grad else None
            gb = ad.T @ g if b.requires_grad else None
            return ga, gb

    elif ad.ndim > 2 and bd.ndim == 2:
        lead = ad.shape[:-1]
        a2 = ad.reshape(-1, ad.shape[-1])
        out = (a2 @ bd).reshape(*lead, bd.shape[1])

        def vjp(g):
            g2 = g.reshape(-1, bd.shape[1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

    elif ad.ndim == bd.ndim and ad.ndim > 2 and ad.shape[:-2] == bd.shape[:-2]:
        out = ad @ bd

        def vjp(g):
            ga = g @ bd.swapaxes(-1, -2) if a.requires_grad else None
            gb = ad.swapaxes(-1, -2) @ g if b.requires_grad else None
            return ga, gb

    else:
        raise ValueError(f"matmul: unsupported shapes {ad.shape} @ {bd.shape}")
    return record_op(out, (a, b), vjp)


def reshape(x, shape):
    x = as_tensor(x)
    xd = x.data
    out = xd.reshape(shape)

    def vjp(g):
        return (g.reshape(xd.shape),)

    return record_op(out, (x,), vjp)


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    out = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return record_op(out, (x,), vjp)


def crop_last(x, length):
    """Keep the first ``length`` entries of the last axis."""
    x = as_tensor(x)
    xd = x.data
    if length > xd.shape[-1]:
        raise ValueError(f"crop_last: length {length} exceeds axis size {xd.shape[-1]}")
    out = xd[..., :length]

    def vjp(g):
        full = np.zeros_like(xd)
        full[..., :length] = g
        return (full,)

    return record_op(out.copy(), (x,), vjp)


def repeat_last(x, n):
    """Repeat a size-1 last axis ``n`` times (degenerate linear upsample)."""
    x = as_tensor(x)
    xd = x.data
    if xd.shape[-1] != 1:
        raise ValueError(f"repeat_last expects last axis 1, got {xd.shape[-1]}")
    out = np.repeat(xd, n, axis=-1)

    def vjp(g):
        return (g.sum(axis=-1, keepdims=True),)

    return record_op(out, (x,), vjp)


def sum_all(x):
    x = as_tensor(x)
    xd = x.data
    out = np.asarray(xd.sum())

    def vjp(g):
        return (np.broadcast_to(g, xd.shape).astype(xd.dtype),)

    return record_op(out, (x,), vjp)


def mean_all(x):
    x = as_tensor(x)
    xd = x.data
    out = np.asarray(xd.mean())
    inv_n = 1.0 / xd.size

    def vjp(g):
        return ((g * inv_n) * np.ones_like(xd),)

    return record_op(out, (x,), vjp)


def pad1d(x, left, right, mode):
    """Pad the last axis. ``mode`` is "zero" or "reflect" (mirror without edge
    repetition, so [1,2,3] padded left by one becomes [2,1,2,3])."""
    x = as_tensor(x)
    xd = x.data
    if mode not in ("zero", "reflect"):
        raise ValueError(f"pad1d: unknown mode {mode!r}")
    if left == 0 and right == 0:
        return x
    L = xd.shape[-1]
    width = [(0, 0)] * (xd.ndim - 1) + [(left, right)]
    if mode == "zero":
        out = np.pad(xd, width, mode="constant")
    else:
        if max(left, right) > L - 1:
            raise ValueError(
                f"pad1d: reflect padding ({left},{right}) needs input length > "
                f"{max(left, right)}, got {L}"
            )
        out = np.pad(xd, width, mode="reflect")

    def vjp(g):
        core = g[..., left : left + L].copy()
        if mode == "reflect":
            if left:
                core[..., 1 : left + 1] += g[..., :left][..., ::-1]
            if right:
                core[..., L - 1 - right : L - 1] += g[..., left + L :][..., ::-1]
        return (core,)

    return record_op(out, (x,), vjp)


def _conv_valid(x, kernel, stride):
    """Valid (no padding) 1-D convolution core via im2col + GEMM."""
    xd, kd = x.data, kernel.data
    B, c_in, L = xd.shape
    c_out, _, k = kd.shape
    windows = np.lib.stride_tricks.sliding_window_view(xd, k, axis=2)
    if stride > 1:
        windows = windows[:, :, ::stride]
    lp = windows.shape[2]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(B * lp, c_in * k)
    w2 = kd.reshape(c_out, c_in * k)
    out = (cols @ w2.T).reshape(B, lp, c_out).transpose(0, 2, 1)

    def vjp(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * lp, c_out)
        gw = (g2.T @ cols).reshape(c_out, c_in, k) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(B, lp, c_in, k).transpose(0, 2, 1, 3)
            gx = np.zeros_like(xd)
            for j in range(k):
                gx[:, :, j : j + stride * lp : stride] += dcols[:, :, :, j]
        return gx, gw

    return record_op(np.ascontiguousarray(out), (x, kernel), vjp)


def conv1d(x, kernel, stride=1, padding="zero", bias=None):
    """1-D convolution (cross-correlation) of ``x`` with ``kernel``.

    Args:
        x: input of shape (C_in, L) or (B, C_in, L).
        kernel: weights of shape (C_out, C_in, k).
        stride: positive step between output positions.
        padding: "zero" or "reflect" pad to keep length at stride 1
            ((k-1)//2 left, k//2 right), or "none" for a valid convolution.
        bias: optional (C_out,) added per output channel.

    Output length is floor((L + pad_total - k)/stride) + 1.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    squeeze = x.data.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.data.shape)
    if x.data.ndim != 3:
        raise ValueError(f"conv1d: input must be (C_in, L) or (B, C_in, L), got {x.data.shape}")
    if kernel.data.ndim != 3:
        raise ValueError(f"conv1d: kernel must be (C_out, C_in, k), got {kernel.data.shape}")
    _, c_in, L = x.data.shape
    c_out, kc_in, k = kernel.data.shape
    if kc_in != c_in:
        raise ValueError(f"conv1d: kernel expects C_in={kc_in} but input has C_in={c_in}")
    if k < 1:
        raise ValueError(f"conv1d: kernel length k={k} must be >= 1")
    if stride < 1:
        raise ValueError(f"conv1d: stride {stride} must be >= 1")
    if padding == "none":
        pl = pr = 0
    elif padding in ("zero", "reflect"):
        pl, pr = (k - 1) // 2, k // 2
    else:
        raise ValueError(f"conv1d: unknown padding {padding!r}")
    if padding == "reflect" and L < k:
        raise ValueError(f"conv1d: reflect padding requires L >= k, got L={L}, k={k}")
    if L + pl + pr < k:
        raise ValueError(f"conv1d: padded length {L + pl + pr} shorter than kernel k={k}")
    xp = pad1d(x, pl, pr, "reflect" if padding == "reflect" else "zero")
    out = _conv_valid(xp, kernel, stride)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (c_out,):
            raise ValueError(
                f"conv1d: bias shape {bias.data.shape} does not match C_out={c_out}"
            )
        out = add(out, reshape(bias, (c_out, 1)))
    if squeeze:
        out = reshape(out, out.data.shape[1:])
    return out


@lru_cache(maxsize=256)
def _interp_matrix(src_len, target_len):
    pos = np.linspace(0.0, float(src_len - 1), target_len)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src_len - 1)
    w = pos - lo
    m = np.zeros((target_len, src_len), dtype=np.float64)
    m[np.arange(target_len), lo] += 1.0 - w
    m[np.arange(target_len), hi] += w
    return m


def linear_interp_resize(x, target_len):
    """Resize the last axis to ``target_len`` by linear interpolation in index
    space; endpoints are preserved. Requires at least two source points.
    ``target_len == src_len`` returns the input unchanged."""
    x = as_tensor(x)
    src = x.data.shape[-1]
    if src < 2:
        raise ValueError(f"linear_interp_resize: need source length >= 2, got {src}")
    if target_len < 1:
        raise ValueError(f"linear_interp_resize: target_len must be >= 1, got {target_len}")
    if target_len == src:
        return x
    m = _interp_matrix(src, target_len).astype(x.data.dtype)
    out = x.data @ m.T

    def vjp(g):
        return (g @ m,)

    return record_op(out, (x,), vjp)


def softmax_rows(m):
    """Row-stabilized softmax over the last axis; NaN input is rejected."""
    m = as_tensor(m)
    md = m.data
    if np.isnan(md).any():
        raise ValueError("softmax_rows: NaN in input")
    z = md - md.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record_op(y, (m,), vjp)


def layer_norm(x, gain, shift, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then apply the
    affine (gain, shift). ``eps`` sits inside the variance square root."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    xd = x.data
    h = xd.shape[-1]
    if h < 2:
        raise ValueError(f"layer_norm: last axis must be >= 2, got {h}")
    if gain.data.shape != (h,) or shift.data.shape != (h,):
        raise ValueError(
            f"layer_norm: gain/shift shapes {gain.data.shape}/{shift.data.shape} "
            f"do not match feature dim {h}"
        )
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        gshift = g.sum(axis=lead) if shift.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, ggain, gshift

    return record_op(out, (x, gain, shift), vjp)


def gelu(x):
    """GELU with the tanh approximation (fixed variant, so checkpoints are
    portable): 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    x = as_tensor(x)
    xd = x.data
    x2 = xd * xd
    u = _GELU_C * (xd + _GELU_A * (x2 * xd))
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def vjp(g):
        # 0.5*[(1 + t) + x*(1 - t^2)*c*(1 + 3a*x^2)], built in-place
        d = (3.0 * _GELU_A) * x2
        d += 1.0
        d *= _GELU_C
        d *= 1.0 - t * t
        d *= xd
        d += 1.0
        d += t
        d *= 0.5
        d *= g
        return (d,)

    return record_op(out, (x,), vjp)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(x):
    """SiLU (swish): x * sigmoid(x)."""
    x = as_tensor(x)
    xd = x.data
    s = _sigmoid(xd)
    out = xd * s

    def vjp(g):
        return (g * (s * (1.0 + xd * (1.0 - s))),)

    return record_op(out, (x,), vjp)
