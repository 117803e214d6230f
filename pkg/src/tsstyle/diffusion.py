"""Forward corruption, the classifier-free-guidance training step, and the
guided DDPM sampler with temperature.

Training: each batch item gets its own step t ~ U{1..T} and noise draw; both
encoders read the same clean series; each condition is independently dropped
(content with probability p_c, style with p_s); one optimizer step minimizes
the mean squared error between injected and predicted noise, and the style
constraints are re-projected afterwards.

Sampling: content and style inputs are z-normalized independently and encoded
once. Each reverse step computes the unconditional, content-only, and
style-only predictions in a single stacked forward pass, combines them as
    eps_hat = eps_u + s_c * (eps_c - eps_u) + s_s * (eps_s - eps_u),
applies the standard DDPM posterior update, and injects temperature-scaled
Gaussian noise (none at t = 1). The output is denormalized with the content
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .data import denormalize, normalize
from .errors import NumericError
from .rng import Rng
from .schedule import NoiseSchedule
from .tensor import GradTape


@dataclass(frozen=True)
class GuidanceConfig:
    content_scale: float = 1.0
    style_scale: float = 1.0
    temperature: float = 1.0

    def __post_init__(self):
        for name in ("content_scale", "style_scale", "temperature"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


def forward_noise(x0, t, eps, schedule: NoiseSchedule):
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.

    ``t`` is a scalar or per-row array in [1, T]; x0 and eps must have equal
    shapes, (L,) or (B, L).
    """
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x0 shape {x0.shape}")
    schedule.check_step(t)
    ab = schedule.alpha_bar[np.asarray(t)]
    if x0.ndim == 2 and np.ndim(ab) == 1:
        ab = ab[:, None]
    dt = x0.dtype if x0.dtype in (np.float32, np.float64) else np.float64
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(dt)


def train_step(model, schedule: NoiseSchedule, batch, optimizer, rng: Rng,
               drop_content=None, drop_style=None):
    """One CFG training step on a batch of z-normalized windows.

    Draw order (fixed for reproducibility): steps t, noise eps, content drop
    uniforms, style drop uniforms. Returns the scalar loss.
    """
    dtype = next(iter(model.params.items()))[1].data.dtype
    x0 = np.asarray(batch, dtype=dtype)
    if x0.ndim != 2:
        raise ValueError(f"batch must be (B, L), got {x0.shape}")
    B = x0.shape[0]
    p_c = model.config.denoiser.drop_content if drop_content is None else drop_content
    p_s = model.config.denoiser.drop_style if drop_style is None else drop_style

    t = rng.integers(1, schedule.steps + 1, (B,))
    eps = rng.normal(x0.shape, dtype=dtype)
    x_t = forward_noise(x0, t, eps, schedule)
    keep_c = (rng.uniform((B,), dtype=np.float64) >= p_c).astype(dtype)
    keep_s = (rng.uniform((B,), dtype=np.float64) >= p_s).astype(dtype)

    with GradTape() as tape:
        cond_c = model.encode_content(x0)
        cond_s = model.encode_style(x0)
        pred = model.predict_noise(x_t, t, cond_c, cond_s, keep_c, keep_s)
        diff = ops.sub(pred, eps)
        loss = ops.mean_all(ops.mul(diff, diff))

    loss_value = float(loss.data)
    if not np.isfinite(loss_value):
        raise NumericError(
            f"non-finite training loss {loss_value} "
            f"(batch {B}x{x0.shape[1]}, |x0|max {np.abs(x0).max():.3g}, "
            f"steps t in [{t.min()}, {t.max()}])"
        )
    tape.backward(loss)
    optimizer.step()
    optimizer.zero_grad()
    model.project_constraints()
    return loss_value


def _combine(eps_u, eps_c, eps_s, s_c, s_s):
    dt = eps_u.dtype.type
    return eps_u + dt(s_c) * (eps_c - eps_u) + dt(s_s) * (eps_s - eps_u)


def _reverse_loop(model, schedule, length, cond_c, cond_s, guidance, rngs,
                  clip_x0=None):
    """Shared DDPM reverse loop over a group of independent items.

    ``cond_c``/``cond_s`` are (P, L) encoded representations (or None for the
    fully unconditional path). Each item draws x_T and per-step z from its own
    rng; draws scale with the temperature but the draw sequence does not, so
    runs with different temperatures share their underlying randomness.
    """
    dtype = next(iter(model.params.items()))[1].data.dtype
    P = len(rngs)
    T = schedule.steps
    lam = guidance.temperature
    x = np.stack([rng.normal((length,), dtype=dtype) for rng in rngs])
    conditional = cond_c is not None

    if conditional:
        zeros = np.zeros(P, dtype=dtype)
        ones = np.ones(P, dtype=dtype)
        keep_c = np.concatenate([zeros, ones, zeros])
        keep_s = np.concatenate([zeros, zeros, ones])
        cc = np.concatenate([cond_c] * 3).astype(dtype)
        cs = np.concatenate([cond_s] * 3).astype(dtype)

    for t in range(T, 0, -1):
        if conditional:
            stacked = np.concatenate([x, x, x])
            out = model.predict_noise(stacked, t, cc, cs, keep_c, keep_s).data
            eps_hat = _combine(out[:P], out[P : 2 * P], out[2 * P :],
                               guidance.content_scale, guidance.style_scale)
        else:
            eps_hat = model.predict_noise(x, t).data

        alpha = float(schedule.alpha[t])
        alpha_bar = float(schedule.alpha_bar[t])
        if clip_x0 is not None:
            x0_est = (x - float(np.sqrt(1.0 - alpha_bar)) * eps_hat) / float(np.sqrt(alpha_bar))
            x0_est = np.clip(x0_est, -clip_x0, clip_x0)
            ab_prev = float(schedule.alpha_bar[t - 1])
            beta = float(schedule.beta[t])
            mean = (
                float(np.sqrt(alpha)) * (1.0 - ab_prev) * x
                + float(np.sqrt(ab_prev)) * beta * x0_est
            ) / (1.0 - alpha_bar)
        else:
            coef = (1.0 - alpha) / np.sqrt(1.0 - alpha_bar)
            mean = (x - dtype.type(coef) * eps_hat) / dtype.type(np.sqrt(alpha))
        if t > 1:
            z = np.stack([rng.normal((length,), dtype=dtype) for rng in rngs])
            x = mean + dtype.type(lam * schedule.sigma[t]) * z
        else:
            x = mean
        if not np.isfinite(x).all():
            raise NumericError(f"sampler produced non-finite values at step {t}")
    return x


def sample(model, a, b, schedule: NoiseSchedule, guidance: GuidanceConfig, rng):
    """Style transfer: content of ``a`` (1-D), style of ``b`` (1-D, same length).

    Returns the generated series on the content's original scale.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("sample expects 1-D content and style series")
    if a.shape != b.shape:
        raise ValueError(f"content length {a.shape[0]} != style length {b.shape[0]}")
    if schedule.steps < 1:
        raise ValueError("schedule must have at least one step")
    rng = rng if isinstance(rng, Rng) else Rng(rng)

    an, mu_a, sigma_a = normalize(a)
    bn, _, _ = normalize(b)
    cond_c = model.encode_content(an[None]).data
    cond_s = model.encode_style(bn[None]).data
    out = _reverse_loop(model, schedule, a.shape[0], cond_c, cond_s, guidance, [rng])
    return denormalize(out[0], mu_a, sigma_a)


def sample_unconditional(model, length, schedule: NoiseSchedule, temperature, rng):
    """Reverse diffusion with no conditions at all; returns a normalized-scale
    series. Consumes the same rng sequence as the guided sampler."""
    rng = rng if isinstance(rng, Rng) else Rng(rng)
    guidance = GuidanceConfig(0.0, 0.0, temperature)
    out = _reverse_loop(model, schedule, length, None, None, guidance, [rng])
    return out[0]


_MAX_STACK = 64


def sample_batch(model, pairs, guidance: GuidanceConfig, seeds,
                 schedule: NoiseSchedule):
    """Sample one output per (content, style) pair, order-preserving.

    Each item is reproducible from its own seed regardless of batch
    composition; pairs of equal length are stacked into shared reverse loops
    for throughput. Errors are re-raised with the offending pair index.
    """
    if len(pairs) != len(seeds):
        raise ValueError(f"{len(pairs)} pairs but {len(seeds)} seeds")
    prepared = []
    for idx, (a, b) in enumerate(pairs):
        try:
            a = np.asarray(a, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if a.ndim != 1 or a.shape != b.shape:
                raise ValueError(
                    f"content/style shapes {a.shape} vs {b.shape} must be equal 1-D"
                )
            an, mu, sg = normalize(a)
            bn, _, _ = normalize(b)
            prepared.append((idx, an, bn, mu, sg))
        except Exception as exc:
            raise type(exc)(f"pair {idx}: {exc}") from exc

    results = [None] * len(pairs)
    by_length: dict[int, list] = {}
    for item in prepared:
        by_length.setdefault(item[1].shape[0], []).append(item)

    for length, items in by_length.items():
        for start in range(0, len(items), _MAX_STACK):
            chunk = items[start : start + _MAX_STACK]
            an = np.stack([it[1] for it in chunk])
            bn = np.stack([it[2] for it in chunk])
            cond_c = model.encode_content(an).data
            cond_s = model.encode_style(bn).data
            rngs = [Rng(seeds[it[0]]) for it in chunk]
            try:
                out = _reverse_loop(model, schedule, length, cond_c, cond_s,
                                    guidance, rngs)
            except NumericError as exc:
                raise NumericError(
                    f"pairs {[it[0] for it in chunk]}: {exc}"
                ) from exc
            for row, it in enumerate(chunk):
                results[it[0]] = denormalize(out[row], it[3], it[4])
    return results
