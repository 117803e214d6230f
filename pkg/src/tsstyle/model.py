"""Full style-transfer model: both encoders plus the denoiser in one
parameter store, so a single optimizer trains phi, psi, and theta jointly."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import encoders
from .denoiser import DenoiserConfig, init_denoiser, predict_noise
from .encoders import (
    ContentEncoderConfig,
    PlainEncoderConfig,
    StyleEncoderConfig,
    encode_content,
    encode_plain,
    encode_style,
    init_content_encoder,
    init_plain_encoder,
    init_style_encoder,
    project_style_constraints,
)
from .rng import Rng
from .tensor import ParamStore, default_dtype


@dataclass(frozen=True)
class ModelConfig:
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    content: ContentEncoderConfig = field(default_factory=ContentEncoderConfig)
    style: StyleEncoderConfig = field(default_factory=StyleEncoderConfig)
    # "lowpass"/"constrained" are the specialized encoders; "plain" swaps in
    # the generic conv stack used by the encoder-replacement ablation.
    content_kind: str = "lowpass"
    style_kind: str = "constrained"
    plain: PlainEncoderConfig = field(default_factory=PlainEncoderConfig)

    def __post_init__(self):
        if self.content_kind not in ("lowpass", "plain"):
            raise ValueError(f"unknown content encoder kind {self.content_kind!r}")
        if self.style_kind not in ("constrained", "plain"):
            raise ValueError(f"unknown style encoder kind {self.style_kind!r}")


def tiny_config(hidden=16, heads=2, layers=1, patch=4):
    """Small configuration used for fp64 verification and fast tests."""
    return ModelConfig(
        denoiser=DenoiserConfig(hidden=hidden, heads=heads, layers=layers, patch=patch),
        content=ContentEncoderConfig(downsample=4, hidden=8, blocks=1, kernel=3),
        style=StyleEncoderConfig(hidden=4, depth=2, kernel=3),
    )


class StyleTransferModel:
    """Parameters plus forward passes; pure given (params, inputs)."""

    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed=0, dtype=None):
        dtype = dtype or default_dtype()
        rng = Rng(seed) if not isinstance(seed, Rng) else seed
        params = ParamStore()
        if config.content_kind == "lowpass":
            init_content_encoder(params, config.content, rng, dtype)
        else:
            init_plain_encoder(params, config.plain, rng, dtype, prefix="content.")
        if config.style_kind == "constrained":
            init_style_encoder(params, config.style, rng, dtype)
        else:
            init_plain_encoder(params, config.plain, rng, dtype, prefix="style.")
        init_denoiser(params, config.denoiser, rng, dtype)
        return cls(config, params)

    def encode_content(self, x):
        if self.config.content_kind == "lowpass":
            return encode_content(self.params, self.config.content, x)
        return encode_plain(self.params, self.config.plain, x, prefix="content.")

    def encode_style(self, x):
        if self.config.style_kind == "constrained":
            return encode_style(self.params, self.config.style, x)
        return encode_plain(self.params, self.config.plain, x, prefix="style.")

    def predict_noise(self, x_t, t, cond_c=None, cond_s=None, keep_c=None, keep_s=None):
        return predict_noise(self.params, self.config.denoiser, x_t, t,
                             cond_c=cond_c, cond_s=cond_s, keep_c=keep_c, keep_s=keep_s)

    def project_constraints(self):
        """Constraint projection after an optimizer step; mutates parameters
        and must not run concurrently with a forward pass."""
        if self.config.style_kind == "constrained":
            project_style_constraints(self.params, self.config.style)

    def constrained_kernel_names(self):
        if self.config.style_kind != "constrained":
            return []
        return encoders.constrained_kernel_names(self.config.style)

    def astype(self, dtype):
        """Copy of the model at a different precision (fp64 for verification)."""
        return StyleTransferModel(self.config, self.params.astype(dtype))
