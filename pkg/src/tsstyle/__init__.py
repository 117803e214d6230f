"""Diffusion-based time-series style transfer at desk scale."""

from .tensor import (
    GradTape,
    ParamStore,
    Tensor,
    as_tensor,
    default_dtype,
    set_default_dtype,
    using_dtype,
)
from .rng import Rng
from .gradcheck import grad_check

__all__ = [
    "GradTape",
    "ParamStore",
    "Tensor",
    "as_tensor",
    "default_dtype",
    "set_default_dtype",
    "using_dtype",
    "Rng",
    "grad_check",
]

__version__ = "0.1.0"
