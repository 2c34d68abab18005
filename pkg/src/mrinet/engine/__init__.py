from . import kernels, ops
from .determinism import is_strict, strict_mode
from .gradcheck import GradCheckReport, finite_difference_check
from .kernels import ConvSpec, output_size, same_padding
from .tape import Gradients, Tape, Var, backward

__all__ = [
    "ConvSpec",
    "GradCheckReport",
    "Gradients",
    "Tape",
    "Var",
    "backward",
    "finite_difference_check",
    "is_strict",
    "kernels",
    "ops",
    "output_size",
    "same_padding",
    "strict_mode",
]
