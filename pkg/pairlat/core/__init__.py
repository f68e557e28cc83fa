from .autodiff import FiniteGuard, grad_check, value_and_grad
from .functional import (
    LEAKY_SLOPE,
    affine,
    cosine_similarity,
    leaky_relu,
    leaky_relu_inverse,
    pairwise_cosine_similarity,
    softmax_cross_entropy,
)
from .init import orthogonal_init
from .optim import FunctionalAdam, OptState, adam_step
from .params import ParamSet

__all__ = [
    "FiniteGuard",
    "FunctionalAdam",
    "LEAKY_SLOPE",
    "OptState",
    "ParamSet",
    "adam_step",
    "affine",
    "cosine_similarity",
    "grad_check",
    "leaky_relu",
    "leaky_relu_inverse",
    "orthogonal_init",
    "pairwise_cosine_similarity",
    "softmax_cross_entropy",
    "value_and_grad",
]
