"""The small primitive set every pairlat loss is written in."""

import torch
import torch.nn.functional as F
from torch import Tensor

from pairlat.errors import DegenerateInputError

LEAKY_SLOPE = 0.2


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    return F.linear(x, weight, bias)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return F.leaky_relu(x, negative_slope=slope)


def leaky_relu_inverse(y: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return torch.where(y >= 0, y, y / slope)


def _check_nonzero_rows(x: Tensor, what: str) -> Tensor:
    norms = torch.linalg.vector_norm(x, dim=-1)
    if bool((norms == 0).any()):
        rows = torch.nonzero(norms == 0).flatten().tolist()
        raise DegenerateInputError(
            f"Cosine similarity undefined: zero-norm {what} at rows {rows[:8]}"
        )
    return norms


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity; zero-norm rows raise instead of returning 0."""

    norm_a = _check_nonzero_rows(a, "left input")
    norm_b = _check_nonzero_rows(b, "right input")
    return (a * b).sum(dim=-1) / (norm_a * norm_b)


def pairwise_cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """``S[p, q] = cos(a[p], b[q])`` for two (B, d) batches.

    Reduced elementwise rather than through a matmul, so that swapping the
    arguments yields exactly the transpose.
    """

    norm_a = _check_nonzero_rows(a, "left input")
    norm_b = _check_nonzero_rows(b, "right input")
    unit_a = a / norm_a[:, None]
    unit_b = b / norm_b[:, None]
    return (unit_a[:, None, :] * unit_b[None, :, :]).sum(dim=-1)


def softmax_cross_entropy(logits: Tensor, targets: Tensor) -> Tensor:
    return F.cross_entropy(logits, targets)
