import torch
from torch import Tensor

from pairlat.errors import ContractError
from pairlat.utils.seeding import torch_generator


def orthogonal_init(rows: int, cols: int, seed: int) -> Tensor:
    """Random matrix with orthonormal columns (``cols <= rows``) or rows."""

    if rows < 1 or cols < 1:
        raise ContractError(f"Matrix dimensions must be positive, got {rows}x{cols}")

    tall, short = max(rows, cols), min(rows, cols)
    gaussian = torch.randn(
        tall,
        short,
        generator=torch_generator(seed, "orthogonal", rows, cols),
        dtype=torch.float64,
    )
    q, r = torch.linalg.qr(gaussian)
    # Fix the sign ambiguity of QR so the draw is Haar-distributed.
    signs = torch.sign(torch.diagonal(r))
    signs[signs == 0] = 1.0
    q = q * signs

    return q if rows >= cols else q.T.contiguous()
