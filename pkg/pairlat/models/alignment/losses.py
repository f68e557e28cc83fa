import torch
from torch import Tensor

from pairlat.core.functional import (
    cosine_similarity,
    pairwise_cosine_similarity,
    softmax_cross_entropy,
)
from pairlat.errors import ContractError
from pairlat.models.alignment.masks import AlignmentMask
from pairlat.models.alignment.modules import ModalityDecoder


def recon_loss(x_hat: Tensor, x: Tensor, lam: float = 0.1) -> Tensor:
    """Batch mean of ``||x_hat - x||^2 - lam * cos(x_hat, x)``."""

    if x_hat.shape != x.shape:
        raise ContractError(
            f"reconstruction shape {tuple(x_hat.shape)} != target {tuple(x.shape)}"
        )

    loss = ((x_hat - x) ** 2).sum(dim=-1)
    if lam > 0:
        loss = loss - lam * cosine_similarity(x_hat, x)
    return loss.mean()


def masked_similarity(z_c_i: Tensor, z_c_j: Tensor, mask: AlignmentMask) -> Tensor:
    """Row-wise ``cos(z_c^(i), m ⊙ z_c^(j))`` in target coordinates."""

    return cosine_similarity(z_c_i, mask.reconcile(z_c_j))


def pairwise_masked_similarity(z_c_i: Tensor, z_c_j: Tensor, mask: AlignmentMask) -> Tensor:
    return pairwise_cosine_similarity(z_c_i, mask.reconcile(z_c_j))


def symmetric_info_nce(similarity: Tensor, tau: float) -> Tensor:
    """Average of the row-wise and column-wise cross-entropies; positives on
    the diagonal, in-batch negatives elsewhere."""

    if similarity.ndim != 2 or similarity.shape[0] != similarity.shape[1]:
        raise ContractError(f"need a square similarity matrix, got {tuple(similarity.shape)}")
    if similarity.shape[0] < 2:
        raise ContractError("contrastive loss needs at least two rows for negatives")

    logits = similarity / tau
    labels = torch.arange(similarity.shape[0])
    forward = softmax_cross_entropy(logits, labels)
    backward = softmax_cross_entropy(logits.T.contiguous(), labels)
    return 0.5 * (forward + backward)


def contrastive_loss(
    z_c_i: Tensor, z_c_j: Tensor, mask: AlignmentMask, tau: float = 0.07
) -> Tensor:
    """Symmetric i->j / j->i contrastive loss for one mask direction."""

    if not tau > 0:
        raise ContractError(f"temperature must be > 0, got {tau}")
    if len(z_c_i) != len(z_c_j):
        raise ContractError(f"batch sizes differ: {len(z_c_i)} vs {len(z_c_j)}")
    return symmetric_info_nce(pairwise_masked_similarity(z_c_i, z_c_j, mask), tau)


def decode_shared(dec_i: ModalityDecoder, shared_code: Tensor) -> Tensor:
    """Decode a target-layout shared code with a zero specific block."""

    pad = shared_code.new_zeros(*shared_code.shape[:-1], dec_i.d_specific)
    return dec_i(torch.cat([shared_code, pad], dim=-1))


def cross_reconstruction(
    dec_i: ModalityDecoder,
    z_c_j: Tensor,
    mask: AlignmentMask,
    x_i: Tensor,
    lam: float = 0.1,
) -> Tensor:
    """``recon_loss(Dec_i(m ⊙ z_c^(j)), x_i)``."""

    return recon_loss(decode_shared(dec_i, mask.reconcile(z_c_j)), x_i, lam)
