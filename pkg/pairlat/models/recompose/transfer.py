from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from pairlat.errors import ContractError, DegenerateInputError
from pairlat.models.alignment.losses import decode_shared
from pairlat.models.alignment.masks import AlignmentMask
from pairlat.models.alignment.modules import ModalityDecoder, ModalityEncoder, encode, model_key
from pairlat.models.recompose.backbone import FrozenBackbone

AGGREGATIONS = ("concat", "mean")


def cross_modal_transfer(
    enc_j: ModalityEncoder, dec_i: ModalityDecoder, mask: AlignmentMask, x_j: Tensor
) -> Tensor:
    """Surrogate ``x~^(i) = Dec_i(m ⊙ Enc_j(x^(j)))``."""

    z_c_j, _ = encode(enc_j, x_j)
    code = mask.reconcile(z_c_j)
    if mask.is_empty or bool((torch.linalg.vector_norm(code, dim=-1) == 0).any()):
        raise DegenerateInputError(
            f"masked shared code {mask.source}->{mask.target} is zero; nothing to transfer"
        )
    return decode_shared(dec_i, code)


def aggregate_contexts(
    transfers: Mapping[int, Tensor] | Sequence[Tensor],
    mode: str = "concat",
    weights: Optional[Mapping[int, float] | Sequence[float]] = None,
) -> Tensor:
    """Combine surrogate inputs from several sources.

    Mappings are read in ascending source-modality order, so concatenation
    order is fixed and averaging does not depend on insertion order.
    """

    if isinstance(transfers, Mapping):
        keys = sorted(transfers)
        items = [transfers[k] for k in keys]
        if isinstance(weights, Mapping):
            weights = [weights[k] for k in keys]
    else:
        items = list(transfers)

    if not items:
        raise ContractError("no transfers to aggregate")
    if len(items) == 1:
        return items[0]

    match mode:
        case "concat":
            return torch.cat(items, dim=-1)
        case "mean":
            shapes = {tuple(t.shape) for t in items}
            if len(shapes) != 1:
                raise ContractError(f"averaging needs equal shapes, got {sorted(shapes)}")
            w = [1.0] * len(items) if weights is None else [float(v) for v in weights]
            if len(w) != len(items) or sum(w) <= 0:
                raise ContractError(f"invalid weights {w} for {len(items)} transfers")
            total = sum(wk * t for wk, t in zip(w, items))
            return total / sum(w)
        case _:
            raise ContractError(f"unknown aggregation {mode!r}, expected {AGGREGATIONS}")


def transfer_all(
    models: nn.ModuleDict,
    masks: Mapping[tuple[int, int], AlignmentMask],
    target: int,
    inputs: Mapping[int, Tensor],
) -> dict[int, Tensor]:
    return {
        j: cross_modal_transfer(
            models[model_key(j)].encoder,
            models[model_key(target)].decoder,
            masks[(j, target)],
            x_j,
        )
        for j, x_j in sorted(inputs.items())
    }


@torch.no_grad()
def evaluate_transfer(
    models: nn.ModuleDict,
    backbone: FrozenBackbone,
    masks: Mapping[tuple[int, int], AlignmentMask],
    target: int,
    inputs: Mapping[int, Tensor],
    labels: Tensor,
    aggregation: str = "mean",
) -> dict:
    """Backbone accuracy (percent) on transferred inputs, per source and
    aggregated, next to the majority-class chance rate."""

    labels = torch.as_tensor(labels, dtype=torch.float64)
    transfers = transfer_all(models, masks, target, inputs)

    def accuracy(x: Tensor) -> float:
        return float((backbone.predict(x) == labels).double().mean() * 100)

    positive = float(labels.mean()) if len(labels) else 0.0
    return {
        "per_source": {str(j): accuracy(x) for j, x in transfers.items()},
        "aggregate": accuracy(aggregate_contexts(transfers, aggregation)),
        "chance": 100.0 * max(positive, 1.0 - positive),
        "n": len(labels),
        "aggregation": aggregation,
    }


def majority_rate(labels) -> float:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        return 0.0
    p = labels.mean()
    return float(100.0 * max(p, 1.0 - p))
