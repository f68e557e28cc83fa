import json
from pathlib import Path
from typing import Optional

import lightning as L
import torch
import torch.nn.functional as F
from loguru import logger
from safetensors import safe_open
from safetensors.torch import save_file
from torch import Tensor, nn

from pairlat.core.optim import FunctionalAdam
from pairlat.errors import FormatError
from pairlat.models.alignment.modules import Perceptron, PerceptronArgs
from pairlat.utils.utils import tensor_content_hash


class FrozenBackbone(nn.Module):
    """Binary probe on ``x^(target)``: the stand-in for a pre-trained target
    model whose parameters Stage II must leave untouched."""

    def __init__(
        self,
        target: int,
        d_x: int,
        args: Optional[PerceptronArgs] = None,
        seed: int = 0,
    ):
        super().__init__()

        self.target = target
        self.d_x = d_x
        self.probe = Perceptron(d_x, 1, args or PerceptronArgs(), seed, f"backbone{target}")

    def forward(self, x: Tensor) -> Tensor:
        return self.probe(x).squeeze(-1)

    @torch.no_grad()
    def predict(self, x: Tensor) -> Tensor:
        return (self(x) > 0).to(x.dtype)

    def content_hash(self) -> str:
        return tensor_content_hash(self.state_dict())

    def freeze(self) -> str:
        self.requires_grad_(False)
        self.eval()
        return self.content_hash()


def verify_frozen(backbone: FrozenBackbone, hash_before: str) -> bool:
    return backbone.content_hash() == hash_before


def task_loss(logits: Tensor, labels: Tensor) -> Tensor:
    return F.binary_cross_entropy_with_logits(logits, labels)


class BackboneModule(L.LightningModule):
    """Pre-trains the probe on clean, labelled ``x^(target)``."""

    def __init__(self, backbone: FrozenBackbone, lr: float = 1e-3):
        super().__init__()

        self.backbone = backbone
        self.lr = lr

    def configure_optimizers(self):
        return FunctionalAdam(self.backbone.parameters(), lr=self.lr)

    def training_step(self, batch, batch_idx):
        x, labels = batch
        loss = task_loss(self.backbone(x), labels)
        self.log("backbone/loss", loss, on_step=True, prog_bar=True)
        return loss


def save_backbone(backbone: FrozenBackbone, path: Path | str, fingerprint: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    state = {k: v.detach().contiguous() for k, v in backbone.state_dict().items()}
    metadata = {
        "hash": backbone.content_hash(),
        "target": str(backbone.target),
        "d_x": str(backbone.d_x),
        "shapes": json.dumps({k: list(v.shape) for k, v in sorted(state.items())}),
        "config_fingerprint": fingerprint,
    }
    save_file(state, str(path), metadata=metadata)
    logger.info(f"Saved backbone for modality {backbone.target} to {path}")
    return path


def load_backbone(
    path: Path | str, args: Optional[PerceptronArgs] = None
) -> tuple[FrozenBackbone, str]:
    """Returns the backbone and its embedded hash, after checking they agree."""

    path = Path(path)
    if not path.is_file():
        raise FormatError(path.name, "backbone checkpoint is missing")

    with safe_open(str(path), framework="pt") as f:
        metadata = f.metadata() or {}
        state = {k: f.get_tensor(k) for k in f.keys()}

    for field in ("hash", "target", "d_x"):
        if field not in metadata:
            raise FormatError(field, f"missing from {path.name} metadata")

    backbone = FrozenBackbone(int(metadata["target"]), int(metadata["d_x"]), args)
    try:
        backbone.load_state_dict(state)
    except RuntimeError as e:
        raise FormatError(path.name, f"parameters do not fit the probe: {e}") from e

    actual = backbone.content_hash()
    if actual != metadata["hash"]:
        raise FormatError("hash", f"{path.name} content hash does not match its metadata")

    backbone.freeze()
    return backbone, actual
