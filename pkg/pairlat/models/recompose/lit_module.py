from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Optional

import lightning as L
import torch
from loguru import logger
from torch import Tensor, nn

from pairlat.core.optim import FunctionalAdam
from pairlat.errors import ContractError, NonFiniteLossError
from pairlat.models.alignment.masks import AlignmentMask
from pairlat.models.alignment.modules import model_key
from pairlat.models.recompose.backbone import FrozenBackbone, task_loss
from pairlat.models.recompose.transfer import AGGREGATIONS, cross_modal_transfer


@dataclass
class Stage2Config:
    target: int = 3
    sources: list[int] = field(default_factory=lambda: [2])
    label_factor: int = 3
    lr: float = 5e-5
    batch_size: int = 8
    epochs: int = 1
    seed: int = 0
    aggregation: str = "mean"
    freeze_backbone: bool = True

    def __post_init__(self):
        self.sources = sorted(int(s) for s in self.sources)
        if not self.sources:
            raise ContractError("Stage II needs at least one source modality")
        if self.target in self.sources:
            raise ContractError(f"target {self.target} cannot also be a source")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractError(
                f"invalid batch_size={self.batch_size} or epochs={self.epochs}"
            )
        if self.aggregation not in AGGREGATIONS:
            raise ContractError(
                f"unknown aggregation {self.aggregation!r}, expected {AGGREGATIONS}"
            )

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [tuple(sorted((s, self.target))) for s in self.sources]

    def to_dict(self) -> dict:
        return asdict(self)


def _split_batch(batch: dict, target: int) -> tuple[int, Tensor, Tensor]:
    i, j = (int(m) for m in batch["edge"])
    if target == i:
        return j, batch["x_j"], batch["x_i"]
    if target == j:
        return i, batch["x_i"], batch["x_j"]
    raise ContractError(f"batch edge {(i, j)} does not touch target modality {target}")


class Stage2Module(L.LightningModule):
    """Trains modality encoders and decoders so that transferred inputs drive
    the frozen backbone the way the paired real target input does.

    Labels are the backbone's own hard predictions on the real ``x^(target)``
    of the same row, so no ground truth is needed during training.
    """

    def __init__(
        self,
        models: nn.ModuleDict,
        backbone: FrozenBackbone,
        masks: Mapping[tuple[int, int], AlignmentMask],
        config: Stage2Config,
        optimizer: Optional[Callable[..., torch.optim.Optimizer]] = None,
    ):
        super().__init__()

        self.models = models
        self.backbone = backbone
        self.masks = dict(masks)
        self.config = config
        self.optimizer_builder = optimizer
        self.last_terms: Optional[dict[str, float]] = None

        for source in config.sources:
            if (source, config.target) not in self.masks:
                raise ContractError(f"no mask for transfer {source}->{config.target}")

        if config.freeze_backbone:
            backbone.freeze()
        else:
            logger.warning("Backbone left trainable; its hash will not survive training")
            backbone.requires_grad_(True)

    def trainable_parameters(self):
        params = list(self.models.parameters())
        if not self.config.freeze_backbone:
            params += list(self.backbone.parameters())
        return params

    def configure_optimizers(self) -> Any:
        if self.optimizer_builder is None:
            return FunctionalAdam(self.trainable_parameters(), lr=self.config.lr)
        return self.optimizer_builder(self.trainable_parameters())

    def forward(self, x_source: Tensor, source: int) -> Tensor:
        target = self.config.target
        return cross_modal_transfer(
            self.models[model_key(source)].encoder,
            self.models[model_key(target)].decoder,
            self.masks[(source, target)],
            x_source,
        )

    def _step(self, batch, batch_idx, stage: str):
        source, x_source, x_target = _split_batch(batch, self.config.target)

        with torch.no_grad():
            labels = (self.backbone(x_target) > 0).to(x_target.dtype)

        loss = task_loss(self.backbone(self(x_source, source)), labels)
        if not bool(torch.isfinite(loss)):
            raise NonFiniteLossError(self.global_step, "L_task")

        self.last_terms = {"L_task": loss.item(), "total": loss.item()}
        self.log(f"{stage}/loss", loss, on_step=True, prog_bar=True)
        self.log(f"{stage}/L_task_{source}", loss, on_step=True, prog_bar=False)

        return loss

    def training_step(self, batch, batch_idx):
        return self._step(batch, batch_idx, "train")
