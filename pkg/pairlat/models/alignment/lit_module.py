from dataclasses import asdict, dataclass
from typing import Any, Callable, Mapping, Optional

import lightning as L
import torch
from loguru import logger
from torch import Tensor, nn

from pairlat.core.optim import FunctionalAdam
from pairlat.errors import ContractError, NonFiniteLossError
from pairlat.models.alignment.losses import contrastive_loss, cross_reconstruction, recon_loss
from pairlat.models.alignment.masks import MASK_MODES, AlignmentMask
from pairlat.models.alignment.modules import model_key

TERMS = ("L_rec_i", "L_rec_j", "L_con", "L_cross", "total")


@dataclass
class Stage1Config:
    lam: float = 0.1
    lam_rec: float = 1.0
    lam_con: float = 1.0
    lam_cross: float = 1.0
    tau: float = 0.07
    lr: float = 5e-5
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    mask_mode: str = "oracle"
    mask_k: Optional[int] = None
    mask_k_shift: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError(f"temperature must be > 0, got {self.tau}")
        for name in ("lam", "lam_rec", "lam_con", "lam_cross"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lam_con > 0 and self.batch_size < 2:
            raise ContractError("contrastive alignment needs batch_size >= 2 for negatives")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractError(
                f"invalid batch_size={self.batch_size} or epochs={self.epochs}"
            )
        if self.mask_mode not in MASK_MODES:
            raise ContractError(f"unknown mask mode {self.mask_mode!r}, expected {MASK_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


def _mean(terms: list[Tensor], like: Tensor) -> Tensor:
    if not terms:
        return like.new_zeros(())
    return sum(terms) / len(terms)


def stage1_terms(
    models: nn.ModuleDict,
    masks: Mapping[tuple[int, int], AlignmentMask],
    i: int,
    j: int,
    x_i: Tensor,
    x_j: Tensor,
    config: Stage1Config,
) -> dict[str, Tensor]:
    """Every term of the Stage I objective for one mini-batch of edge ``{i, j}``.

    Directions whose mask is empty drop out of the contrastive and
    cross-reconstruction averages; swapping ``(i, x_i)`` with ``(j, x_j)``
    leaves ``total`` bit-identical.
    """

    model_i, model_j = models[model_key(i)], models[model_key(j)]
    z_c_i, _, x_hat_i = model_i(x_i)
    z_c_j, _, x_hat_j = model_j(x_j)

    rec_i = recon_loss(x_hat_i, x_i, config.lam)
    rec_j = recon_loss(x_hat_j, x_j, config.lam)

    con, cross = [], []
    # (mask serving source -> target, target code, source code, target decoder, target x)
    directions = (
        (masks[(j, i)], z_c_i, z_c_j, model_i.decoder, x_i),
        (masks[(i, j)], z_c_j, z_c_i, model_j.decoder, x_j),
    )
    for mask, z_target, z_source, decoder, x_target in directions:
        if mask.is_empty:
            continue
        if config.lam_con > 0:
            con.append(contrastive_loss(z_target, z_source, mask, config.tau))
        if config.lam_cross > 0:
            cross.append(cross_reconstruction(decoder, z_source, mask, x_target, config.lam))

    l_con = _mean(con, rec_i)
    l_cross = _mean(cross, rec_i)
    total = (
        config.lam_rec * (rec_i + rec_j) + config.lam_con * l_con + config.lam_cross * l_cross
    )

    return {"L_rec_i": rec_i, "L_rec_j": rec_j, "L_con": l_con, "L_cross": l_cross, "total": total}


class Stage1Module(L.LightningModule):
    def __init__(
        self,
        models: nn.ModuleDict,
        masks: Mapping[tuple[int, int], AlignmentMask],
        config: Stage1Config,
        optimizer: Optional[Callable[..., torch.optim.Optimizer]] = None,
    ):
        super().__init__()

        self.models = models
        self.masks = dict(masks)
        self.config = config
        self.optimizer_builder = optimizer
        self.last_terms: Optional[dict[str, float]] = None

        for (source, target), mask in sorted(self.masks.items()):
            if mask.is_empty:
                logger.info(
                    f"Mask {source}->{target} is empty: reconstruction terms only "
                    "in that direction"
                )

    def forward(self, x: Tensor, m: int):
        return self.models[model_key(m)](x)

    def configure_optimizers(self) -> Any:
        if self.optimizer_builder is None:
            return FunctionalAdam(self.parameters(), lr=self.config.lr)
        return self.optimizer_builder(self.parameters())

    def _step(self, batch, batch_idx, stage: str):
        i, j = (int(m) for m in batch["edge"])
        terms = stage1_terms(
            self.models, self.masks, i, j, batch["x_i"], batch["x_j"], self.config
        )

        for name in TERMS:
            if not bool(torch.isfinite(terms[name])):
                raise NonFiniteLossError(self.global_step, name)

        self.last_terms = {name: terms[name].item() for name in TERMS}

        self.log(f"{stage}/loss", terms["total"], on_step=True, prog_bar=True)
        for name in TERMS[:-1]:
            self.log(f"{stage}/{name}", terms[name], on_step=True, prog_bar=False)

        return terms["total"]

    def training_step(self, batch, batch_idx):
        return self._step(batch, batch_idx, "train")
