from typing import Iterable, Optional, Union

import torch
from lightning import LightningModule, Trainer
from lightning.pytorch.callbacks import Callback
from torch import Tensor, nn


@torch.no_grad()
def grad_norm(parameters: Iterable[Tensor], norm_type: float = 2.0) -> Optional[Tensor]:
    """
    Returns the norm of the gradients of the given parameters, viewed as a
    single vector, or ``None`` when no parameter has a gradient.
    """

    grads = [p.grad.detach() for p in parameters if p.grad is not None]
    if len(grads) == 0:
        return None

    norms = torch.stack([torch.linalg.vector_norm(g, norm_type) for g in grads])
    return torch.linalg.vector_norm(norms, norm_type)


class GradNormMonitor(Callback):
    """
    Logs the gradient norm of the modality models, optionally per modality.
    """

    def __init__(
        self,
        norm_type: float = 2.0,
        logging_interval: str = "step",
        sub_module: Optional[Union[str, list[str]]] = None,
    ) -> None:
        """
        Args:
            norm_type: type of the used p-norm.
            logging_interval: "step" or "epoch".
            sub_module: keys of ``pl_module.models`` to report separately.
        """
        super().__init__()

        self.norm_type = norm_type
        self.logging_interval = logging_interval
        self.sub_module = sub_module

    def on_after_backward(self, trainer: Trainer, model: LightningModule) -> None:
        if self.sub_module is None:
            return self.log_sub_module_grad_norm(model, model, "")

        sub_modules = self.sub_module
        if isinstance(sub_modules, str):
            sub_modules = [sub_modules]

        for sub_module in sub_modules:
            self.log_sub_module_grad_norm(model, model.models[sub_module], f"/{sub_module}")

    def log_sub_module_grad_norm(
        self, lightning_model: LightningModule, model: nn.Module, path: str
    ) -> None:
        grad_norm_val = grad_norm(model.parameters(), self.norm_type)
        if grad_norm_val is None:
            return

        on_step = self.logging_interval == "step"
        lightning_model.log(
            f"train{path}/grad_norm",
            grad_norm_val,
            on_step=on_step,
            on_epoch=not on_step,
        )
