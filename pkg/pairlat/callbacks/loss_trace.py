from pathlib import Path
from typing import Optional

import pandas as pd
from lightning import LightningModule, Trainer
from lightning.pytorch.callbacks import Callback
from loguru import logger

TRACE_COLUMNS = ("step", "edge", "L_rec_i", "L_rec_j", "L_con", "L_cross", "L_task", "total")


class LossTraceWriter(Callback):
    """
    Records the loss terms of every optimisation step and writes them
    as CSV when training ends.
    """

    def __init__(self, path: Optional[str | Path] = None) -> None:
        """
        Args:
            path: CSV destination; ``None`` keeps the trace in memory only.
        """
        super().__init__()

        self.path = Path(path) if path is not None else None
        self.rows: list[dict] = []

    def on_train_batch_end(
        self, trainer: Trainer, pl_module: LightningModule, outputs, batch, batch_idx: int
    ) -> None:
        terms = getattr(pl_module, "last_terms", None)
        if terms is None:
            return

        i, j = (int(m) for m in batch["edge"])
        self.rows.append(
            {
                "step": trainer.global_step - 1,
                "edge": f"{i}-{j}",
                **{name: terms.get(name, 0.0) for name in TRACE_COLUMNS[2:]},
            }
        )

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(TRACE_COLUMNS))

    def on_train_end(self, trainer: Trainer, pl_module: LightningModule) -> None:
        if self.path is None:
            return

        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(self.path, index=False, float_format="%.17g")
        logger.info(f"Wrote {len(self.rows)} loss-trace rows to {self.path}")
