from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import torch
from lightning import LightningDataModule
from torch.utils.data import DataLoader, Dataset, Sampler

from pairlat.datasets.pair import PairView
from pairlat.errors import ContractError
from pairlat.utils.seeding import numpy_rng


class RoundRobinPairs(Dataset):
    """Map-style dataset whose item ``s`` is a whole mini-batch.

    Global step ``s`` belongs to epoch ``s // steps_per_epoch``; within an epoch,
    item ``t`` serves edge ``t mod E``, so every edge is touched exactly once per
    cycle of ``E`` steps. Rows come from an epoch-keyed permutation of that
    edge, wrapping around for edges with fewer rows than the longest one.
    """

    views: list[PairView]

    def __init__(
        self,
        views: Iterable[PairView],
        batch_size: int,
        seed: int,
        cycles: Optional[int] = None,
    ):
        super().__init__()

        self.views = sorted(views, key=lambda v: v.edge)
        self.batch_size = batch_size
        self.seed = seed

        assert len(self.views) > 0, "views should not be an empty iterable"
        if batch_size < 1:
            raise ContractError(f"batch size must be >= 1, got {batch_size}")
        for view in self.views:
            if len(view) == 0:
                raise ContractError(f"edge {view.edge} has no training rows")

        if cycles is None:
            cycles = max(max(len(v) // batch_size, 1) for v in self.views)
        self.cycles = cycles

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [v.edge for v in self.views]

    @property
    def steps_per_epoch(self) -> int:
        return self.cycles * len(self.views)

    def __len__(self):
        return self.steps_per_epoch

    def edge_at(self, step: int) -> tuple[int, int]:
        return self.views[step % len(self.views)].edge

    def _order(self, epoch: int, view: PairView) -> np.ndarray:
        return numpy_rng(self.seed, "round-robin", epoch, *view.edge).permutation(len(view))

    def __getitem__(self, step: int) -> dict:
        epoch, t = divmod(int(step), self.steps_per_epoch)
        view = self.views[t % len(self.views)]
        k = t // len(self.views)

        order = self._order(epoch, view)
        rows = order[(k * self.batch_size + np.arange(self.batch_size)) % len(view)]

        return {
            "edge": torch.tensor(view.edge),
            "x_i": torch.from_numpy(view.x_i[rows]),
            "x_j": torch.from_numpy(view.x_j[rows]),
        }


class EpochStepSampler(Sampler[int]):
    """Yields global step indices, offset by the epoch Lightning sets."""

    def __init__(self, steps_per_epoch: int):
        self.steps_per_epoch = steps_per_epoch
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __iter__(self) -> Iterator[int]:
        start = self.epoch * self.steps_per_epoch
        return iter(range(start, start + self.steps_per_epoch))

    def __len__(self) -> int:
        return self.steps_per_epoch


class PairDataModule(LightningDataModule):
    def __init__(
        self,
        views: Sequence[PairView],
        batch_size: int = 16,
        seed: int = 0,
        cycles: Optional[int] = None,
    ):
        super().__init__()

        self.train_dataset = RoundRobinPairs(views, batch_size, seed, cycles)

    def train_dataloader(self):
        return DataLoader(
            self.train_dataset,
            batch_size=None,
            sampler=EpochStepSampler(len(self.train_dataset)),
            num_workers=0,
        )
