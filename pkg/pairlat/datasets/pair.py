from dataclasses import dataclass
from typing import Optional

import numpy as np

from pairlat.errors import ContractError
from pairlat.utils.seeding import numpy_rng

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "fit", "score")


@dataclass(frozen=True, slots=True)
class PairView:
    """What training code may see of a pair dataset: observations only."""

    edge: tuple[int, int]
    x_i: np.ndarray
    x_j: np.ndarray

    def __len__(self) -> int:
        return len(self.x_i)

    def modality(self, m: int) -> np.ndarray:
        if m == self.edge[0]:
            return self.x_i
        if m == self.edge[1]:
            return self.x_j
        raise ContractError(f"modality {m} is not an endpoint of edge {self.edge}")


class PairDataset:
    """Aligned rows ``(x_i, x_j)`` for one edge ``i < j``.

    Ground-truth latents, when attached, are only reachable through
    :meth:`evaluation_latents`; :meth:`training_view` hands out a
    :class:`PairView`, which has no way to reach them.
    """

    __slots__ = ("edge", "x_i", "x_j", "fingerprint", "__latents")

    def __init__(
        self,
        edge: tuple[int, int],
        x_i: np.ndarray,
        x_j: np.ndarray,
        latents: Optional[np.ndarray] = None,
        fingerprint: str = "",
    ):
        i, j = edge
        if not i < j:
            raise ContractError(f"edge must be ordered i < j, got {edge}")
        x_i = np.ascontiguousarray(x_i, dtype=np.float64)
        x_j = np.ascontiguousarray(x_j, dtype=np.float64)
        if x_i.ndim != 2 or x_j.ndim != 2 or len(x_i) != len(x_j):
            raise ContractError(
                f"paired matrices must be 2-D with equal rows, got "
                f"{x_i.shape} and {x_j.shape}"
            )
        if latents is not None:
            latents = np.ascontiguousarray(latents, dtype=np.float64)
            if latents.ndim != 2 or len(latents) != len(x_i):
                raise ContractError(
                    f"latent matrix {latents.shape} does not match {len(x_i)} rows"
                )

        self.edge = (int(i), int(j))
        self.x_i = x_i
        self.x_j = x_j
        self.fingerprint = fingerprint
        self.__latents = latents

    def __len__(self) -> int:
        return len(self.x_i)

    def __repr__(self) -> str:
        return (
            f"PairDataset(edge={self.edge}, n={len(self)}, dims="
            f"({self.x_i.shape[1]}, {self.x_j.shape[1]}), "
            f"latents={self.has_latents})"
        )

    @property
    def has_latents(self) -> bool:
        return self.__latents is not None

    def evaluation_latents(self) -> np.ndarray:
        if self.__latents is None:
            raise ContractError(f"dataset for edge {self.edge} carries no latents")
        return self.__latents

    def training_view(self) -> PairView:
        return PairView(edge=self.edge, x_i=self.x_i, x_j=self.x_j)

    def subset(self, rows: np.ndarray) -> "PairDataset":
        return PairDataset(
            self.edge,
            self.x_i[rows],
            self.x_j[rows],
            None if self.__latents is None else self.__latents[rows],
            self.fingerprint,
        )

    def split_indices(self, seed: int) -> dict[str, np.ndarray]:
        """Keyed 80/10/10 row partition into ``train``, ``fit`` and ``score``."""

        n = len(self)
        order = numpy_rng(seed, "split", *self.edge).permutation(n)
        n_train = int(round(SPLIT_FRACTIONS[0] * n))
        n_fit = int(round(SPLIT_FRACTIONS[1] * n))
        bounds = (0, n_train, n_train + n_fit, n)
        return {
            name: np.sort(order[bounds[k] : bounds[k + 1]])
            for k, name in enumerate(SPLIT_NAMES)
        }

    def split(self, seed: int) -> dict[str, "PairDataset"]:
        return {name: self.subset(rows) for name, rows in self.split_indices(seed).items()}
