"""Binary alignment masks ``m^(j<-i)`` and the slot map that reconciles
``d_c^(j)`` source coordinates with ``d_c^(i)`` target coordinates."""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import Tensor

from pairlat.errors import ContractError, SpecificationError
from pairlat.utils.seeding import numpy_rng
from pairlat.world.latent import LatentSpec

MASK_MODES = ("oracle", "random", "full", "misspecified")


@dataclass(frozen=True)
class AlignmentMask:
    """Mask over the source shared block, serving the direction ``source -> target``.

    ``slots[n]`` is the target coordinate filled by the ``n``-th active source
    coordinate; target coordinates that no active entry fills are zero.
    """

    source: int
    target: int
    values: tuple[int, ...]
    slots: tuple[int, ...]
    target_dim: int

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.values):
            raise ContractError(f"mask entries must be 0 or 1, got {self.values}")
        if len(self.slots) != self.k:
            raise ContractError(f"{self.k} active entries but {len(self.slots)} slots")
        if len(set(self.slots)) != len(self.slots):
            raise ContractError(f"slots {self.slots} are not distinct")
        if any(not 0 <= s < self.target_dim for s in self.slots):
            raise ContractError(f"slots {self.slots} leave [0, {self.target_dim})")

    @classmethod
    def from_values(
        cls,
        source: int,
        target: int,
        values: Sequence[int],
        target_dim: Optional[int] = None,
        slots: Optional[Sequence[int]] = None,
    ) -> "AlignmentMask":
        """Mask over equal-width blocks keeps active entries in place by default."""

        values = tuple(int(v) for v in values)
        target_dim = len(values) if target_dim is None else target_dim
        active = [k for k, v in enumerate(values) if v]
        if slots is None:
            slots = active if target_dim == len(values) else range(len(active))
        return cls(source, target, values, tuple(int(s) for s in slots), target_dim)

    @property
    def k(self) -> int:
        return sum(self.values)

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(k for k, v in enumerate(self.values) if v)

    @property
    def is_empty(self) -> bool:
        return self.k == 0

    @property
    def is_identity(self) -> bool:
        return (
            self.k == len(self.values) == self.target_dim
            and self.slots == tuple(range(self.target_dim))
        )

    def tensor(self) -> Tensor:
        return torch.tensor(self.values, dtype=torch.float64)

    def selection(self) -> Tensor:
        """``P`` with ``P[slot, source] = 1``; ``reconcile(z) == z @ P.T``."""

        p = torch.zeros(self.target_dim, len(self.values), dtype=torch.float64)
        for src, slot in zip(self.active, self.slots):
            p[slot, src] = 1.0
        return p

    def reconcile(self, z_source: Tensor) -> Tensor:
        """``m ⊙ z_c^(source)`` laid out in the target's shared coordinates."""

        if z_source.shape[-1] != len(self.values):
            raise ContractError(
                f"mask has {len(self.values)} entries, code has {z_source.shape[-1]} columns"
            )
        if self.is_identity:
            return z_source

        out = z_source.new_zeros(*z_source.shape[:-1], self.target_dim)
        if self.k == 0:
            return out
        index = torch.tensor(self.slots, dtype=torch.long)
        picked = z_source[..., list(self.active)]
        return out.index_copy(-1, index, picked)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "values": list(self.values),
            "slots": list(self.slots),
            "k": self.k,
        }


def _assign_slots(
    spec: LatentSpec, source: int, target: int, active: Sequence[int]
) -> tuple[int, ...]:
    # Overlap correspondence first, then the remaining target slots in order.
    corr = dict(spec.correspondence(source, target))
    used = {corr[k] for k in active if k in corr}
    free = [s for s in range(spec.d_c(target)) if s not in used]

    slots = []
    for k in active:
        if k in corr:
            slots.append(corr[k])
        elif free:
            slots.append(free.pop(0))
        else:
            raise ContractError(
                f"mask {source}->{target}: {len(active)} active entries do not fit "
                f"{spec.d_c(target)} target coordinates"
            )
    return tuple(slots)


def build_mask(
    spec: LatentSpec,
    source: int,
    target: int,
    mode: str = "oracle",
    k: Optional[int] = None,
    k_shift: int = 0,
    seed: int = 0,
) -> AlignmentMask:
    """Mask for the direction ``source -> target`` (``m^(target<-source)``).

    - ``oracle``: indicator of the true overlap ``I_{source,target}``
    - ``random``: ``k`` random entries, ``k`` defaulting to the overlap size
    - ``full``: as many leading entries as the target can hold, overlap first
    - ``misspecified``: oracle support with ``k`` moved by ``k_shift``
    """

    d_source, d_target = spec.d_c(source), spec.d_c(target)
    overlap = [ks for ks, _ in spec.correspondence(source, target)]
    others = [ks for ks in range(d_source) if ks not in overlap]
    room = min(d_source, d_target)

    match mode:
        case "oracle":
            active = overlap
        case "random":
            k = len(overlap) if k is None else k
            if not 0 <= k <= room:
                raise SpecificationError(f"random mask size {k} outside [0, {room}]")
            rng = numpy_rng(seed, "mask", source, target)
            active = sorted(int(a) for a in rng.choice(d_source, size=k, replace=False))
        case "full":
            active = (overlap + others)[:room]
        case "misspecified":
            size = min(max(len(overlap) + k_shift, 0), room)
            active = (overlap + others)[:size]
        case _:
            raise SpecificationError(f"unknown mask mode {mode!r}, expected {MASK_MODES}")

    active = sorted(active)
    values = tuple(1 if ks in active else 0 for ks in range(d_source))
    return AlignmentMask(
        source=source,
        target=target,
        values=values,
        slots=_assign_slots(spec, source, target, active),
        target_dim=d_target,
    )


def build_edge_masks(spec: LatentSpec, edges, **kwargs) -> dict[tuple[int, int], AlignmentMask]:
    """Masks for both directions of every edge, keyed ``(source, target)``."""

    masks = {}
    for i, j in edges:
        masks[(j, i)] = build_mask(spec, j, i, **kwargs)
        masks[(i, j)] = build_mask(spec, i, j, **kwargs)
    return masks
