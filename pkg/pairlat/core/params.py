from typing import Callable, Iterable, Iterator, Mapping, Tuple

import torch
from torch import Tensor, nn

from pairlat.errors import ContractError


class ParamSet(Mapping[str, Tensor]):
    """Immutable, name-ordered collection of parameter tensors."""

    __slots__ = ("_names", "_tensors")

    def __init__(self, items: Mapping[str, Tensor] | Iterable[Tuple[str, Tensor]] = ()):
        pairs = list(items.items()) if isinstance(items, Mapping) else list(items)
        names = [name for name, _ in pairs]
        if len(set(names)) != len(names):
            raise ContractError(f"Duplicate parameter names in {names}")

        ordered = sorted(pairs, key=lambda pair: pair[0])
        self._names = tuple(name for name, _ in ordered)
        self._tensors = {name: tensor for name, tensor in ordered}

    @classmethod
    def from_module(cls, module: nn.Module) -> "ParamSet":
        return cls(
            (name, param.detach().clone()) for name, param in module.named_parameters()
        )

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{n}: {tuple(self[n].shape)}" for n in self._names)
        return f"ParamSet({shapes})"

    def map(self, fn: Callable[[str, Tensor], Tensor]) -> "ParamSet":
        return ParamSet((name, fn(name, self[name])) for name in self._names)

    def zeros_like(self) -> "ParamSet":
        return self.map(lambda _, t: torch.zeros_like(t))

    def check_compatible(self, other: "ParamSet", what: str = "parameters") -> None:
        if tuple(other) != self._names:
            raise ContractError(
                f"{what} names {list(other)} do not match {list(self._names)}"
            )
        for name in self._names:
            if other[name].shape != self[name].shape:
                raise ContractError(
                    f"{what} <{name}> has shape {tuple(other[name].shape)}, "
                    f"expected {tuple(self[name].shape)}"
                )

    def load_into(self, module: nn.Module) -> None:
        with torch.no_grad():
            for name, param in module.named_parameters():
                param.copy_(self[name])
