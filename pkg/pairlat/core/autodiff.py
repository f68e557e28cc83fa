"""Reverse-mode gradients with explicit overflow reporting, and a
central-difference checker for them."""

from typing import Callable, Iterable

import torch
from torch import Tensor
from torch.overrides import TorchFunctionMode

from pairlat.core.params import ParamSet
from pairlat.errors import ContractError, NumericOverflowError

Program = Callable[..., Tensor]


def _iter_tensors(value) -> Iterable[Tensor]:
    if isinstance(value, Tensor):
        yield value
    elif isinstance(value, (tuple, list)):
        for item in value:
            yield from _iter_tensors(item)


class FiniteGuard(TorchFunctionMode):
    """Raises on the first torch primitive whose output is not finite."""

    def __torch_function__(self, func, types, args=(), kwargs=None):
        out = func(*args, **(kwargs or {}))
        for tensor in _iter_tensors(out):
            if tensor.is_floating_point() and not bool(torch.isfinite(tensor).all()):
                name = getattr(func, "__name__", repr(func))
                raise NumericOverflowError(name, f"output shape {tuple(tensor.shape)}")
        return out


def _scalar(value: Tensor) -> Tensor:
    if value.numel() != 1:
        raise ContractError(
            f"Program must return a scalar, got shape {tuple(value.shape)}"
        )
    return value.reshape(())


def value_and_grad(
    program: Program, params: ParamSet, *inputs: Tensor
) -> tuple[float, ParamSet]:
    """Evaluate ``program(params, *inputs)`` and its gradient w.r.t. ``params``."""

    leaves = params.map(lambda _, t: t.detach().clone().requires_grad_(True))

    with FiniteGuard():
        loss = _scalar(program(leaves, *inputs))
        grads = torch.autograd.grad(loss, [leaves[n] for n in leaves], allow_unused=True)

    return loss.item(), ParamSet(
        (name, torch.zeros_like(leaves[name]) if grad is None else grad.detach())
        for name, grad in zip(leaves, grads)
    )


@torch.no_grad()
def _evaluate(program: Program, params: ParamSet, *inputs: Tensor) -> float:
    return _scalar(program(params, *inputs)).item()


def grad_check(
    program: Program, params: ParamSet, step: float = 1e-5, *inputs: Tensor
) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |analytic|)``."""

    if step <= 0:
        raise ContractError(f"Finite-difference step must be positive, got {step}")

    _, analytic = value_and_grad(program, params, *inputs)
    worst = 0.0

    for name in params:
        base = params[name].detach().clone()
        flat_grad = analytic[name].reshape(-1)

        for k in range(base.numel()):
            shifted = []
            for sign in (1.0, -1.0):
                probe = base.clone().reshape(-1)
                probe[k] += sign * step
                shifted.append(
                    params.map(
                        lambda n, t: probe.reshape(base.shape) if n == name else t
                    )
                )

            upper = _evaluate(program, shifted[0], *inputs)
            lower = _evaluate(program, shifted[1], *inputs)
            estimate = (upper - lower) / (2 * step)
            if not torch.isfinite(torch.tensor(estimate)):
                raise NumericOverflowError(
                    "central_difference", f"parameter <{name}> coordinate {k}"
                )

            exact = flat_grad[k].item()
            worst = max(worst, abs(exact - estimate) / max(1.0, abs(exact)))

    return worst
