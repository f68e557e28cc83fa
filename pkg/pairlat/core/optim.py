from dataclasses import dataclass, replace

import torch
from torch import Tensor

from pairlat.core.params import ParamSet
from pairlat.errors import ContractError


@dataclass(frozen=True)
class OptState:
    exp_avg: ParamSet
    exp_avg_sq: ParamSet
    step: int = 0
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: ParamSet, **hparams) -> "OptState":
        zeros = params.zeros_like()
        return cls(exp_avg=zeros, exp_avg_sq=zeros, **hparams)


def adam_step(
    state: OptState, params: ParamSet, grads: ParamSet
) -> tuple[ParamSet, OptState]:
    """One bias-corrected Adam update. Pure: inputs are never modified."""

    if state.step < 0:
        raise ContractError(f"Optimizer step counter must be >= 0, got {state.step}")

    params.check_compatible(grads, "gradients")
    params.check_compatible(state.exp_avg, "first moments")
    params.check_compatible(state.exp_avg_sq, "second moments")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2

    exp_avg = state.exp_avg.map(lambda n, m: b1 * m + (1 - b1) * grads[n])
    exp_avg_sq = state.exp_avg_sq.map(
        lambda n, v: b2 * v + (1 - b2) * grads[n] * grads[n]
    )

    correction1 = 1 - b1**t
    correction2 = 1 - b2**t

    def update(name: str, theta: Tensor) -> Tensor:
        m_hat = exp_avg[name] / correction1
        v_hat = exp_avg_sq[name] / correction2
        return theta - state.lr * m_hat / (torch.sqrt(v_hat) + state.eps)

    new_state = replace(state, exp_avg=exp_avg, exp_avg_sq=exp_avg_sq, step=t)
    return params.map(update), new_state


class FunctionalAdam(torch.optim.Optimizer):
    """``torch.optim`` front-end over :func:`adam_step`, so training loops run
    exactly the audited update."""

    def __init__(
        self,
        params,
        lr: float = 5e-5,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ContractError(f"Learning rate must be positive, got {lr}")
        super().__init__(params, dict(lr=lr, betas=tuple(betas), eps=eps))

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            live = [p for p in group["params"] if p.grad is not None]
            for p in live:
                if "step" not in self.state[p]:
                    self.state[p]["exp_avg"] = torch.zeros_like(p)
                    self.state[p]["exp_avg_sq"] = torch.zeros_like(p)
                    self.state[p]["step"] = 0

            # Parameters that skipped steps carry their own bias-correction count.
            cohorts: dict[int, list[Tensor]] = {}
            for p in live:
                cohorts.setdefault(self.state[p]["step"], []).append(p)

            for step, members in cohorts.items():
                self._step_cohort(group, step, members)

        return loss

    def _step_cohort(self, group: dict, step: int, members: list[Tensor]) -> None:
        names = [f"p{k:05d}" for k in range(len(members))]
        params = ParamSet(zip(names, (p.detach() for p in members)))
        grads = ParamSet(zip(names, (p.grad.detach() for p in members)))

        state = OptState(
            exp_avg=ParamSet(zip(names, (self.state[p]["exp_avg"] for p in members))),
            exp_avg_sq=ParamSet(zip(names, (self.state[p]["exp_avg_sq"] for p in members))),
            step=step,
            lr=group["lr"],
            beta1=group["betas"][0],
            beta2=group["betas"][1],
            eps=group["eps"],
        )

        new_params, new_state = adam_step(state, params, grads)

        for name, p in zip(names, members):
            p.copy_(new_params[name])
            self.state[p]["exp_avg"] = new_state.exp_avg[name]
            self.state[p]["exp_avg_sq"] = new_state.exp_avg_sq[name]
            self.state[p]["step"] = new_state.step
