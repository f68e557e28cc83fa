"""Partial Jacobians ``A_{j<-i} = d x^(j) / d z_c^(i)`` of the ground-truth world."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import Tensor
from torch.func import jacrev

from pairlat.errors import ContractError, GraphError, NumericOverflowError
from pairlat.world.generator import GroundTruthGenerator, generate_observation
from pairlat.world.scm import intervene


@dataclass(frozen=True, eq=False)
class PartialJacobian:
    """Sensitivity of neighbour observation ``x^(neighbor)`` to the shared
    block of ``target``; ``matrix`` has shape ``(d_x^(neighbor), d_c^(target))``."""

    target: int
    neighbor: int
    matrix: Tensor
    point: Tensor
    propagate: bool
    method: str

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ContractError(f"Jacobian must be 2-D, got {tuple(self.matrix.shape)}")
        if not bool(torch.isfinite(self.matrix).all()):
            raise NumericOverflowError(
                "partial_jacobian", f"A_{{{self.neighbor}<-{self.target}}}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.matrix.shape)


def _check_pair(gen: GroundTruthGenerator, target: int, neighbor: int) -> None:
    if target == neighbor:
        raise GraphError(f"A partial Jacobian needs two modalities, got {target} twice")
    gen.graph.neighbors(target)
    gen.graph.neighbors(neighbor)


def _as_point(gen: GroundTruthGenerator, point) -> Tensor:
    point = torch.as_tensor(np.asarray(point, dtype=np.float64)).reshape(-1)
    if point.shape[0] != gen.latent.n_latent:
        raise ContractError(
            f"point has {point.shape[0]} coordinates, layout needs {gen.latent.n_latent}"
        )
    return point


def _perturbed_points(
    gen: GroundTruthGenerator, point: Tensor, column: int, values: Tensor, propagate: bool
) -> Tensor:
    base = point.expand(len(values), -1).clone()
    if propagate:
        return intervene(gen.scm, base, column, values)
    base[:, column] = values
    return base


def partial_jacobian(
    gen: GroundTruthGenerator,
    edge: Sequence[int],
    point,
    step: float = 1e-4,
    propagate: bool = True,
) -> PartialJacobian:
    """Central differences over the shared factors of ``edge[0]``, read off
    ``x^(edge[1])``.

    With ``propagate`` the perturbed factor is an intervention: its SCM
    descendants are recomputed with the exogenous noise of ``point`` held
    fixed. Without it only the coordinate itself moves.
    """

    target, neighbor = int(edge[0]), int(edge[1])
    _check_pair(gen, target, neighbor)
    if not step > 0:
        raise ContractError(f"finite-difference step must be > 0, got {step}")

    point = _as_point(gen, point)
    columns = []
    for r in gen.latent.pi(target):
        col = r - 1
        values = torch.stack([point[col] + step, point[col] - step])
        x = generate_observation(
            gen, neighbor, _perturbed_points(gen, point, col, values, propagate)
        )
        diff = (x[0] - x[1]) / (2 * step)
        if not bool(torch.isfinite(diff).all()):
            raise NumericOverflowError("central_difference", f"coordinate c{r}")
        columns.append(diff)

    if columns:
        matrix = torch.stack(columns, dim=-1)
    else:
        matrix = torch.zeros(gen.latent.d_x(neighbor), 0, dtype=torch.float64)

    return PartialJacobian(
        target=target,
        neighbor=neighbor,
        matrix=matrix,
        point=point,
        propagate=propagate,
        method="central-difference",
    )


def analytic_partial_jacobian(
    gen: GroundTruthGenerator, edge: Sequence[int], point, propagate: bool = True
) -> PartialJacobian:
    """Chain-rule Jacobian via ``torch.func.jacrev``; cross-check for the
    central-difference route. Each column moves one shared factor, exactly as
    :func:`partial_jacobian` does."""

    target, neighbor = int(edge[0]), int(edge[1])
    _check_pair(gen, target, neighbor)
    point = _as_point(gen, point)
    exogenous = gen.scm.abduct(point[None])
    observed = list(gen.latent.latent_columns(neighbor))

    def observe_along(col: int):
        unit = torch.zeros(gen.latent.n_latent, dtype=torch.float64)
        unit[col] = 1.0

        def observe(value: Tensor) -> Tensor:
            if propagate:
                z = gen.scm.solve(exogenous, {col: value.reshape(1)})
            else:
                z = (point + unit * (value - point[col]))[None]
            return gen.render(neighbor, z[:, observed])[0]

        return observe

    columns = [
        jacrev(observe_along(r - 1))(point[r - 1].clone())
        for r in gen.latent.pi(target)
    ]
    if columns:
        matrix = torch.stack(columns, dim=-1)
    else:
        matrix = torch.zeros(gen.latent.d_x(neighbor), 0, dtype=torch.float64)

    return PartialJacobian(
        target=target,
        neighbor=neighbor,
        matrix=matrix,
        point=point,
        propagate=propagate,
        method="analytic",
    )


def neighbor_jacobians(
    gen: GroundTruthGenerator,
    target: int,
    point,
    step: float = 1e-4,
    propagate: bool = True,
) -> list[PartialJacobian]:
    return [
        partial_jacobian(gen, (target, j), point, step, propagate)
        for j in gen.graph.neighbors(target)
    ]
