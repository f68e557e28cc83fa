from dataclasses import dataclass

import torch
from torch import Tensor

from pairlat.core.functional import LEAKY_SLOPE, affine, leaky_relu, leaky_relu_inverse
from pairlat.core.init import orthogonal_init
from pairlat.errors import ContractError, SpecificationError
from pairlat.utils.seeding import derive_seed, torch_generator

MAX_CONDITION = 1e6


@dataclass(frozen=True, eq=False)
class InvertibleMixing:
    """Square orthogonal affine layers with leaky-ReLU between them.

    ``depth == 0`` is the identity map. The nonlinearity is applied after every
    layer except the last, so a depth-1 mixing is a single rotation plus bias.
    """

    dim: int
    weights: tuple[Tensor, ...]
    biases: tuple[Tensor, ...]
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise SpecificationError("mixing needs one bias per layer")
        for k, weight in enumerate(self.weights):
            if weight.shape != (self.dim, self.dim):
                raise SpecificationError(
                    f"mixing layer {k} has shape {tuple(weight.shape)}, "
                    f"expected {(self.dim, self.dim)}"
                )
            cond = torch.linalg.cond(weight).item()
            if not cond < MAX_CONDITION:
                raise SpecificationError(
                    f"mixing layer {k} condition number {cond:.3g} >= {MAX_CONDITION:g}"
                )

    @property
    def depth(self) -> int:
        return len(self.weights)

    def _check(self, x: Tensor) -> None:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ContractError(
                f"mixing expects (N, {self.dim}) inputs, got {tuple(x.shape)}"
            )

    def forward(self, z: Tensor) -> Tensor:
        self._check(z)
        x = z
        for k, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            x = affine(x, weight, bias)
            if k < self.depth - 1:
                x = leaky_relu(x, self.slope)
        return x

    __call__ = forward

    def inverse(self, x: Tensor) -> Tensor:
        """Exact layerwise inversion: transpose of each rotation, closed-form
        leaky-ReLU inverse."""

        self._check(x)
        z = x
        for k in reversed(range(self.depth)):
            if k < self.depth - 1:
                z = leaky_relu_inverse(z, self.slope)
            z = (z - self.biases[k]) @ self.weights[k]
        return z

    def jacobian(self, z: Tensor) -> Tensor:
        """``dx/dz`` at each row, shape ``(N, dim, dim)``."""

        self._check(z)
        n = z.shape[0]
        jac = torch.eye(self.dim, dtype=z.dtype).expand(n, -1, -1)
        x = z
        for k, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            x = affine(x, weight, bias)
            jac = weight @ jac
            if k < self.depth - 1:
                gate = torch.where(x >= 0, 1.0, self.slope).to(z.dtype)
                jac = gate[:, :, None] * jac
                x = leaky_relu(x, self.slope)
        return jac.contiguous()

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for k, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{k}.weight"] = weight
            out[f"layer{k}.bias"] = bias
        return out


def build_mixing(
    dim: int, depth: int, seed: int, modality: int, bias_scale: float = 0.1
) -> InvertibleMixing:
    if depth < 0:
        raise SpecificationError(f"mixing depth must be >= 0, got {depth}", modality)

    weights, biases = [], []
    for layer in range(depth):
        weights.append(orthogonal_init(dim, dim, derive_seed(seed, "mixing", modality, layer)))
        biases.append(
            bias_scale
            * torch.randn(
                dim,
                generator=torch_generator(seed, "mixing-bias", modality, layer),
                dtype=torch.float64,
            )
        )

    return InvertibleMixing(dim=dim, weights=tuple(weights), biases=tuple(biases))
