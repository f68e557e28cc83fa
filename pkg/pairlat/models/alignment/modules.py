from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
from torch import Tensor

from pairlat.core.functional import LEAKY_SLOPE, affine, leaky_relu
from pairlat.core.init import orthogonal_init
from pairlat.errors import ContractError, SpecificationError
from pairlat.utils.seeding import derive_seed

INITS = ("orthogonal", "identity", "zeros")


@dataclass
class PerceptronArgs:
    n_layers: int = 3
    hidden: int = 32
    init: str = "orthogonal"
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.n_layers < 1:
            raise SpecificationError(f"need at least one layer, got {self.n_layers}")
        if self.init not in INITS:
            raise SpecificationError(f"unknown init {self.init!r}, expected {INITS}")


class Perceptron(nn.Module):
    """Float64 perceptron with leaky-ReLU between (not after) its layers."""

    def __init__(self, d_in: int, d_out: int, args: PerceptronArgs, seed: int, tag: str):
        super().__init__()

        self.d_in = d_in
        self.d_out = d_out
        self.slope = args.slope

        widths = [d_in] + [args.hidden] * (args.n_layers - 1) + [d_out]
        self.layers = nn.ModuleList(
            nn.Linear(a, b, dtype=torch.float64) for a, b in zip(widths[:-1], widths[1:])
        )
        self.reset_parameters(args.init, seed, tag)

    @torch.no_grad()
    def reset_parameters(self, init: str, seed: int, tag: str) -> None:
        for k, layer in enumerate(self.layers):
            rows, cols = layer.weight.shape
            match init:
                case "orthogonal":
                    layer.weight.copy_(orthogonal_init(rows, cols, derive_seed(seed, tag, k)))
                case "identity":
                    nn.init.eye_(layer.weight)
                case "zeros":
                    nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ContractError(f"expected {self.d_in} input columns, got {x.shape[-1]}")

        for k, layer in enumerate(self.layers):
            x = affine(x, layer.weight, layer.bias)
            if k < len(self.layers) - 1:
                x = leaky_relu(x, self.slope)
        return x


class ModalityEncoder(Perceptron):
    """``Enc_m: x^(m) -> [z_c^(m), z_s^(m)]``, split at ``d_shared``."""

    def __init__(
        self,
        d_x: int,
        d_shared: int,
        d_specific: int,
        args: Optional[PerceptronArgs] = None,
        seed: int = 0,
        modality: int = 0,
    ):
        super().__init__(
            d_x, d_shared + d_specific, args or PerceptronArgs(), seed, f"encoder{modality}"
        )
        self.d_shared = d_shared
        self.d_specific = d_specific

    def split(self, code: Tensor) -> tuple[Tensor, Tensor]:
        return code[..., : self.d_shared], code[..., self.d_shared :]


class ModalityDecoder(Perceptron):
    """``Dec_m: [z_c^(m), z_s^(m)] -> x^(m)``."""

    def __init__(
        self,
        d_x: int,
        d_shared: int,
        d_specific: int,
        args: Optional[PerceptronArgs] = None,
        seed: int = 0,
        modality: int = 0,
    ):
        super().__init__(
            d_shared + d_specific, d_x, args or PerceptronArgs(), seed, f"decoder{modality}"
        )
        self.d_shared = d_shared
        self.d_specific = d_specific


def encode(enc: ModalityEncoder, x: Tensor) -> tuple[Tensor, Tensor]:
    if x.ndim != 2 or x.shape[1] != enc.d_in:
        raise ContractError(
            f"encoder expects (N, {enc.d_in}) observations, got {tuple(x.shape)}"
        )
    return enc.split(enc(x))


class ModalityModel(nn.Module):
    def __init__(
        self,
        modality: int,
        d_shared: int,
        d_specific: int,
        encoder_args: Optional[PerceptronArgs] = None,
        decoder_args: Optional[PerceptronArgs] = None,
        seed: int = 0,
    ):
        super().__init__()

        d_x = d_shared + d_specific
        self.modality = modality
        self.encoder = ModalityEncoder(d_x, d_shared, d_specific, encoder_args, seed, modality)
        self.decoder = ModalityDecoder(d_x, d_shared, d_specific, decoder_args, seed, modality)

    @property
    def d_shared(self) -> int:
        return self.encoder.d_shared

    @property
    def d_specific(self) -> int:
        return self.encoder.d_specific

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        z_c, z_s = encode(self.encoder, x)
        return z_c, z_s, self.decoder(torch.cat([z_c, z_s], dim=-1))


def model_key(m: int) -> str:
    return f"m{m}"


def build_models(
    spec,
    seed: int,
    encoder_args: Optional[PerceptronArgs] = None,
    decoder_args: Optional[PerceptronArgs] = None,
) -> nn.ModuleDict:
    """One encoder/decoder pair per modality of a ``LatentSpec``."""

    return nn.ModuleDict(
        {
            model_key(m): ModalityModel(
                m,
                spec.d_c(m),
                spec.d_s(m),
                encoder_args,
                decoder_args,
                seed=derive_seed(seed, "models"),
            )
            for m in spec.graph.modalities
        }
    )
