import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import torch
from loguru import logger
from omegaconf import DictConfig, OmegaConf
from torch import Tensor

from pairlat.datasets.pair import PairDataset
from pairlat.errors import ContractError, GraphError, SpecificationError
from pairlat.utils.seeding import derive_seed
from pairlat.utils.utils import tensor_content_hash
from pairlat.world.graph import ModalityGraph, normalize_edge
from pairlat.world.latent import LatentSpec, build_latent_spec
from pairlat.world.mixing import InvertibleMixing, build_mixing
from pairlat.world.scm import ScmSpec, build_scm_spec, dag_arrows, sample_latents

LatentInput = np.ndarray | Tensor | Mapping[str, np.ndarray | Tensor]


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value.to(torch.float64)
    return torch.as_tensor(np.asarray(value, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class GroundTruthGenerator:
    """The simulated world: latent layout, latent SCM and one mixing per modality.

    Immutable after construction, so it can be shared by every edge dataset; the
    x^(i) marginal of two edges that share modality i comes from the same
    ``mixings[i - 1]`` object.
    """

    latent: LatentSpec
    scm: ScmSpec
    mixings: tuple[InvertibleMixing, ...]

    def __post_init__(self):
        if self.scm.latent != self.latent:
            raise SpecificationError("SCM was built for a different latent layout")
        if len(self.mixings) != self.latent.graph.n_modalities:
            raise SpecificationError(
                f"need one mixing per modality, got {len(self.mixings)}"
            )
        for m, mixing in zip(self.latent.graph.modalities, self.mixings):
            if mixing.dim != self.latent.d_x(m):
                raise SpecificationError(
                    f"mixing acts on {mixing.dim} dims, modality has "
                    f"d_c + d_s = {self.latent.d_x(m)}",
                    m,
                )

    @property
    def graph(self) -> ModalityGraph:
        return self.latent.graph

    def mixing(self, m: int) -> InvertibleMixing:
        return self.mixings[self.latent._index(m)]

    def sample_latents(self, n: int, seed: int) -> np.ndarray:
        return sample_latents(self.scm, n, seed)

    def modality_latents(self, m: int, latents: LatentInput) -> Tensor:
        """``z^(m) = [z_c^(m), z_s^(m)]`` picked out of a global latent matrix,
        or out of a ``{node name: column}`` mapping."""

        columns = self.latent.latent_columns(m)
        names = self.latent.node_names

        if isinstance(latents, Mapping):
            missing = [names[c] for c in columns if names[c] not in latents]
            if missing:
                raise SpecificationError(f"latent columns {missing} are missing", m)
            return torch.stack([_as_tensor(latents[names[c]]) for c in columns], dim=-1)

        z = _as_tensor(latents)
        if z.ndim != 2:
            raise ContractError(f"latent matrix must be 2-D, got {tuple(z.shape)}")
        if z.shape[1] != self.latent.n_latent:
            missing = [names[c] for c in columns if c >= z.shape[1]]
            raise SpecificationError(
                f"latent matrix has {z.shape[1]} columns, layout needs "
                f"{self.latent.n_latent}"
                + (f"; missing {missing}" if missing else ""),
                m,
            )
        return z[:, list(columns)]

    def render(self, m: int, z_m: Tensor) -> Tensor:
        """``x^(m) = g_m(z^(m))`` on already-selected modality latents."""

        return self.mixing(m).forward(_as_tensor(z_m))

    def invert(self, m: int, x_m: Tensor) -> Tensor:
        return self.mixing(m).inverse(_as_tensor(x_m))

    @cached_property
    def fingerprint(self) -> str:
        layout = {
            "n_modalities": self.graph.n_modalities,
            "edges": [list(e) for e in self.graph.edges],
            "n_shared": self.latent.n_shared,
            "shared_maps": [list(pi) for pi in self.latent.shared_maps],
            "specific_dims": list(self.latent.specific_dims),
            "mechanisms": [
                {
                    "parents": list(mech.parents),
                    "weights": [float(w).hex() for w in mech.weights],
                    "nonlinearity": mech.nonlinearity,
                    "noise": mech.noise,
                    "scale": float(mech.scale).hex(),
                }
                for mech in self.scm.mechanisms
            ],
        }
        mixing_tensors = {
            f"g{m}.{name}": tensor
            for m, mixing in zip(self.graph.modalities, self.mixings)
            for name, tensor in mixing.tensors().items()
        }

        digest = hashlib.sha256()
        digest.update(json.dumps(layout, sort_keys=True).encode("utf-8"))
        digest.update(tensor_content_hash(mixing_tensors).encode("utf-8"))
        return digest.hexdigest()


def generate_observation(gen: GroundTruthGenerator, m: int, latents: LatentInput) -> Tensor:
    return gen.render(m, gen.modality_latents(m, latents))


def sample_pair_dataset(
    gen: GroundTruthGenerator, edge: Sequence[int], n: int, seed: int
) -> PairDataset:
    """Aligned observations for one edge.

    One joint latent draw per row is rendered through both mixings, so the
    shared factors behind ``x_i`` and ``x_j`` are the same realisation.
    """

    i, j = normalize_edge(edge)
    if not gen.graph.has_edge(i, j):
        raise GraphError(f"Edge {{{i},{j}}} is not in the modality graph {gen.graph.edges}")
    if n < 0:
        raise ContractError(f"row count must be >= 0, got {n}")

    latents = gen.sample_latents(n, derive_seed(seed, "pair-dataset", i, j))
    x_i = generate_observation(gen, i, latents).numpy()
    x_j = generate_observation(gen, j, latents).numpy()

    logger.debug(f"Sampled {n} rows for edge {{{i},{j}}}")
    return PairDataset(
        edge=(i, j),
        x_i=x_i,
        x_j=x_j,
        latents=latents,
        fingerprint=gen.fingerprint,
    )


def build_generator(world: DictConfig | Mapping, seed: int) -> GroundTruthGenerator:
    """Build the world described by a ``world`` config group entry."""

    if isinstance(world, DictConfig):
        world = OmegaConf.to_container(world, resolve=True)

    graph = ModalityGraph.build(world["n_modalities"], world.get("edges", []))
    latent = build_latent_spec(
        graph, world["n_shared"], world["shared"], world["specific"]
    )

    scm_cfg = dict(world.get("scm", {}))
    arrows = scm_cfg.get("arrows")
    if arrows is None:
        arrows = dag_arrows(scm_cfg.get("dag", "chain"), latent)
    scm = build_scm_spec(
        latent,
        arrows,
        seed=derive_seed(seed, "scm"),
        nonlinearity=scm_cfg.get("nonlinearity", "tanh"),
        noise=scm_cfg.get("noise", "gaussian"),
        root_scale=scm_cfg.get("root_scale", 1.0),
        noise_scale=scm_cfg.get("noise_scale", 0.3),
        weight_range=tuple(scm_cfg.get("weight_range", (0.5, 1.5))),
        weights=scm_cfg.get("weights"),
    )

    mixing_cfg = dict(world.get("mixing", {}))
    mixings = tuple(
        build_mixing(
            latent.d_x(m),
            int(mixing_cfg.get("depth", 3)),
            seed=seed,
            modality=m,
            bias_scale=float(mixing_cfg.get("bias_scale", 0.1)),
        )
        for m in graph.modalities
    )

    logger.info(
        f"Built world: {graph.n_modalities} modalities, edges {list(graph.edges)}, "
        f"d_c={latent.n_shared}, d_e={latent.d_e}, arrows {scm.arrows()}"
    )
    return GroundTruthGenerator(latent=latent, scm=scm, mixings=mixings)
