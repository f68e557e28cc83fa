"""Latent structural causal model over the global factors ``c`` and ``s``.

Each node follows the additive-noise form ``z_v = act(w_v . Pa(v)) + sigma_v eps_v``;
roots are pure noise ``sigma_v eps_v``.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Sequence

import networkx as nx
import numpy as np
import torch
from torch import Tensor

from pairlat.errors import SpecificationError
from pairlat.utils.seeding import numpy_rng
from pairlat.world.latent import LatentSpec

NONLINEARITIES = ("tanh", "linear")
NOISE_FAMILIES = ("gaussian", "laplace", "uniform")

SAMPLE_BLOCK_ROWS = 4096


@dataclass(frozen=True)
class Mechanism:
    parents: tuple[int, ...]
    weights: tuple[float, ...]
    nonlinearity: str = "tanh"
    noise: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if len(self.parents) != len(self.weights):
            raise SpecificationError("every parent needs exactly one weight")
        if self.nonlinearity not in NONLINEARITIES:
            raise SpecificationError(
                f"unknown nonlinearity {self.nonlinearity!r}, expected {NONLINEARITIES}"
            )
        if self.noise not in NOISE_FAMILIES:
            raise SpecificationError(
                f"unknown noise family {self.noise!r}, expected {NOISE_FAMILIES}"
            )
        if not self.scale > 0:
            raise SpecificationError(f"noise scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class ScmSpec:
    latent: LatentSpec
    mechanisms: tuple[Mechanism, ...]

    def __post_init__(self):
        if len(self.mechanisms) != self.latent.n_latent:
            raise SpecificationError(
                f"need {self.latent.n_latent} mechanisms, got {len(self.mechanisms)}"
            )

        if not nx.is_directed_acyclic_graph(self.dag):
            cycle = nx.find_cycle(self.dag)
            raise SpecificationError(f"latent graph has a cycle: {cycle}")

        names = self.latent.node_names
        for child, mechanism in enumerate(self.mechanisms):
            for parent in mechanism.parents:
                if parent >= self.latent.n_shared:
                    owner = self.latent.owner_of_specific(parent)
                    if (
                        child < self.latent.n_shared
                        or self.latent.owner_of_specific(child) != owner
                    ):
                        raise SpecificationError(
                            f"specific latent {names[parent]} may only cause "
                            f"specific latents of its own modality, not {names[child]}",
                            owner,
                        )

    @cached_property
    def dag(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.latent.n_latent))
        for child, mechanism in enumerate(self.mechanisms):
            for parent, weight in zip(mechanism.parents, mechanism.weights):
                graph.add_edge(parent, child, weight=weight)
        return graph

    @cached_property
    def order(self) -> tuple[int, ...]:
        return tuple(nx.lexicographical_topological_sort(self.dag))

    def descendants(self, column: int) -> set[int]:
        return nx.descendants(self.dag, column)

    def arrows(self) -> list[tuple[str, str]]:
        names = self.latent.node_names
        return [(names[p], names[c]) for p, c in sorted(self.dag.edges)]

    # Structural assignments, evaluated in torch so they can be differentiated.

    def mechanism_values(self, z: Tensor) -> Tensor:
        """``f_v(Pa(v))`` for every node, evaluated at the rows of ``z``."""

        out = torch.zeros_like(z)
        for v, mechanism in enumerate(self.mechanisms):
            if mechanism.parents:
                out[:, v] = self._activate(v, self._preactivation(v, z))
        return out

    def _preactivation(self, v: int, z: Tensor) -> Tensor:
        mechanism = self.mechanisms[v]
        weights = torch.tensor(mechanism.weights, dtype=z.dtype)
        return z[:, list(mechanism.parents)] @ weights

    def _activate(self, v: int, pre: Tensor) -> Tensor:
        return torch.tanh(pre) if self.mechanisms[v].nonlinearity == "tanh" else pre

    def solve(
        self, exogenous: Tensor, interventions: Optional[Mapping[int, Tensor]] = None
    ) -> Tensor:
        """Ancestral pass: node values from scaled exogenous terms ``sigma eps``.

        Intervened columns take their given value; everything downstream is
        recomputed with the exogenous terms held fixed.
        """

        interventions = interventions or {}
        columns: list[Optional[Tensor]] = [None] * self.latent.n_latent

        for v in self.order:
            if v in interventions:
                columns[v] = interventions[v]
                continue

            mechanism = self.mechanisms[v]
            if mechanism.parents:
                parents = torch.stack([columns[p] for p in mechanism.parents], dim=-1)
                weights = torch.tensor(mechanism.weights, dtype=exogenous.dtype)
                columns[v] = self._activate(v, parents @ weights) + exogenous[:, v]
            else:
                columns[v] = exogenous[:, v]

        return torch.stack(columns, dim=-1)

    def abduct(self, z: Tensor) -> Tensor:
        """Exogenous terms ``z - f(Pa)`` that reproduce ``z`` under :meth:`solve`."""

        return z - self.mechanism_values(z)

    def direct_jacobian(self, z: Tensor) -> Tensor:
        """``J[n, v, p] = d f_v / d z_p`` at each row (chain rule on tanh)."""

        n, d = z.shape
        jac = torch.zeros(n, d, d, dtype=z.dtype)
        for v, mechanism in enumerate(self.mechanisms):
            if not mechanism.parents:
                continue
            pre = self._preactivation(v, z)
            slope = (
                1 - torch.tanh(pre) ** 2
                if mechanism.nonlinearity == "tanh"
                else torch.ones_like(pre)
            )
            weights = torch.tensor(mechanism.weights, dtype=z.dtype)
            jac[:, v, list(mechanism.parents)] = slope[:, None] * weights[None, :]
        return jac


def dag_arrows(name: str, latent: LatentSpec) -> list[tuple[str, str]]:
    """Named arrow sets over the shared factors."""

    c = [f"c{r}" for r in range(1, latent.n_shared + 1)]
    match name:
        case "chain":
            return list(zip(c[:-1], c[1:]))
        case "crossed":
            if latent.n_shared != 4:
                raise SpecificationError("the crossed DAG is defined for four shared factors")
            return [("c2", "c1"), ("c2", "c4"), ("c4", "c1"), ("c1", "c3")]
        case "empty":
            return []
        case _:
            raise SpecificationError(
                f"unknown DAG preset {name!r}, expected chain, crossed or empty"
            )


def build_scm_spec(
    latent: LatentSpec,
    arrows: Sequence[Sequence[str]],
    seed: int,
    nonlinearity: str = "tanh",
    noise: str = "gaussian",
    root_scale: float = 1.0,
    noise_scale: float = 0.3,
    weight_range: Sequence[float] = (0.5, 1.5),
    weights: Optional[Mapping[str, float]] = None,
) -> ScmSpec:
    """Assemble an SCM from named arrows ``(parent, child)``.

    Arrow weights are drawn with random sign and magnitude in ``weight_range``
    unless ``weights`` pins them as ``{"parent->child": w}``.
    """

    index = {name: k for k, name in enumerate(latent.node_names)}
    parents: dict[int, list[int]] = {k: [] for k in index.values()}
    for arrow in arrows:
        parent, child = (str(a) for a in arrow)
        for name in (parent, child):
            if name not in index:
                raise SpecificationError(
                    f"unknown latent {name!r} in arrow {parent}->{child}; "
                    f"known: {list(index)}"
                )
        if parent == child:
            raise SpecificationError(f"self-loop on {parent}")
        parents[index[child]].append(index[parent])

    weights = dict(weights or {})
    rng = numpy_rng(seed, "scm-weights")
    low, high = weight_range

    mechanisms = []
    for v, name in enumerate(latent.node_names):
        pa = tuple(sorted(parents[v]))
        drawn = rng.uniform(low, high, size=len(pa)) * rng.choice([-1.0, 1.0], size=len(pa))
        w = tuple(
            float(weights.get(f"{latent.node_names[p]}->{name}", drawn[k]))
            for k, p in enumerate(pa)
        )
        mechanisms.append(
            Mechanism(
                parents=pa,
                weights=w,
                nonlinearity=nonlinearity,
                noise=noise,
                scale=float(noise_scale if pa else root_scale),
            )
        )

    return ScmSpec(latent=latent, mechanisms=tuple(mechanisms))


def _standard_noise(rng: np.random.Generator, family: str, n: int) -> np.ndarray:
    # Unit-variance draws for every family
    match family:
        case "gaussian":
            return rng.standard_normal(n)
        case "laplace":
            return rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=n)
        case "uniform":
            return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=n)
    raise SpecificationError(f"unknown noise family {family!r}")


def sample_exogenous(scm: ScmSpec, n: int, seed: int) -> np.ndarray:
    """Scaled exogenous terms, drawn in fixed-size row blocks keyed by block index."""

    d = scm.latent.n_latent
    blocks = []
    for b, start in enumerate(range(0, n, SAMPLE_BLOCK_ROWS)):
        rows = min(SAMPLE_BLOCK_ROWS, n - start)
        rng = numpy_rng(seed, "latents", b)
        block = np.empty((rows, d), dtype=np.float64)
        for v, mechanism in enumerate(scm.mechanisms):
            block[:, v] = mechanism.scale * _standard_noise(rng, mechanism.noise, rows)
        blocks.append(block)

    if not blocks:
        return np.zeros((0, d), dtype=np.float64)
    return np.concatenate(blocks, axis=0)


def sample_latents(scm: ScmSpec, n: int, seed: int) -> np.ndarray:
    """Ancestral sampling of ``n`` rows; columns follow ``LatentSpec`` layout."""

    if n < 0:
        raise SpecificationError(f"row count must be >= 0, got {n}")

    exogenous = torch.from_numpy(sample_exogenous(scm, n, seed))
    if n == 0:
        return exogenous.numpy()
    return scm.solve(exogenous).numpy()


def abduct_noise(scm: ScmSpec, latents: Tensor) -> Tensor:
    """Exogenous terms behind each latent row; ``scm.solve`` maps them back."""

    return scm.abduct(torch.as_tensor(latents, dtype=torch.float64))


def intervene(scm: ScmSpec, latents: Tensor, column: int, values: Tensor) -> Tensor:
    """Set one latent column and recompute its descendants with the noise held fixed."""

    latents = torch.as_tensor(latents, dtype=torch.float64)
    exogenous = scm.abduct(latents)
    return scm.solve(exogenous, {column: values})
