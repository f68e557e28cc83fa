from .generator import (
    GroundTruthGenerator,
    build_generator,
    generate_observation,
    sample_pair_dataset,
)
from .graph import ModalityGraph, normalize_edge
from .latent import LatentSpec, build_latent_spec
from .mixing import InvertibleMixing, build_mixing
from .scm import (
    Mechanism,
    ScmSpec,
    abduct_noise,
    build_scm_spec,
    dag_arrows,
    intervene,
    sample_latents,
)
from .statistics import distance_correlation, marginal_consistency

__all__ = [
    "GroundTruthGenerator",
    "InvertibleMixing",
    "LatentSpec",
    "Mechanism",
    "ModalityGraph",
    "ScmSpec",
    "abduct_noise",
    "build_generator",
    "build_latent_spec",
    "build_mixing",
    "build_scm_spec",
    "dag_arrows",
    "distance_correlation",
    "generate_observation",
    "intervene",
    "marginal_consistency",
    "normalize_edge",
    "sample_latents",
    "sample_pair_dataset",
]
