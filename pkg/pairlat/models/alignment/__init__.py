from .lit_module import TERMS, Stage1Config, Stage1Module, stage1_terms
from .losses import (
    contrastive_loss,
    cross_reconstruction,
    decode_shared,
    masked_similarity,
    pairwise_masked_similarity,
    recon_loss,
    symmetric_info_nce,
)
from .masks import MASK_MODES, AlignmentMask, build_edge_masks, build_mask
from .modules import (
    ModalityDecoder,
    ModalityEncoder,
    ModalityModel,
    Perceptron,
    PerceptronArgs,
    build_models,
    encode,
    model_key,
)

__all__ = [
    "AlignmentMask",
    "MASK_MODES",
    "ModalityDecoder",
    "ModalityEncoder",
    "ModalityModel",
    "Perceptron",
    "PerceptronArgs",
    "Stage1Config",
    "Stage1Module",
    "TERMS",
    "build_edge_masks",
    "build_mask",
    "build_models",
    "contrastive_loss",
    "cross_reconstruction",
    "decode_shared",
    "encode",
    "masked_similarity",
    "model_key",
    "pairwise_masked_similarity",
    "recon_loss",
    "stage1_terms",
    "symmetric_info_nce",
]
