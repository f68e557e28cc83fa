import json
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import lightning as L
import numpy as np
import torch
from lightning import Callback, Trainer
from loguru import logger
from safetensors import safe_open
from safetensors.torch import save_file
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from pairlat.datasets.pair import PairView
from pairlat.datasets.round_robin import PairDataModule
from pairlat.errors import ContractError, FormatError, FrozenViolationError, SpecificationError
from pairlat.models.alignment.lit_module import Stage1Config, Stage1Module
from pairlat.models.alignment.masks import AlignmentMask
from pairlat.models.alignment.modules import PerceptronArgs, build_models
from pairlat.models.recompose.backbone import BackboneModule, FrozenBackbone, verify_frozen
from pairlat.models.recompose.lit_module import Stage2Config, Stage2Module
from pairlat.utils.seeding import derive_seed, torch_generator
from pairlat.utils.utils import tensor_content_hash
from pairlat.world.generator import GroundTruthGenerator

Optimizer = Callable[..., torch.optim.Optimizer]


def configure_runtime(num_threads: int = 1, deterministic: bool = True) -> None:
    torch.set_num_threads(num_threads)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def make_trainer(max_epochs: int, callbacks: Iterable[Callback] = ()) -> Trainer:
    return Trainer(
        accelerator="cpu",
        devices=1,
        precision="64-true",
        deterministic=True,
        logger=False,
        enable_checkpointing=False,
        enable_progress_bar=False,
        enable_model_summary=False,
        max_epochs=max_epochs,
        callbacks=list(callbacks),
    )


def train_stage1(
    models: nn.ModuleDict,
    views: Sequence[PairView],
    masks: Mapping[tuple[int, int], AlignmentMask],
    config: Stage1Config,
    optimizer: Optional[Optimizer] = None,
    callbacks: Iterable[Callback] = (),
) -> Stage1Module:
    """Round-robin Stage I over every edge's training rows, in place on ``models``."""

    module = Stage1Module(models, masks, config, optimizer)
    if config.epochs == 0:
        logger.info("Stage I budget is zero epochs, models left at initialisation")
        return module

    L.seed_everything(derive_seed(config.seed, "stage1") % (2**32), workers=False)
    datamodule = PairDataModule(views, config.batch_size, config.seed)
    logger.info(
        f"Stage I: {len(views)} edges, {datamodule.train_dataset.steps_per_epoch} "
        f"steps/epoch, {config.epochs} epochs"
    )

    make_trainer(config.epochs, callbacks).fit(model=module, datamodule=datamodule)
    return module


def backbone_labels(latents: np.ndarray, label_factor: int) -> np.ndarray:
    """``1[c_label > 0]`` read from the shared columns of a global latent matrix."""

    if not 1 <= label_factor <= latents.shape[1]:
        raise SpecificationError(f"label factor c{label_factor} is not a latent column")
    return (latents[:, label_factor - 1] > 0).astype(np.float64)


def pretrain_backbone(
    gen: GroundTruthGenerator,
    target: int,
    label_factor: int,
    seed: int,
    n_samples: int = 2000,
    epochs: int = 20,
    batch_size: int = 64,
    lr: float = 1e-3,
    args: Optional[PerceptronArgs] = None,
) -> tuple[FrozenBackbone, str]:
    """Fit the probe on clean ``x^(target)`` drawn from a fresh world sample, then
    freeze it. Returns the backbone and its content hash."""

    if target not in gen.graph.modalities:
        raise SpecificationError(f"backbone target {target} is not a modality")
    if label_factor not in gen.latent.pi(target):
        logger.warning(
            f"Label factor c{label_factor} is not observed by modality {target}; "
            "the backbone can only learn it through the SCM"
        )

    latents = gen.sample_latents(n_samples, derive_seed(seed, "backbone-data"))
    x = gen.render(target, gen.modality_latents(target, latents))
    y = torch.from_numpy(backbone_labels(latents, label_factor))

    backbone = FrozenBackbone(target, gen.latent.d_x(target), args, seed=seed)
    loader = DataLoader(
        TensorDataset(x, y),
        batch_size=batch_size,
        shuffle=True,
        generator=torch_generator(seed, "backbone-loader"),
    )

    L.seed_everything(derive_seed(seed, "backbone") % (2**32), workers=False)
    make_trainer(epochs).fit(model=BackboneModule(backbone, lr), train_dataloaders=loader)

    with torch.no_grad():
        accuracy = float((backbone.predict(x) == y).double().mean() * 100)
    logger.info(f"Backbone for modality {target} fit to {accuracy:.1f}% on its own data")

    return backbone, backbone.freeze()


def train_stage2(
    models: nn.ModuleDict,
    backbone: FrozenBackbone,
    views: Sequence[PairView],
    masks: Mapping[tuple[int, int], AlignmentMask],
    config: Stage2Config,
    optimizer: Optional[Optimizer] = None,
    callbacks: Iterable[Callback] = (),
) -> Stage2Module:
    """Recomposition training; raises :class:`FrozenViolationError` if the
    backbone's content hash moved."""

    hash_before = backbone.content_hash()
    module = Stage2Module(models, backbone, masks, config, optimizer)

    edges = set(config.edges)
    views = [v for v in views if v.edge in edges]
    missing = edges - {v.edge for v in views}
    if missing:
        raise ContractError(f"no training rows for Stage II edges {sorted(missing)}")

    if config.epochs > 0:
        L.seed_everything(derive_seed(config.seed, "stage2") % (2**32), workers=False)
        datamodule = PairDataModule(views, config.batch_size, derive_seed(config.seed, "stage2"))
        logger.info(
            f"Stage II: sources {config.sources} -> target {config.target}, "
            f"{config.epochs} epochs"
        )
        make_trainer(config.epochs, callbacks).fit(model=module, datamodule=datamodule)

    hash_after = backbone.content_hash()
    if not verify_frozen(backbone, hash_before):
        raise FrozenViolationError(hash_before, hash_after)

    logger.info(f"Backbone hash unchanged after Stage II ({hash_after[:12]})")
    return module


def save_models(models: nn.ModuleDict, path: Path | str, fingerprint: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    state = {k: v.detach().contiguous() for k, v in models.state_dict().items()}
    metadata = {
        "hash": tensor_content_hash(state),
        "shapes": json.dumps({k: list(v.shape) for k, v in sorted(state.items())}),
        "config_fingerprint": fingerprint,
    }
    save_file(state, str(path), metadata=metadata)
    logger.info(f"Saved {len(state)} modality tensors to {path}")
    return path


def load_models(
    path: Path | str,
    spec,
    encoder_args: Optional[PerceptronArgs] = None,
    decoder_args: Optional[PerceptronArgs] = None,
    fingerprint: Optional[str] = None,
) -> nn.ModuleDict:
    path = Path(path)
    if not path.is_file():
        raise FormatError(path.name, "model checkpoint is missing")

    with safe_open(str(path), framework="pt") as f:
        metadata = f.metadata() or {}
        state = {k: f.get_tensor(k) for k in f.keys()}

    if fingerprint is not None and metadata.get("config_fingerprint") != fingerprint:
        raise FormatError(
            "config_fingerprint", f"{path.name} was written by a different configuration"
        )
    if metadata.get("hash") != tensor_content_hash(state):
        raise FormatError("hash", f"{path.name} content hash does not match its metadata")

    models = build_models(spec, 0, encoder_args, decoder_args)
    try:
        models.load_state_dict(state)
    except RuntimeError as e:
        raise FormatError(path.name, f"parameters do not fit the models: {e}") from e
    return models
