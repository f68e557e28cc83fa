import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional, Sequence

import hydra
import numpy as np
import pandas as pd
import torch
from hydra import compose, initialize_config_dir
from hydra.errors import HydraException
from loguru import logger
from omegaconf import DictConfig, OmegaConf, open_dict
from omegaconf.errors import OmegaConfBaseException

from pairlat import __version__
from pairlat.audit.report import audit_world
from pairlat.callbacks.loss_trace import LossTraceWriter
from pairlat.datasets.io import load_dataset, save_dataset
from pairlat.datasets.pair import PairDataset
from pairlat.errors import ConfigError
from pairlat.evaluation.ablation import (
    VARIANTS,
    Variant,
    run_ablation,
    run_sensitivity,
    sensitivity_grid,
)
from pairlat.evaluation.block import block_r2, leakage_r2
from pairlat.evaluation.component import map_sparsity_report, mcc
from pairlat.evaluation.report import REPORT_PHASES, emit_report
from pairlat.models.alignment.lit_module import Stage1Config
from pairlat.models.alignment.masks import build_edge_masks
from pairlat.models.alignment.modules import PerceptronArgs, build_models, encode, model_key
from pairlat.models.recompose.backbone import FrozenBackbone, load_backbone, save_backbone
from pairlat.models.recompose.lit_module import Stage2Config
from pairlat.models.recompose.transfer import evaluate_transfer, transfer_all
from pairlat.train import (
    backbone_labels,
    configure_runtime,
    load_models,
    pretrain_backbone,
    save_models,
    train_stage1,
    train_stage2,
)
from pairlat.utils.instantiators import instantiate_callbacks
from pairlat.utils.seeding import derive_seed
from pairlat.utils.utils import atomic_write_text, dump_json, phase_wrapper
from pairlat.world.generator import GroundTruthGenerator, build_generator, sample_pair_dataset
from pairlat.world.statistics import marginal_consistency

CONFIG_DIR = Path(__file__).parent / "configs"
CONFIG_NAME = "experiment"
PRESETS = {"fig2": "fig2", "fig2-dropedge": "fig2_dropedge", "chain5": "chain5"}
OUTPUT_ROOT_ENV = "PAIRLAT_OUTPUT_ROOT"
RUN_RECORD = "run_record.json"

# Group selections are handled by Hydra alone; everything else is re-applied
# after the --config file so the command line wins.
GROUP_KEYS = ("world",)


def _dotted_keys(cfg, prefix: str = "") -> list[str]:
    keys = []
    for key, value in cfg.items():
        path = f"{prefix}{key}"
        keys.append(path)
        if isinstance(value, (DictConfig, Mapping)):
            keys.extend(_dotted_keys(value, path + "."))
    return keys


def _compose(overrides: Sequence[str]) -> DictConfig:
    with initialize_config_dir(config_dir=str(CONFIG_DIR.resolve()), version_base="1.3"):
        return compose(config_name=CONFIG_NAME, overrides=list(overrides))


def valid_keys() -> list[str]:
    return _dotted_keys(_compose([]))


def compose_config(
    preset: Optional[str] = None,
    overrides: Sequence[str] = (),
    config_path: Optional[Path | str] = None,
    seed: Optional[int] = None,
) -> DictConfig:
    """Hydra composition of ``experiment.yaml`` plus preset, overrides and an
    optional YAML file merged in struct mode."""

    group_overrides = []
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset {preset!r}", PRESETS)
        group_overrides.append(f"world={PRESETS[preset]}")

    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"seed={int(seed)}")

    try:
        cfg = _compose(group_overrides + overrides)
    except HydraException as e:
        raise ConfigError(str(e), valid_keys()) from e

    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.is_file():
            raise ConfigError(f"Config file {config_path} does not exist")

        OmegaConf.set_struct(cfg, True)
        try:
            cfg = OmegaConf.merge(cfg, OmegaConf.load(config_path))
            dotlist = [o for o in overrides if o.split("=", 1)[0].lstrip("+~") not in GROUP_KEYS]
            cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(dotlist))
        except OmegaConfBaseException as e:
            raise ConfigError(f"{config_path}: {e}", valid_keys()) from e

    OmegaConf.set_struct(cfg, True)
    return cfg


def config_fingerprint(cfg: DictConfig) -> str:
    text = OmegaConf.to_yaml(cfg, resolve=True, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def default_output_dir(cfg: DictConfig, fingerprint: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{cfg.world.name}-s{cfg.seed}-{fingerprint[:8]}"


@dataclass
class RunRecord:
    fingerprint: str
    seed: int
    command: str
    version: str = __version__
    phases: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    verdicts: dict[str, object] = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        return atomic_write_text(out_dir / RUN_RECORD, dump_json(asdict(self)))


def _plain(cfg: DictConfig) -> dict:
    out = OmegaConf.to_container(cfg, resolve=True)
    out.pop("optimizer", None)
    return out


class Experiment:
    """One run: a resolved config, a master seed and an output directory.

    Phases read their prerequisites from the output directory when an earlier
    command left them there and rebuild them in memory otherwise; every
    rebuild is a pure function of the config, so both routes agree.
    """

    def __init__(self, cfg: DictConfig, out_dir: Path | str, command: str = ""):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.seed = int(cfg.seed)
        self.fingerprint = config_fingerprint(cfg)
        self.record = RunRecord(self.fingerprint, self.seed, command)

        configure_runtime(cfg.runtime.num_threads, cfg.runtime.deterministic)

    # Shared state

    @cached_property
    def generator(self) -> GroundTruthGenerator:
        return build_generator(self.cfg.world, self.seed)

    @property
    def data_dir(self) -> Path:
        return self.out / "data"

    def _edge_dir(self, edge) -> Path:
        return self.data_dir / f"edge_{edge[0]}_{edge[1]}"

    @cached_property
    def datasets(self) -> dict[tuple[int, int], PairDataset]:
        gen = self.generator
        n_rows = int(self.cfg.data.n_per_edge)
        out = {}
        for edge in gen.graph.edges:
            path = self._edge_dir(edge)
            if path.is_dir():
                dataset = load_dataset(path)
                # The fingerprint covers the seed through the keyed mixing weights
                if dataset.fingerprint != gen.fingerprint:
                    logger.warning(f"{path} was written by another world, regenerating")
                elif len(dataset) != n_rows:
                    logger.warning(f"{path} holds {len(dataset)} rows, not {n_rows}, regenerating")
                else:
                    out[edge] = dataset
                    continue
            out[edge] = sample_pair_dataset(gen, edge, n_rows, self.seed)
        return out

    @cached_property
    def splits(self) -> dict[tuple[int, int], dict[str, PairDataset]]:
        return {edge: ds.split(self.seed) for edge, ds in self.datasets.items()}

    def train_views(self):
        return [parts["train"].training_view() for _, parts in sorted(self.splits.items())]

    @staticmethod
    def _perceptron_args(node: DictConfig) -> PerceptronArgs:
        return PerceptronArgs(**OmegaConf.to_container(node, resolve=True))

    def stage1_config(self, overrides: Optional[Mapping] = None) -> Stage1Config:
        values = _plain(self.cfg.stage1)
        values.update(overrides or {})
        return Stage1Config(seed=self.seed, **values)

    def stage2_config(self) -> Stage2Config:
        return Stage2Config(seed=self.seed, **_plain(self.cfg.stage2))

    def masks(self, config: Stage1Config):
        return build_edge_masks(
            self.generator.latent,
            self.generator.graph.edges,
            mode=config.mask_mode,
            k=config.mask_k,
            k_shift=config.mask_k_shift,
            seed=self.seed,
        )

    def fresh_models(self):
        return build_models(
            self.generator.latent,
            self.seed,
            self._perceptron_args(self.cfg.model.encoder),
            self._perceptron_args(self.cfg.model.decoder),
        )

    def _checkpoint(self, name: str) -> Path:
        return self.out / "checkpoints" / f"{name}.safetensors"

    def _load_models(self, name: str):
        path = self._checkpoint(name)
        if not path.is_file():
            return None
        return load_models(
            path,
            self.generator.latent,
            self._perceptron_args(self.cfg.model.encoder),
            self._perceptron_args(self.cfg.model.decoder),
            fingerprint=self.fingerprint,
        )

    def _artifact(self, name: str, value) -> Path:
        path = atomic_write_text(self.out / f"{name}.json", dump_json(value))
        self.record.artifacts[name] = str(path)
        return path

    def _read_artifact(self, name: str) -> Optional[dict]:
        path = self.out / f"{name}.json"
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    # Training building blocks, also used by ablations and sweeps

    def run_stage1(self, overrides: Optional[Mapping] = None, trace: bool = False):
        config = self.stage1_config(overrides)
        models = self.fresh_models()
        callbacks = instantiate_callbacks(self.cfg.get("callbacks"))
        writer = LossTraceWriter(self.out / "stage1_trace.csv" if trace else None)
        module = train_stage1(
            models,
            self.train_views(),
            self.masks(config),
            config,
            optimizer=hydra.utils.instantiate(self.cfg.stage1.optimizer),
            callbacks=callbacks + [writer],
        )
        return module, writer

    @cached_property
    def backbone(self) -> tuple[FrozenBackbone, str]:
        path = self._checkpoint("backbone")
        args = self._perceptron_args(self.cfg.backbone.probe)
        if path.is_file():
            return load_backbone(path, args)

        stage2 = self.stage2_config()
        return pretrain_backbone(
            self.generator,
            stage2.target,
            stage2.label_factor,
            derive_seed(self.seed, "backbone"),
            n_samples=self.cfg.backbone.n_samples,
            epochs=self.cfg.backbone.epochs,
            batch_size=self.cfg.backbone.batch_size,
            lr=self.cfg.backbone.lr,
            args=args,
        )

    def run_stage2(self, models, masks):
        backbone, _ = self.backbone
        config = self.stage2_config()
        return train_stage2(
            models,
            backbone,
            self.train_views(),
            masks,
            config,
            optimizer=hydra.utils.instantiate(self.cfg.stage2.optimizer),
            callbacks=instantiate_callbacks(self.cfg.get("callbacks")),
        )

    def transfer_eval_rows(self):
        """Fresh latents never seen by training, rendered for every modality the
        transfer touches."""

        stage2 = self.stage2_config()
        n = max(self.cfg.data.n_per_edge // 10, 2)
        latents = self.generator.sample_latents(n, derive_seed(self.seed, "transfer-eval"))
        gen = self.generator
        inputs = {j: gen.render(j, gen.modality_latents(j, latents)) for j in stage2.sources}
        target_x = gen.render(stage2.target, gen.modality_latents(stage2.target, latents))
        labels = torch.from_numpy(backbone_labels(latents, stage2.label_factor))
        return inputs, target_x, labels

    def score_transfer(self, models, masks) -> dict:
        backbone, _ = self.backbone
        stage2 = self.stage2_config()
        inputs, target_x, labels = self.transfer_eval_rows()
        result = evaluate_transfer(
            models, backbone, masks, stage2.target, inputs, labels, stage2.aggregation
        )

        with torch.no_grad():
            transfers = transfer_all(models, masks, stage2.target, inputs)
        denom = float(target_x.pow(2).sum())
        result["relative_error"] = {
            str(j): float((x - target_x).pow(2).sum()) / denom for j, x in transfers.items()
        }
        return result

    # Phases

    @phase_wrapper("gen")
    def gen(self) -> dict:
        gen = self.generator
        paths = {}
        for edge, dataset in sorted(self.datasets.items()):
            paths[f"{edge[0]}-{edge[1]}"] = str(save_dataset(dataset, self._edge_dir(edge)))

        marginals = {}
        for m in gen.graph.modalities:
            edges = [e for e in sorted(self.datasets) if m in e]
            if len(edges) < 2:
                continue
            a = self.datasets[edges[0]].training_view().modality(m)
            b = self.datasets[edges[1]].training_view().modality(m)
            checks = marginal_consistency(a, b, derive_seed(self.seed, "marginals", m))
            marginals[str(m)] = {
                "edges": [list(edges[0]), list(edges[1])],
                "consistent": all(c.consistent for c in checks),
                "checks": [asdict(c) for c in checks],
            }

        artifact = {
            "generator_fingerprint": gen.fingerprint,
            "datasets": paths,
            "rows_per_edge": int(self.cfg.data.n_per_edge),
            "marginals": marginals,
        }
        self._artifact("gen", artifact)
        return artifact

    @phase_wrapper("audit")
    def audit(self) -> dict:
        settings = OmegaConf.to_container(self.cfg.audit, resolve=True)
        report = audit_world(self.generator, derive_seed(self.seed, "audit"), **settings)
        self._artifact("audit", report)
        self.record.verdicts["collective_rank"] = {
            m: v["verdict"] for m, v in report["collective_rank"].items()
        }
        self.record.verdicts["edge_coverage"] = report["edge_coverage"]
        return report

    @phase_wrapper("train-stage1")
    def stage1(self) -> dict:
        module, writer = self.run_stage1(trace=True)
        path = save_models(module.models, self._checkpoint("stage1"), self.fingerprint)
        self.record.artifacts["stage1_checkpoint"] = str(path)

        trace = writer.frame()
        artifact = {
            "config": module.config.to_dict(),
            "masks": [m.to_dict() for _, m in sorted(module.masks.items())],
            "steps": len(trace),
            "initial_total": float(trace["total"].iloc[0]) if len(trace) else None,
            "final_terms": module.last_terms,
        }
        self._artifact("train-stage1", artifact)
        return artifact

    def stage1_models(self):
        models = self._load_models("stage1")
        if models is None:
            logger.info("No Stage I checkpoint in the output directory, training one")
            models = self.run_stage1()[0].models
        return models

    @phase_wrapper("train-stage2")
    def stage2(self) -> dict:
        models = self.stage1_models()
        masks = self.masks(self.stage1_config())

        backbone, hash_before = self.backbone
        backbone_path = self._checkpoint("backbone")
        if not backbone_path.is_file():
            save_backbone(backbone, backbone_path, self.fingerprint)
        self.record.artifacts["backbone_checkpoint"] = str(backbone_path)

        module = self.run_stage2(models, masks)
        path = save_models(module.models, self._checkpoint("stage2"), self.fingerprint)
        self.record.artifacts["stage2_checkpoint"] = str(path)

        artifact = {
            "config": module.config.to_dict(),
            "backbone_hash": hash_before,
            "backbone_unchanged": backbone.content_hash() == hash_before,
            "final_terms": module.last_terms,
        }
        self._artifact("train-stage2", artifact)
        return artifact

    def _identifiability(self, models) -> dict:
        latent = self.generator.latent
        evaluation = self.cfg.evaluation
        out = {}

        for m in self.generator.graph.modalities:
            xs, zs = [], []
            for edge, parts in sorted(self.splits.items()):
                if m not in edge:
                    continue
                for name in ("fit", "score"):
                    part = parts[name]
                    xs.append(part.training_view().modality(m))
                    zs.append(part.evaluation_latents()[:, list(latent.shared_columns(m))])
            if not xs or latent.d_c(m) == 0:
                continue

            x = torch.from_numpy(np.concatenate(xs))
            z_true = np.concatenate(zs)
            with torch.no_grad():
                z_c, z_s = encode(models[model_key(m)].encoder, x)

            block = block_r2(
                z_c.numpy(),
                z_true,
                derive_seed(self.seed, "eval", m),
                evaluation.fit_fraction,
                nonlinear=evaluation.nonlinear,
            )
            out[str(m)] = {
                "factors": [f"c{r}" for r in latent.pi(m)],
                "block": block.to_dict(),
                "leakage_r2": leakage_r2(
                    z_s.numpy(), z_true, derive_seed(self.seed, "eval", m), evaluation.fit_fraction
                ),
                "component": mcc(z_c.numpy(), z_true).to_dict(),
                "map_sparsity": map_sparsity_report(
                    block.coef, tau0=evaluation.map_tau0, relative=True
                ),
                "n_rows": len(x),
            }
            logger.info(
                f"Modality {m}: block R2 {block.r2:.3f}, leakage "
                f"{out[str(m)]['leakage_r2']:.3f}, MCC {out[str(m)]['component']['mcc']:.3f}"
            )
        return out

    @phase_wrapper("eval")
    def evaluate(self) -> dict:
        models = self._load_models("stage2")
        source = "stage2"
        if models is None:
            models, source = self.stage1_models(), "stage1"
        masks = self.masks(self.stage1_config())

        artifact = {
            "models": source,
            "modalities": self._identifiability(models),
            "transfer": self.score_transfer(models, masks),
        }
        self._artifact("eval", artifact)
        self.record.verdicts["transfer_accuracy"] = artifact["transfer"]["aggregate"]
        return artifact

    # Ablations and sweeps rebuild everything per seed in memory

    def _for_seed(self, seed: int) -> "Experiment":
        if seed == self.seed:
            return self
        cfg = copy.deepcopy(self.cfg)
        with open_dict(cfg):
            cfg.seed = seed
        return Experiment(cfg, self.out / "seeds" / f"s{seed}", self.record.command)

    def score_variant(self, variant: Variant, seed: int) -> dict:
        run = self._for_seed(seed)
        config = run.stage1_config(variant.stage1_overrides)
        masks = run.masks(config)

        if variant.stage1:
            models = run.run_stage1(variant.stage1_overrides)[0].models
        else:
            models = run.fresh_models()
        if variant.stage2:
            run.run_stage2(models, masks)

        result = run.score_transfer(models, masks)
        return {"score": result["aggregate"], "chance": result["chance"]}

    @phase_wrapper("ablate")
    def ablate(self, seeds: Optional[Sequence[int]] = None) -> dict:
        ablation = self.cfg.ablation
        seeds = list(seeds if seeds is not None else ablation.seeds)
        variants = list(ablation.variants)
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"Unknown ablation variants {unknown}", VARIANTS)

        report = run_ablation(
            self.score_variant, seeds, variants, ablation.min_gap, ablation.chance_band
        )
        artifact = report.to_dict()
        self._artifact("ablate", artifact)
        atomic_write_text(
            self.out / "ablation.csv", report.frame().to_csv(index=False, float_format="%.17g")
        )
        self.record.verdicts["ablation"] = report.verdict
        return artifact

    @phase_wrapper("sweep")
    def sweep(self) -> dict:
        sweep = self.cfg.sweep
        grid = sensitivity_grid(sweep.lam, sweep.mask_k_shift)
        frame: pd.DataFrame = run_sensitivity(
            lambda settings, seed: self.score_variant(
                Variant("sweep", stage1_overrides=settings), seed
            ),
            list(sweep.seeds),
            grid,
        )
        artifact = {"grid": grid, "rows": frame.to_dict(orient="records")}
        self._artifact("sweep", artifact)
        atomic_write_text(
            self.out / "sweep.csv", frame.to_csv(index=False, float_format="%.17g")
        )
        return artifact

    @phase_wrapper("report")
    def report(self) -> dict:
        artifacts = {phase: self._read_artifact(phase) for phase in REPORT_PHASES}
        return emit_report(artifacts, self.out, self.fingerprint, self.seed)

    def finish(self) -> Path:
        return self.record.write(self.out)

