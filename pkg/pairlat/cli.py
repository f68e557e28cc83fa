import sys
from pathlib import Path
from typing import Optional, Sequence

import click
from loguru import logger

from pairlat import __version__
from pairlat.errors import ConfigError, PhaseFailure
from pairlat.experiment import (
    Experiment,
    compose_config,
    config_fingerprint,
    default_output_dir,
)
from pairlat.utils.file import run_lock
from pairlat.utils.logger import setup_logger
from pairlat.utils.rich_utils import print_config_tree, print_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHASE = 3

# Subcommand name -> Experiment method
PHASE_METHODS = {
    "gen": "gen",
    "audit": "audit",
    "train-stage1": "stage1",
    "train-stage2": "stage2",
    "eval": "evaluate",
    "ablate": "ablate",
    "sweep": "sweep",
    "report": "report",
}


COMMON_OPTIONS = (
    click.option("--config", "config_path", type=click.Path(path_type=Path), default=None),
    click.option("--seed", type=int, default=None, help="Master seed."),
    click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Output directory (default: $PAIRLAT_OUTPUT_ROOT/<world>-s<seed>-<fingerprint>).",
    ),
    click.option("--preset", type=str, default=None, help="fig2, fig2-dropedge or chain5."),
    click.option("--set", "overrides", multiple=True, help="key=value override, repeatable."),
    click.option("--print-config", is_flag=True, default=False),
    click.option("--verbose", is_flag=True, default=False),
)


def common_options(func):
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


def run_phases(
    phases: Sequence[str],
    config_path: Optional[Path],
    seed: Optional[int],
    out: Optional[Path],
    preset: Optional[str],
    overrides: Sequence[str],
    print_config: bool,
    verbose: bool,
    phase_kwargs: Optional[dict] = None,
) -> int:
    """Compose the config, own the output directory and run ``phases`` in order.

    Returns the process exit status.
    """

    phase_kwargs = phase_kwargs or {}
    setup_logger(verbose=verbose)

    try:
        cfg = compose_config(preset, overrides, config_path, seed)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    fingerprint = config_fingerprint(cfg)
    setup_logger(fingerprint[:8], verbose)
    out_dir = out if out is not None else default_output_dir(cfg, fingerprint)
    if print_config:
        print_config_tree(cfg, output_dir=out_dir)
    try:
        lock = run_lock(out_dir)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG

    try:
        experiment = Experiment(cfg, out_dir, command=" ".join(sys.argv[1:]))
        for phase in phases:
            _, seconds = getattr(experiment, PHASE_METHODS[phase])(
                **phase_kwargs.get(phase, {})
            )
            experiment.record.phases[phase] = seconds
        experiment.finish()
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except PhaseFailure as e:
        logger.error(str(e))
        return EXIT_PHASE
    finally:
        lock.release()

    verdicts = experiment.record.verdicts
    if verdicts:
        print_table(
            "Verdicts", [{"item": k, "value": str(v)} for k, v in sorted(verdicts.items())]
        )
    logger.info(f"Run finished, artifacts in {out_dir}")
    return EXIT_OK


def _exit(status: int) -> None:
    if status != EXIT_OK:
        sys.exit(status)


@click.group()
@click.version_option(__version__, prog_name="pairlat")
def cli():
    """Pairwise-modality identifiability lab."""


@cli.command()
@common_options
def gen(**kwargs):
    """Generate and save the paired edge datasets."""
    _exit(run_phases(["gen"], **kwargs))


@cli.command()
@common_options
def audit(**kwargs):
    """Audit the ground-truth world: collective rank per modality and SCM sparsity."""
    _exit(run_phases(["audit"], **kwargs))


@cli.command("train-stage1")
@common_options
def train_stage1(**kwargs):
    _exit(run_phases(["train-stage1"], **kwargs))


@cli.command("train-stage2")
@common_options
def train_stage2(**kwargs):
    _exit(run_phases(["train-stage2"], **kwargs))


@cli.command("eval")
@common_options
def evaluate(**kwargs):
    """Score block and component identifiability and transfer accuracy."""
    _exit(run_phases(["eval"], **kwargs))


@cli.command()
@common_options
@click.option("--seeds", "n_seeds", type=int, default=None, help="Number of consecutive seeds.")
def ablate(n_seeds, **kwargs):
    """Train and score every ablation variant."""

    phase_kwargs = {}
    if n_seeds is not None:
        first = kwargs["seed"] or 0
        phase_kwargs["ablate"] = {"seeds": list(range(first, first + n_seeds))}
    _exit(run_phases(["ablate"], phase_kwargs=phase_kwargs, **kwargs))


@cli.command()
@common_options
def sweep(**kwargs):
    """Sensitivity to the reconstruction weight and the mask size."""
    _exit(run_phases(["sweep"], **kwargs))


@cli.command()
@common_options
def report(**kwargs):
    """Re-emit the consolidated report from stored artifacts."""
    _exit(run_phases(["report"], **kwargs))


def main():
    cli()


if __name__ == "__main__":
    main()
