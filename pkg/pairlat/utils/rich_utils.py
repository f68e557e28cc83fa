from pathlib import Path
from typing import Mapping, Optional, Sequence

import rich
import rich.syntax
import rich.table
import rich.tree
from loguru import logger as log
from omegaconf import DictConfig, OmegaConf


def print_config_tree(
    cfg: DictConfig,
    print_order: Sequence[str] = (
        "world",
        "data",
        "audit",
        "model",
        "stage1",
        "stage2",
        "evaluation",
        "ablation",
    ),
    resolve: bool = True,
    output_dir: Optional[Path] = None,
) -> None:
    """Prints content of DictConfig using Rich library and its tree structure.

    Args:
        cfg (DictConfig): Composed experiment configuration.
        print_order (Sequence[str], optional): Determines in what order config components are printed.
        resolve (bool, optional): Whether to resolve reference fields of DictConfig.
        output_dir (Path, optional): Also write the tree to `config_tree.log` there.
    """  # noqa: E501

    style = "dim"
    tree = rich.tree.Tree("CONFIG", style=style, guide_style=style)

    queue = []

    for field in print_order:
        (
            queue.append(field)
            if field in cfg
            else log.warning(f"Field '{field}' not found in config, skipping it")
        )

    for field in cfg:
        if field not in queue:
            queue.append(field)

    for field in queue:
        branch = tree.add(field, style=style, guide_style=style)

        config_group = cfg[field]
        if isinstance(config_group, DictConfig):
            branch_content = OmegaConf.to_yaml(config_group, resolve=resolve)
        else:
            branch_content = str(config_group)

        branch.add(rich.syntax.Syntax(branch_content, "yaml"))

    rich.print(tree)

    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(output_dir, "config_tree.log"), "w") as file:
            rich.print(tree, file=file)


def print_table(title: str, rows: Sequence[Mapping[str, object]]) -> None:
    if not rows:
        return

    table = rich.table.Table(title=title)
    columns = list(rows[0].keys())
    for column in columns:
        table.add_column(column)

    for row in rows:
        table.add_row(
            *(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in columns)
        )

    rich.print(table)
