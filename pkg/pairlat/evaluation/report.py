from pathlib import Path
from typing import Mapping, Optional

import pandas as pd
from loguru import logger

from pairlat.utils.utils import atomic_write_text, dump_json

REPORT_SCHEMA_VERSION = 1
REPORT_FILE = "report.json"
REPORT_PHASES = ("gen", "audit", "train-stage1", "train-stage2", "eval", "ablate", "sweep")


def gram_table(audit: Mapping) -> pd.DataFrame:
    rows = []
    for m, entry in sorted(audit.get("collective_rank", {}).items(), key=lambda kv: int(kv[0])):
        eigenvalues = entry.get("worst_point", {}).get("eigenvalues", [])
        row = {"modality": int(m), "verdict": entry["verdict"]}
        for k, value in enumerate(eigenvalues):
            rows.append({**row, "index": k, "eigenvalue": value})
        if not eigenvalues:
            rows.append({**row, "index": None, "eigenvalue": None})
    return pd.DataFrame(rows, columns=["modality", "index", "eigenvalue", "verdict"])


def identifiability_table(evaluation: Mapping) -> pd.DataFrame:
    rows = [
        {
            "modality": int(m),
            "block_r2": entry["block"]["r2"],
            "leakage_r2": entry["leakage_r2"],
            "mcc": entry["component"]["mcc"],
            "map_in_class": entry["map_sparsity"]["in_class"],
        }
        for m, entry in sorted(evaluation.get("modalities", {}).items(), key=lambda kv: int(kv[0]))
    ]
    return pd.DataFrame(rows, columns=["modality", "block_r2", "leakage_r2", "mcc", "map_in_class"])


def ablation_table(ablation: Mapping) -> pd.DataFrame:
    rows = [
        {"variant": v, "seed": seed, "score": score}
        for v in ablation["variants"]
        for seed, score in zip(ablation["seeds"], ablation["scores"][v])
    ]
    return pd.DataFrame(rows, columns=["variant", "seed", "score"])


def emit_report(
    artifacts: Mapping[str, Optional[Mapping]],
    out_dir: Optional[Path | str] = None,
    fingerprint: str = "",
    seed: Optional[int] = None,
) -> dict:
    """Consolidate phase artifacts into one report; missing phases become gaps.

    The output is a pure function of its arguments, so re-emitting from stored
    artifacts reproduces the same bytes.
    """

    gaps = [phase for phase in REPORT_PHASES if not artifacts.get(phase)]
    sections = {phase: artifacts[phase] for phase in REPORT_PHASES if artifacts.get(phase)}

    tables: dict[str, pd.DataFrame] = {}
    if "audit" in sections:
        tables["gram"] = gram_table(sections["audit"])
    if "eval" in sections:
        tables["identifiability"] = identifiability_table(sections["eval"])
    if "ablate" in sections:
        tables["ablation"] = ablation_table(sections["ablate"])
    if "sweep" in sections and "rows" in sections["sweep"]:
        tables["sweep"] = pd.DataFrame(sections["sweep"]["rows"])

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_fingerprint": fingerprint,
        "seed": seed,
        "gaps": gaps,
        "sections": sections,
        "tables": sorted(tables),
        "metrics": "R² and MCC are operational scores on synthetic ground truth",
    }

    if out_dir is not None:
        out_dir = Path(out_dir)
        atomic_write_text(out_dir / REPORT_FILE, dump_json(report))
        for name, table in tables.items():
            atomic_write_text(
                out_dir / f"{name}.csv", table.to_csv(index=False, float_format="%.17g")
            )
        logger.info(f"Report written to {out_dir / REPORT_FILE}, gaps: {gaps or 'none'}")

    return report
