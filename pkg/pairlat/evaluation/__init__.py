from .ablation import (
    CORE_VARIANTS,
    VARIANTS,
    AblationReport,
    Variant,
    ordering_verdict,
    run_ablation,
    run_sensitivity,
    sensitivity_grid,
)
from .block import BlockFit, block_r2, leakage_r2
from .component import ComponentReport, is_generalized_permutation, map_sparsity_report, mcc
from .report import REPORT_SCHEMA_VERSION, emit_report

__all__ = [
    "AblationReport",
    "BlockFit",
    "CORE_VARIANTS",
    "ComponentReport",
    "REPORT_SCHEMA_VERSION",
    "VARIANTS",
    "Variant",
    "block_r2",
    "emit_report",
    "is_generalized_permutation",
    "leakage_r2",
    "map_sparsity_report",
    "mcc",
    "ordering_verdict",
    "run_ablation",
    "run_sensitivity",
    "sensitivity_grid",
]
