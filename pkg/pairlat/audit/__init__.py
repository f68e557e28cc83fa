from .jacobian import (
    PartialJacobian,
    analytic_partial_jacobian,
    neighbor_jacobians,
    partial_jacobian,
)
from .rank import DEFICIENT, IDENTIFIABLE, GramReport, lemma1_audit, named_nullspace
from .report import edge_coverage_holds, audit_modality, audit_world
from .sparsity import (
    SparsityReport,
    block_rotation,
    conjugate_sparsity_test,
    dedup_sparsity,
    random_block_permutation,
    scm_jacobian_field,
    scm_jacobian_field_fd,
)

__all__ = [
    "DEFICIENT",
    "GramReport",
    "IDENTIFIABLE",
    "PartialJacobian",
    "SparsityReport",
    "analytic_partial_jacobian",
    "edge_coverage_holds",
    "audit_modality",
    "audit_world",
    "block_rotation",
    "conjugate_sparsity_test",
    "dedup_sparsity",
    "lemma1_audit",
    "named_nullspace",
    "neighbor_jacobians",
    "partial_jacobian",
    "random_block_permutation",
    "scm_jacobian_field",
    "scm_jacobian_field_fd",
]
