"""Collective full-rank audit of a modality's neighbour Jacobians.

Three criteria are evaluated independently and must agree:

1. the stacked operator ``[A_1; ...; A_K]`` has a trivial null space,
2. the Gram matrix ``G = sum_j A_j^T A_j`` is positive definite,
3. the left inverses ``L_j = G^{-1} A_j^T`` satisfy ``sum_j L_j A_j = I``.

A single relative tolerance ``rank_tol`` drives all three: eigenvalues of ``G``
below ``rank_tol * max`` count as zero, which for the stacked operator means
singular values below ``sqrt(rank_tol) * max``.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import torch

from pairlat.audit.jacobian import PartialJacobian
from pairlat.errors import ContractError

RESIDUAL_TOL = 1e-8

IDENTIFIABLE = "identifiable"
DEFICIENT = "deficient"


@dataclass(frozen=True, eq=False)
class GramReport:
    gram: np.ndarray
    eigenvalues: np.ndarray
    rank_tol: float
    nullspace: np.ndarray
    left_inverses: tuple[np.ndarray, ...]
    residual: float
    criteria: dict[str, bool] = field(default_factory=dict)
    neighbors: tuple[int, ...] = ()

    @property
    def eig_min(self) -> float:
        return float(self.eigenvalues[0]) if len(self.eigenvalues) else 0.0

    @property
    def eig_max(self) -> float:
        return float(self.eigenvalues[-1]) if len(self.eigenvalues) else 0.0

    @property
    def agree(self) -> bool:
        return len(set(self.criteria.values())) == 1

    @property
    def verdict(self) -> str:
        return IDENTIFIABLE if self.criteria["gram"] else DEFICIENT

    @property
    def identifiable(self) -> bool:
        return self.verdict == IDENTIFIABLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "criteria": dict(self.criteria),
            "criteria_agree": self.agree,
            "eig_min": self.eig_min,
            "eig_max": self.eig_max,
            "eigenvalues": self.eigenvalues,
            "rank_tol": self.rank_tol,
            "gram": self.gram,
            "nullspace": self.nullspace.T,
            "left_inverse_residual": self.residual,
            "neighbors": list(self.neighbors),
        }


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, PartialJacobian):
        a = a.matrix
    if isinstance(a, torch.Tensor):
        a = a.detach().cpu().numpy()
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"Jacobian must be 2-D, got shape {a.shape}")
    return a


def lemma1_audit(
    jacobians: Sequence[PartialJacobian | np.ndarray | torch.Tensor],
    rank_tol: float = 1e-8,
) -> GramReport:
    if len(jacobians) == 0:
        raise ContractError("lemma1_audit needs at least one neighbour Jacobian")
    if not 0 < rank_tol < 1:
        raise ContractError(f"rank_tol must lie in (0, 1), got {rank_tol}")

    blocks = [_as_matrix(a) for a in jacobians]
    d = blocks[0].shape[1]
    for k, block in enumerate(blocks):
        if block.shape[1] != d:
            raise ContractError(
                f"Jacobian {k} has {block.shape[1]} columns, expected d_c = {d}"
            )
    neighbors = tuple(a.neighbor for a in jacobians if isinstance(a, PartialJacobian))

    stacked = np.concatenate(blocks, axis=0)
    sv_rcond = np.sqrt(rank_tol)

    # (1) stacked operator
    nullspace = scipy.linalg.null_space(stacked, rcond=sv_rcond) if d else np.zeros((0, 0))
    stacked_ok = nullspace.shape[1] == 0

    # (2) Gram spectrum
    gram = sum(block.T @ block for block in blocks)
    eigenvalues = np.linalg.eigvalsh(gram) if d else np.zeros(0)
    top = eigenvalues[-1] if d else 0.0
    gram_ok = bool(d == 0 or (top > 0 and eigenvalues[0] > rank_tol * top))

    # (3) left inverses L_j = G^{-1} A_j^T; past a failed Gram check, the truncated
    # SVD of the stacked operator, whose residual stays O(1)
    if gram_ok:
        left_inverses, residual = _solved_left_inverses(blocks, gram, stacked)
    else:
        left_inverses, residual = _truncated_left_inverses(blocks, stacked, sv_rcond)
    inverse_ok = residual < RESIDUAL_TOL

    return GramReport(
        gram=gram,
        eigenvalues=eigenvalues,
        rank_tol=rank_tol,
        nullspace=nullspace,
        left_inverses=left_inverses,
        residual=residual,
        criteria={"stacked_rank": stacked_ok, "gram": gram_ok, "left_inverse": inverse_ok},
        neighbors=neighbors,
    )


def _split_columns(
    blocks: list[np.ndarray], operator: np.ndarray
) -> tuple[tuple[np.ndarray, ...], float]:
    """Cut ``d x sum(rows)`` into per-neighbour left inverses and measure
    ``||sum_j L_j A_j - I||_F``."""

    left_inverses = []
    start = 0
    for block in blocks:
        stop = start + block.shape[0]
        left_inverses.append(operator[:, start:stop])
        start = stop

    d = operator.shape[0]
    recomposed = sum(L @ A for L, A in zip(left_inverses, blocks))
    residual = float(np.linalg.norm(recomposed - np.eye(d), ord="fro"))
    return tuple(left_inverses), residual


def _solved_left_inverses(
    blocks: list[np.ndarray], gram: np.ndarray, stacked: np.ndarray
) -> tuple[tuple[np.ndarray, ...], float]:
    d = stacked.shape[1]
    if d == 0:
        return tuple(np.zeros((0, b.shape[0])) for b in blocks), 0.0
    try:
        operator = np.linalg.solve(gram, stacked.T)
    except np.linalg.LinAlgError:
        return tuple(np.zeros((d, b.shape[0])) for b in blocks), float("inf")
    return _split_columns(blocks, operator)


def _truncated_left_inverses(
    blocks: list[np.ndarray], stacked: np.ndarray, sv_rcond: float
) -> tuple[tuple[np.ndarray, ...], float]:
    d = stacked.shape[1]
    if d == 0:
        return tuple(np.zeros((0, b.shape[0])) for b in blocks), 0.0

    u, s, vt = scipy.linalg.svd(stacked, full_matrices=False)
    keep = s > sv_rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return _split_columns(blocks, (vt[keep].T / s[keep]) @ u[:, keep].T)


def named_nullspace(report: GramReport, factor_names: Sequence[str], tol: float = 1e-6):
    """Null-space directions as ``{factor name: coefficient}`` maps."""

    directions = []
    for vector in report.nullspace.T:
        # Sign convention: largest entry positive
        vector = vector * np.sign(vector[np.argmax(np.abs(vector))])
        directions.append(
            {
                name: float(c)
                for name, c in zip(factor_names, vector)
                if abs(c) > tol
            }
        )
    return directions
