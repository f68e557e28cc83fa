from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from pairlat.errors import ContractError

CONSTANT_TOL = 1e-12


@dataclass
class ComponentReport:
    correlation: np.ndarray
    pairs: list[tuple[int, int]]
    mcc: float
    excluded_estimates: list[int] = field(default_factory=list)
    excluded_truths: list[int] = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "mcc": self.mcc,
            "pairs": [list(p) for p in self.pairs],
            "correlation": self.correlation.tolist(),
            "excluded_estimates": self.excluded_estimates,
            "excluded_truths": self.excluded_truths,
            "note": self.note,
        }


def _constant_columns(a: np.ndarray) -> list[int]:
    return [k for k in range(a.shape[1]) if np.ptp(a[:, k]) <= CONSTANT_TOL]


def spearman_matrix(estimates: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """``|rho|`` between every estimated column (rows) and true column (cols)."""

    ra = rankdata(estimates, axis=0)
    rb = rankdata(truths, axis=0)
    ra = (ra - ra.mean(axis=0)) / ra.std(axis=0)
    rb = (rb - rb.mean(axis=0)) / rb.std(axis=0)
    return np.abs(ra.T @ rb / len(ra))


def mcc(estimates, truths) -> ComponentReport:
    """Mean matched absolute Spearman correlation.

    Matching is a maximum-weight assignment between estimated and true
    components. Constant columns carry no ranking and are excluded first.
    """

    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.ndim != 2 or tru.ndim != 2 or len(est) != len(tru):
        raise ContractError(f"cannot match shapes {est.shape} and {tru.shape}")

    bad_est, bad_tru = _constant_columns(est), _constant_columns(tru)
    keep_est = [k for k in range(est.shape[1]) if k not in bad_est]
    keep_tru = [k for k in range(tru.shape[1]) if k not in bad_tru]

    notes = []
    if bad_est or bad_tru:
        notes.append(
            f"constant columns excluded: estimates {bad_est}, truths {bad_tru}"
        )
    if len(keep_est) != len(keep_tru):
        notes.append(f"matched {min(len(keep_est), len(keep_tru))} of "
                     f"{len(keep_est)} x {len(keep_tru)} components")

    if not keep_est or not keep_tru:
        return ComponentReport(
            np.zeros((est.shape[1], tru.shape[1])), [], 0.0, bad_est, bad_tru,
            "; ".join(notes + ["nothing to match"]),
        )

    sub = spearman_matrix(est[:, keep_est], tru[:, keep_tru])
    corr = np.zeros((est.shape[1], tru.shape[1]))
    corr[np.ix_(keep_est, keep_tru)] = sub

    rows, cols = linear_sum_assignment(-sub)
    pairs = [(keep_est[r], keep_tru[c]) for r, c in zip(rows, cols)]
    value = float(np.clip(sub[rows, cols].mean(), 0.0, 1.0))

    return ComponentReport(corr, pairs, value, bad_est, bad_tru, "; ".join(notes))


def _jacobian_field(fit, points: Optional[np.ndarray]) -> np.ndarray:
    if callable(fit):
        if points is None:
            raise ContractError("a callable fit needs probe points")
        pts = torch.as_tensor(np.asarray(points), dtype=torch.float64)
        jac = torch.func.vmap(torch.func.jacrev(fit))(pts)
        return jac.detach().numpy()

    matrix = np.asarray(fit, dtype=np.float64)
    if matrix.ndim != 2:
        raise ContractError(f"a matrix fit must be 2-D, got {matrix.shape}")
    return matrix[None]


def is_generalized_permutation(pattern: np.ndarray, blocks: Optional[Sequence[int]] = None) -> bool:
    """One supported entry per row and per column, optionally within blocks."""

    rows, cols = pattern.shape
    if rows != cols:
        return False
    if not (np.all(pattern.sum(axis=0) == 1) and np.all(pattern.sum(axis=1) == 1)):
        return False
    if blocks is not None:
        r, c = np.nonzero(pattern)
        return all(blocks[a] == blocks[b] for a, b in zip(r, c))
    return True


def map_sparsity_report(
    fit: np.ndarray | Callable,
    tau0: float = 1e-6,
    points: Optional[np.ndarray] = None,
    blocks: Optional[Sequence[int]] = None,
    relative: bool = False,
) -> dict:
    """Support pattern of a fitted map's Jacobian and whether it is a
    (block-respecting) generalized permutation.

    ``fit`` is either the matrix of a linear map or a torch-differentiable
    callable probed at ``points``. With ``relative`` each row is scaled by its
    largest magnitude before thresholding.
    """

    field_ = np.abs(_jacobian_field(fit, points))
    if relative:
        scale = field_.max(axis=2, keepdims=True)
        field_ = np.divide(field_, scale, out=np.zeros_like(field_), where=scale > 0)

    pattern = (field_ > tau0).any(axis=0).astype(np.int64)
    return {
        "pattern": pattern.tolist(),
        "support": int(pattern.sum()),
        "in_class": bool(is_generalized_permutation(pattern, blocks)),
        "tau0": tau0,
        "n_probe": int(field_.shape[0]),
        "relative": relative,
    }
