"""Sample statistics used to check the simulated world."""

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from pairlat.errors import ContractError
from pairlat.utils.seeding import derive_seed


def _double_centered(x: np.ndarray) -> np.ndarray:
    d = cdist(x, x)
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def distance_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Sample distance correlation; zero iff independent in the population."""

    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    if len(x) != len(y) or len(x) < 2:
        raise ContractError(f"need two equal-length samples, got {len(x)} and {len(y)}")

    a, b = _double_centered(x), _double_centered(y)
    dcov_xy = (a * b).mean()
    dvar = (a * a).mean() * (b * b).mean()
    if dvar <= 0:
        return 0.0
    return float(np.sqrt(max(dcov_xy, 0.0) / np.sqrt(dvar)))


@dataclass(frozen=True)
class MarginalCheck:
    column: int
    energy: float
    threshold: float
    p_value: float

    @property
    def consistent(self) -> bool:
        return self.energy <= self.threshold


def marginal_consistency(
    a: np.ndarray,
    b: np.ndarray,
    seed: int,
    n_resamples: int = 199,
    level: float = 0.99,
    max_rows: int = 2000,
) -> list[MarginalCheck]:
    """Per-column two-sample energy statistic against its permutation quantile.

    Used to confirm that two edges sharing a modality see the same x^(i) marginal.
    """

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractError(f"column counts differ: {a.shape} vs {b.shape}")

    a, b = a[:max_rows], b[:max_rows]
    checks = []
    for k in range(a.shape[1]):
        result = stats.permutation_test(
            (a[:, k], b[:, k]),
            lambda u, v: stats.energy_distance(u, v),
            permutation_type="independent",
            alternative="greater",
            n_resamples=n_resamples,
            random_state=np.random.default_rng(derive_seed(seed, "marginal", k)),
        )
        checks.append(
            MarginalCheck(
                column=k,
                energy=float(result.statistic),
                threshold=float(np.quantile(result.null_distribution, level)),
                p_value=float(result.pvalue),
            )
        )
    return checks
