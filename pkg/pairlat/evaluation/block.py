"""Block-level recovery scores: how much of a true shared block an estimated
block explains, and how much leaks into the estimated specific block."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from loguru import logger
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.metrics import r2_score
from sklearn.neural_network import MLPRegressor

from pairlat.errors import ContractError
from pairlat.utils.seeding import derive_seed, numpy_rng

MIN_ROWS_PER_DIM = 10
RIDGE_ALPHA = 1e-6


@dataclass
class BlockFit:
    r2: float
    per_coordinate: list[float]
    n_fit: int
    n_score: int
    fit: str = "affine"
    ridge_fallback: bool = False
    nonlinear_r2: Optional[float] = None
    note: str = ""
    coef: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("coef")
        return out


def _as_2d(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ContractError(f"{what} must be 2-D, got shape {a.shape}")
    return a


def fit_score_split(n: int, seed: int, fit_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    order = numpy_rng(seed, "block-fit").permutation(n)
    n_fit = int(round(fit_fraction * n))
    return np.sort(order[:n_fit]), np.sort(order[n_fit:])


def block_r2(
    estimates,
    truths,
    seed: int = 0,
    fit_fraction: float = 0.5,
    nonlinear: bool = False,
    hidden: int = 32,
) -> BlockFit:
    """Affine R² of predicting each true coordinate from the estimated block.

    The regression is fit on one part of the held-out rows and scored on the
    rest. A rank-deficient design falls back to a tiny ridge penalty and says
    so. With ``nonlinear`` a small perceptron regressor is scored as well.
    """

    x = _as_2d(estimates, "estimates")
    y = _as_2d(truths, "truths")
    if len(x) != len(y):
        raise ContractError(f"{len(x)} estimate rows against {len(y)} truth rows")

    dim = max(x.shape[1], y.shape[1])
    if len(x) < MIN_ROWS_PER_DIM * dim:
        raise ContractError(
            f"{len(x)} rows are too few for a {dim}-dimensional fit "
            f"(need {MIN_ROWS_PER_DIM * dim})"
        )

    fit_rows, score_rows = fit_score_split(len(x), seed, fit_fraction)
    x_fit, y_fit = x[fit_rows], y[fit_rows]

    if x.shape[1] == 0:
        per_coordinate = [0.0] * y.shape[1]
        return BlockFit(0.0, per_coordinate, len(fit_rows), len(score_rows), note="no predictors")

    centered = x_fit - x_fit.mean(axis=0)
    rank = np.linalg.matrix_rank(centered)
    ridge_fallback = rank < x.shape[1]
    if ridge_fallback:
        logger.warning(
            f"Design matrix has rank {rank} < {x.shape[1]}; falling back to ridge"
        )
        reg = Ridge(alpha=RIDGE_ALPHA)
    else:
        reg = LinearRegression()

    reg.fit(x_fit, y_fit)
    per_coordinate = r2_score(y[score_rows], reg.predict(x[score_rows]), multioutput="raw_values")

    nonlinear_r2 = None
    if nonlinear:
        mlp = MLPRegressor(
            hidden_layer_sizes=(hidden,),
            max_iter=1000,
            random_state=derive_seed(seed, "block-mlp") % (2**32),
        )
        mlp.fit(x_fit, y_fit if y.shape[1] > 1 else y_fit.ravel())
        nonlinear_r2 = float(
            np.mean(
                r2_score(
                    y[score_rows],
                    mlp.predict(x[score_rows]).reshape(len(score_rows), -1),
                    multioutput="raw_values",
                )
            )
        )

    return BlockFit(
        r2=float(np.mean(per_coordinate)),
        per_coordinate=[float(v) for v in per_coordinate],
        n_fit=len(fit_rows),
        n_score=len(score_rows),
        fit="ridge" if ridge_fallback else "affine",
        ridge_fallback=bool(ridge_fallback),
        nonlinear_r2=nonlinear_r2,
        coef=np.atleast_2d(reg.coef_),
    )


def leakage_r2(estimates_specific, truths, seed: int = 0, fit_fraction: float = 0.5) -> float:
    """R² of the true shared block from the estimated *specific* block.

    An empty specific block cannot leak anything and scores 0.
    """

    z_s = _as_2d(estimates_specific, "specific estimates")
    if z_s.shape[1] == 0:
        return 0.0
    return block_r2(z_s, truths, seed, fit_fraction).r2
