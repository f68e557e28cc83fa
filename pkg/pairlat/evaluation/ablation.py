"""Ablation harness: every variant is scored with the same data, seeds and
budget, and the mean scores are checked against the expected ordering."""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from pairlat.errors import NonFiniteLossError, NumericOverflowError


@dataclass(frozen=True)
class Variant:
    name: str
    stage1: bool = True
    stage2: bool = True
    stage1_overrides: Mapping[str, object] = field(default_factory=dict)
    description: str = ""


VARIANTS: dict[str, Variant] = {
    v.name: v
    for v in (
        Variant("full", description="Stage I then Stage II"),
        Variant("w/o-stage2", stage2=False, description="Stage I only"),
        Variant("w/o-l-con", stage1_overrides={"lam_con": 0.0}, description="no contrastive term"),
        Variant("w/o-stage1", stage1=False, description="recomposition only"),
        Variant(
            "w/o-l-rec",
            stage1_overrides={"lam_rec": 0.0, "lam_cross": 0.0},
            description="no reconstruction terms in Stage I",
        ),
        Variant(
            "full-alignment",
            stage1_overrides={"mask_mode": "full"},
            description="all-ones masks instead of asymmetric ones",
        ),
        Variant(
            "frozen-backbone",
            stage1=False,
            stage2=False,
            description="untrained modality models feeding the backbone",
        ),
    )
}

# Expected: each entry beats the next one by at least ``min_gap`` points.
ORDERED_CHAIN = ("full", "w/o-stage2", "w/o-l-con", "w/o-stage1")
COLLAPSE_VARIANT = "w/o-l-rec"
CORE_VARIANTS = ORDERED_CHAIN + (COLLAPSE_VARIANT,)

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

ScoreFn = Callable[[Variant, int], Mapping[str, float]]


@dataclass
class AblationReport:
    variants: list[str]
    seeds: list[int]
    scores: dict[str, list[Optional[float]]]
    chance: float
    failed: dict[str, list[int]]
    verdict: str
    checks: list[dict]
    partial: bool

    def mean(self, variant: str) -> Optional[float]:
        values = [s for s in self.scores[variant] if s is not None]
        return float(np.mean(values)) if values else None

    def to_dict(self) -> dict:
        return {
            "variants": self.variants,
            "seeds": self.seeds,
            "scores": self.scores,
            "means": {v: self.mean(v) for v in self.variants},
            "chance": self.chance,
            "failed": self.failed,
            "verdict": self.verdict,
            "checks": self.checks,
            "partial": self.partial,
        }

    def frame(self) -> pd.DataFrame:
        rows = [
            {"variant": v, "seed": seed, "score": score, "failed": score is None}
            for v in self.variants
            for seed, score in zip(self.seeds, self.scores[v])
        ]
        return pd.DataFrame(rows, columns=["variant", "seed", "score", "failed"])


def ordering_verdict(
    means: Mapping[str, Optional[float]],
    chance: float,
    min_gap: float = 2.0,
    chance_band: float = 5.0,
) -> tuple[str, list[dict]]:
    """Check ``full > w/o-stage2 > w/o-l-con > w/o-stage1`` with gaps of at
    least ``min_gap`` points, and ``w/o-l-rec`` within ``chance_band`` of chance.

    Variants without a score are skipped. If every scored variant of the
    chain ties, nothing can be said and the verdict is inconclusive.
    """

    chain = [v for v in ORDERED_CHAIN if means.get(v) is not None]
    scored = [means[v] for v in chain]
    if len(scored) < 2 or max(scored) - min(scored) == 0:
        return INCONCLUSIVE, []

    checks = []
    for upper, lower in zip(chain, chain[1:]):
        gap = means[upper] - means[lower]
        checks.append(
            {"check": f"{upper} >= {lower} + {min_gap}", "value": gap, "ok": gap >= min_gap}
        )

    if means.get(COLLAPSE_VARIANT) is not None:
        dist = abs(means[COLLAPSE_VARIANT] - chance)
        checks.append(
            {
                "check": f"|{COLLAPSE_VARIANT} - chance| <= {chance_band}",
                "value": dist,
                "ok": dist <= chance_band,
            }
        )

    return (HOLDS if all(c["ok"] for c in checks) else VIOLATED), checks


def run_ablation(
    score_variant: ScoreFn,
    seeds: Sequence[int],
    variants: Iterable[str] = CORE_VARIANTS,
    min_gap: float = 2.0,
    chance_band: float = 5.0,
) -> AblationReport:
    """Score every variant under every seed.

    ``score_variant(variant, seed)`` returns ``{"score": ..., "chance": ...}``.
    A variant whose training diverges is recorded as failed for that seed and
    left out of the ordering check.
    """

    names = list(variants)
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise KeyError(f"unknown ablation variants {unknown}, expected {list(VARIANTS)}")

    scores: dict[str, list[Optional[float]]] = {v: [] for v in names}
    failed: dict[str, list[int]] = {}
    chances = []

    for seed in seeds:
        for name in names:
            try:
                result = score_variant(VARIANTS[name], seed)
            except (NonFiniteLossError, NumericOverflowError) as e:
                logger.warning(f"Variant {name} diverged at seed {seed}: {e}")
                scores[name].append(None)
                failed.setdefault(name, []).append(seed)
                continue

            score = float(result["score"])
            if not math.isfinite(score):
                scores[name].append(None)
                failed.setdefault(name, []).append(seed)
                continue

            scores[name].append(score)
            chances.append(float(result.get("chance", 0.0)))
            logger.info(f"Variant {name}, seed {seed}: {score:.2f}")

    chance = float(np.mean(chances)) if chances else 0.0
    report = AblationReport(
        variants=names,
        seeds=list(seeds),
        scores=scores,
        chance=chance,
        failed=failed,
        verdict=INCONCLUSIVE,
        checks=[],
        partial=bool(failed),
    )
    report.verdict, report.checks = ordering_verdict(
        {v: report.mean(v) for v in names}, chance, min_gap, chance_band
    )
    logger.info(f"Ablation ordering: {report.verdict}")
    return report


def sensitivity_grid(
    lams: Sequence[float] = (0.1, 0.3, 0.5),
    mask_k_shifts: Sequence[int] = (-1, 0, 1),
) -> list[dict]:
    """One-at-a-time settings around the defaults: λ first, then mask size."""

    grid = [{"lam": float(lam)} for lam in lams]
    grid += [{"mask_mode": "misspecified", "mask_k_shift": int(k)} for k in mask_k_shifts]
    return grid


def run_sensitivity(
    score_settings: Callable[[Mapping[str, object], int], Mapping[str, float]],
    seeds: Sequence[int],
    grid: Optional[Sequence[Mapping[str, object]]] = None,
) -> pd.DataFrame:
    rows = []
    for settings in grid if grid is not None else sensitivity_grid():
        for seed in seeds:
            result = score_settings(settings, seed)
            rows.append(
                {
                    "setting": ",".join(f"{k}={v}" for k, v in sorted(settings.items())),
                    "seed": seed,
                    "score": float(result["score"]),
                    "chance": float(result.get("chance", 0.0)),
                }
            )
    return pd.DataFrame(rows, columns=["setting", "seed", "score", "chance"])
