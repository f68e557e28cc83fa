import numpy as np
from loguru import logger

from pairlat.audit.jacobian import neighbor_jacobians
from pairlat.audit.rank import DEFICIENT, IDENTIFIABLE, lemma1_audit, named_nullspace
from pairlat.audit.sparsity import SparsityReport, dedup_sparsity, scm_jacobian_field
from pairlat.world.generator import GroundTruthGenerator


def edge_coverage_holds(report: SparsityReport) -> bool:
    """Every supported cross-modality block lies on an observed edge."""

    return not report.off_edge_support and report.edge_total == report.total


def audit_modality(
    gen: GroundTruthGenerator,
    m: int,
    points: np.ndarray,
    fd_step: float = 1e-4,
    rank_tol: float = 1e-8,
    propagate: bool = True,
) -> dict:
    """Collective-rank audit of modality ``m`` at every probe point.

    The modality is identifiable only if the Gram matrix is positive definite
    at every point; the reported null space comes from the worst point.
    """

    factor_names = [f"c{r}" for r in gen.latent.pi(m)]
    neighbors = gen.graph.neighbors(m)
    if not neighbors:
        return {
            "verdict": DEFICIENT,
            "neighbors": [],
            "note": "modality has no observed neighbours",
            "nullspace": [{name: 1.0} for name in factor_names],
        }
    if not factor_names:
        return {
            "verdict": IDENTIFIABLE,
            "neighbors": list(neighbors),
            "note": "modality has no shared block",
            "nullspace": [],
        }

    reports = [
        lemma1_audit(neighbor_jacobians(gen, m, point, fd_step, propagate), rank_tol)
        for point in points
    ]
    ratios = [r.eig_min / r.eig_max if r.eig_max > 0 else 0.0 for r in reports]
    worst = reports[int(np.argmin(ratios))]

    verdict = IDENTIFIABLE if all(r.identifiable for r in reports) else DEFICIENT
    return {
        "verdict": verdict,
        "criteria_agree": all(r.agree for r in reports),
        "neighbors": list(neighbors),
        "factors": factor_names,
        "n_points": len(reports),
        "min_eig_ratio": float(min(ratios)),
        "worst_point": worst.to_dict(),
        "nullspace": named_nullspace(worst, factor_names),
        "max_left_inverse_residual": float(
            max(r.residual for r in reports if r.identifiable)
        )
        if verdict == IDENTIFIABLE
        else None,
    }


def audit_world(
    gen: GroundTruthGenerator,
    seed: int,
    n_points: int = 4,
    fd_step: float = 1e-4,
    rank_tol: float = 1e-8,
    tau0: float = 1e-6,
    n_probe: int = 64,
    propagate: bool = True,
) -> dict:
    """All ground-truth audits of one world, as a JSON-ready mapping."""

    probes = gen.sample_latents(max(n_points, n_probe), seed)

    modalities = {}
    for m in gen.graph.modalities:
        modalities[str(m)] = audit_modality(
            gen, m, probes[:n_points], fd_step, rank_tol, propagate
        )
        logger.info(f"Collective-rank audit, modality {m}: {modalities[str(m)]['verdict']}")

    field_ = scm_jacobian_field(gen.scm, probes[:n_probe])
    sparsity = dedup_sparsity(field_, gen.latent, tau0=tau0, n_probe=n_probe)
    logger.info(
        f"De-duplicated sparsity: ||G||_0 = {sparsity.total}, "
        f"||G||_0,E = {sparsity.edge_total}"
    )

    return {
        "collective_rank": modalities,
        "sparsity": sparsity.to_dict(),
        "edge_coverage": edge_coverage_holds(sparsity),
        "settings": {
            "n_points": n_points,
            "fd_step": fd_step,
            "rank_tol": rank_tol,
            "tau0": tau0,
            "n_probe": n_probe,
            "propagate": propagate,
        },
        "generator_fingerprint": gen.fingerprint,
    }
