import json

import numpy as np
import pytest
import torch

from pairlat.errors import ContractError, NonFiniteLossError
from pairlat.evaluation import (
    CORE_VARIANTS,
    block_r2,
    emit_report,
    leakage_r2,
    map_sparsity_report,
    mcc,
    ordering_verdict,
    run_ablation,
    run_sensitivity,
    sensitivity_grid,
)


def test_block_r2_of_identity(rng):
    z = rng.normal(size=(400, 2))
    fit = block_r2(z, z, seed=0)
    assert fit.r2 == pytest.approx(1.0)
    assert (fit.n_fit, fit.n_score) == (200, 200)
    assert fit.fit == "affine"


def test_block_r2_of_invertible_linear_map(rng):
    z = rng.normal(size=(400, 3))
    a = np.array([[2.0, 0.5, 0.0], [0.0, -1.0, 0.3], [1.0, 0.0, 1.0]])
    assert block_r2(z @ a.T + 4.0, z, seed=1).r2 == pytest.approx(1.0, abs=1e-10)


def test_block_r2_of_independent_noise(rng):
    fit = block_r2(rng.normal(size=(10000, 2)), rng.normal(size=(10000, 2)), seed=0)
    assert fit.r2 <= 0.02


def test_block_r2_contract(rng):
    with pytest.raises(ContractError):
        block_r2(rng.normal(size=(15, 2)), rng.normal(size=(15, 2)))
    with pytest.raises(ContractError):
        block_r2(rng.normal(size=(50, 2)), rng.normal(size=(40, 2)))

    empty = block_r2(np.zeros((40, 0)), rng.normal(size=(40, 2)))
    assert empty.r2 == 0.0
    assert empty.note == "no predictors"


def test_block_r2_ridge_fallback(rng):
    z = rng.normal(size=(200, 1))
    fit = block_r2(np.hstack([z, z]), z, seed=0)
    assert fit.ridge_fallback
    assert fit.r2 == pytest.approx(1.0, abs=1e-6)


def test_leakage_r2(rng):
    z = rng.normal(size=(300, 2))
    assert leakage_r2(z.copy(), z) == pytest.approx(1.0)
    assert leakage_r2(np.zeros((300, 0)), z) == 0.0


def test_mcc_ignores_permutation_sign_and_monotone_maps(rng):
    z = rng.normal(size=(500, 3))
    estimates = np.column_stack([-z[:, 2], np.exp(z[:, 0]), z[:, 1] ** 3])

    report = mcc(estimates, z)
    assert report.mcc == pytest.approx(1.0)
    assert sorted(report.pairs) == [(0, 2), (1, 0), (2, 1)]


def test_mcc_of_rotation_is_partial(rng):
    z = rng.normal(size=(5000, 2))
    c = np.sqrt(0.5)
    rotated = z @ np.array([[c, -c], [c, c]]).T

    assert 0.6 < mcc(rotated, z).mcc < 0.8


def test_mcc_excludes_constant_columns(rng):
    z = rng.normal(size=(100, 2))
    estimates = np.column_stack([z[:, 0], np.full(100, 3.0)])

    report = mcc(estimates, z)
    assert report.excluded_estimates == [1]
    assert report.mcc == pytest.approx(1.0)
    assert "constant" in report.note

    with pytest.raises(ContractError):
        mcc(z, z[:50])


def test_map_sparsity_report():
    perm = np.array([[0.0, -2.0], [0.5, 0.0]])
    report = map_sparsity_report(perm)
    assert report["in_class"]
    assert report["support"] == 2

    c = np.sqrt(0.5)
    assert not map_sparsity_report(np.array([[c, -c], [c, c]]))["in_class"]

    nearly = np.eye(3) + 1e-9
    assert map_sparsity_report(nearly, tau0=1e-6)["in_class"]
    assert not map_sparsity_report(nearly, tau0=1e-12)["in_class"]


def test_map_sparsity_respects_blocks():
    swap = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert map_sparsity_report(swap, blocks=[0, 0, 1])["in_class"]
    assert not map_sparsity_report(swap, blocks=[0, 1, 1])["in_class"]


def test_map_sparsity_of_callable_fit(rng):
    points = rng.normal(size=(4, 2))
    report = map_sparsity_report(lambda p: torch.tanh(p.flip(-1)), points=points)
    assert report["in_class"]
    assert report["n_probe"] == 4

    with pytest.raises(ContractError):
        map_sparsity_report(lambda p: p)


CHAIN_MEANS = {"full": 90.0, "w/o-stage2": 85.0, "w/o-l-con": 80.0, "w/o-stage1": 70.0}


def test_ordering_holds():
    verdict, checks = ordering_verdict({**CHAIN_MEANS, "w/o-l-rec": 52.0}, chance=50.0)
    assert verdict == "holds"
    assert len(checks) == 4


def test_ordering_violated():
    means = {**CHAIN_MEANS, "w/o-l-con": 84.0}
    assert ordering_verdict(means, chance=50.0)[0] == "violated"

    collapsed = {**CHAIN_MEANS, "w/o-l-rec": 75.0}
    assert ordering_verdict(collapsed, chance=50.0)[0] == "violated"


def test_ordering_of_ties_is_inconclusive():
    tied = {v: 60.0 for v in CHAIN_MEANS}
    assert ordering_verdict(tied, chance=50.0) == ("inconclusive", [])


def _scorer(table, diverge=()):
    def score(variant, seed):
        if variant.name in diverge:
            raise NonFiniteLossError(3, "L_con")
        return {"score": table[variant.name] + seed * 0.1, "chance": 50.0}

    return score


def test_run_ablation_holds():
    report = run_ablation(_scorer({**CHAIN_MEANS, "w/o-l-rec": 51.0}), seeds=[0, 1])

    assert report.variants == list(CORE_VARIANTS)
    assert report.verdict == "holds"
    assert not report.partial
    assert report.mean("full") == pytest.approx(90.05)
    assert len(report.frame()) == 10


def test_run_ablation_records_divergence():
    report = run_ablation(
        _scorer({**CHAIN_MEANS, "w/o-l-rec": 51.0}, diverge={"w/o-l-con"}), seeds=[0, 1]
    )

    assert report.partial
    assert report.failed == {"w/o-l-con": [0, 1]}
    assert report.scores["w/o-l-con"] == [None, None]
    assert report.verdict == "holds"
    assert report.frame()["failed"].sum() == 2


def test_run_ablation_unknown_variant():
    with pytest.raises(KeyError):
        run_ablation(_scorer(CHAIN_MEANS), seeds=[0], variants=["full", "w/o-everything"])


def test_sensitivity_grid():
    grid = sensitivity_grid()
    assert len(grid) == 6
    assert grid[0] == {"lam": 0.1}
    assert grid[-1] == {"mask_mode": "misspecified", "mask_k_shift": 1}

    frame = run_sensitivity(lambda settings, seed: {"score": 1.0}, seeds=[0, 1], grid=grid[:2])
    assert list(frame.columns) == ["setting", "seed", "score", "chance"]
    assert len(frame) == 4
    assert frame["setting"].iloc[0] == "lam=0.1"


def test_report_lists_every_gap(tmp_path):
    report = emit_report({}, tmp_path, fingerprint="abc", seed=0)

    phases = ["gen", "audit", "train-stage1", "train-stage2", "eval", "ablate", "sweep"]
    assert report["gaps"] == phases
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["gaps"] == report["gaps"]
    assert on_disk["config_fingerprint"] == "abc"


def test_report_is_reproducible(tmp_path):
    artifacts = {
        "ablate": run_ablation(_scorer({**CHAIN_MEANS, "w/o-l-rec": 51.0}), seeds=[0]).to_dict()
    }

    emit_report(artifacts, tmp_path / "a", fingerprint="f", seed=1)
    emit_report(artifacts, tmp_path / "b", fingerprint="f", seed=1)

    for name in ("report.json", "ablation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "ablate" not in json.loads((tmp_path / "a" / "report.json").read_text())["gaps"]
