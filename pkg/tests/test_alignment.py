import pytest
import torch

from pairlat.callbacks import GradNormMonitor, LossTraceWriter
from pairlat.errors import ContractError, SpecificationError
from pairlat.models.alignment import (
    AlignmentMask,
    PerceptronArgs,
    Stage1Config,
    build_edge_masks,
    build_mask,
    build_models,
    contrastive_loss,
    cross_reconstruction,
    encode,
    masked_similarity,
    model_key,
    recon_loss,
    stage1_terms,
    symmetric_info_nce,
)
from pairlat.train import train_stage1
from pairlat.world.generator import sample_pair_dataset


def _randn(*shape, seed=0):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_oracle_masks_follow_overlap(fig2):
    spec = fig2.latent

    to_target = build_mask(spec, 2, 3)
    assert to_target.values == (0, 1)
    assert to_target.slots == (0,)
    assert to_target.target_dim == 2

    back = build_mask(spec, 3, 2)
    assert back.values == (1, 0)
    assert back.slots == (1,)

    assert build_mask(spec, 1, 2).is_empty
    assert build_mask(spec, 2, 1).is_empty


def test_full_and_misspecified_masks(fig2):
    spec = fig2.latent

    full = build_mask(spec, 2, 3, mode="full")
    assert full.values == (1, 1)
    assert full.slots == (1, 0)
    assert not full.is_identity

    assert build_mask(spec, 2, 3, mode="misspecified", k_shift=1).values == (1, 1)
    assert build_mask(spec, 2, 3, mode="misspecified", k_shift=-1).is_empty
    assert build_mask(spec, 2, 3, mode="misspecified", k_shift=0) == build_mask(spec, 2, 3)

    # A one-factor source can only fill one target slot
    assert build_mask(spec, 1, 2, mode="full").k == 1


def test_random_masks_are_keyed(fig2):
    spec = fig2.latent
    a = build_mask(spec, 2, 3, mode="random", seed=5)
    assert a == build_mask(spec, 2, 3, mode="random", seed=5)
    assert a.k == 1

    with pytest.raises(SpecificationError):
        build_mask(spec, 2, 3, mode="random", k=3)
    with pytest.raises(SpecificationError):
        build_mask(spec, 2, 3, mode="sideways")


def test_edge_masks_cover_both_directions(fig2):
    masks = build_edge_masks(fig2.latent, fig2.graph.edges)
    assert sorted(masks) == [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)]
    for (source, target), mask in masks.items():
        assert (mask.source, mask.target) == (source, target)


def test_reconcile_matches_selection():
    mask = AlignmentMask.from_values(2, 3, [1, 0, 1], target_dim=2, slots=[1, 0])
    z = _randn(5, 3)

    out = mask.reconcile(z)
    torch.testing.assert_close(out, z @ mask.selection().T)
    assert torch.equal(out[:, 1], z[:, 0])
    assert torch.equal(out[:, 0], z[:, 2])

    with pytest.raises(ContractError):
        mask.reconcile(_randn(5, 2))


def test_identity_and_empty_masks():
    z = _randn(4, 2)
    identity = AlignmentMask.from_values(1, 2, [1, 1])
    assert identity.is_identity
    assert identity.reconcile(z) is z

    empty = AlignmentMask.from_values(1, 2, [0, 0])
    assert empty.is_empty
    assert torch.equal(empty.reconcile(z), torch.zeros(4, 2, dtype=torch.float64))


def test_mask_validation():
    with pytest.raises(ContractError):
        AlignmentMask(1, 2, (1, 2), (0, 1), 2)
    with pytest.raises(ContractError):
        AlignmentMask(1, 2, (1, 1), (0, 0), 2)
    with pytest.raises(ContractError):
        AlignmentMask(1, 2, (1, 0), (3,), 2)


def test_info_nce_is_symmetric():
    s = torch.tanh(_randn(6, 6))
    torch.testing.assert_close(symmetric_info_nce(s, 0.1), symmetric_info_nce(s.T, 0.1))

    aligned = symmetric_info_nce(torch.eye(6, dtype=torch.float64), 0.1)
    shuffled = symmetric_info_nce(torch.eye(6, dtype=torch.float64).flip(0), 0.1)
    assert aligned < shuffled

    with pytest.raises(ContractError):
        symmetric_info_nce(torch.ones(1, 1, dtype=torch.float64), 0.1)


def test_masked_similarity_reads_target_coordinates():
    z_i = _randn(5, 2)
    identity = AlignmentMask.from_values(1, 2, [1, 1])
    torch.testing.assert_close(
        masked_similarity(z_i, z_i, identity), torch.ones(5, dtype=torch.float64)
    )

    swap = AlignmentMask.from_values(1, 2, [1, 1], slots=[1, 0])
    torch.testing.assert_close(
        masked_similarity(z_i, z_i.flip(-1), swap), torch.ones(5, dtype=torch.float64)
    )


def test_cross_reconstruction_decodes_the_masked_code(fig2):
    models = build_models(fig2.latent, seed=0)
    mask = build_mask(fig2.latent, 2, 3)
    z_c_2 = _randn(6, 2)
    x_3 = _randn(6, 3, seed=1)

    decoder = models[model_key(3)].decoder
    code = torch.zeros(6, 2, dtype=torch.float64)
    code[:, 0] = z_c_2[:, 1]
    padded = torch.cat([code, torch.zeros(6, 1, dtype=torch.float64)], dim=-1)
    expected = recon_loss(decoder(padded), x_3)
    torch.testing.assert_close(cross_reconstruction(decoder, z_c_2, mask, x_3), expected)


def test_contrastive_loss_contract():
    mask = AlignmentMask.from_values(1, 2, [1, 1])
    with pytest.raises(ContractError):
        contrastive_loss(_randn(4, 2), _randn(4, 2, seed=1), mask, tau=0.0)
    with pytest.raises(ContractError):
        contrastive_loss(_randn(4, 2), _randn(3, 2, seed=1), mask)


def test_recon_loss_is_zero_only_at_target():
    x = _randn(8, 3)
    assert recon_loss(x, x, lam=0.0) == 0
    assert recon_loss(x, x, lam=0.1).item() == pytest.approx(-0.1)
    assert recon_loss(x + 1, x, lam=0.1) > recon_loss(x, x, lam=0.1)
    with pytest.raises(ContractError):
        recon_loss(x[:, :2], x)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"tau": 0.0},
        {"lam": -0.1},
        {"lam_con": 1.0, "batch_size": 1},
        {"epochs": -1},
        {"mask_mode": "sideways"},
    ],
)
def test_stage1_config_validation(kwargs):
    with pytest.raises(ContractError):
        Stage1Config(**kwargs)


def test_models_split_codes(fig2):
    models = build_models(fig2.latent, seed=0)
    assert sorted(models) == ["m1", "m2", "m3"]

    z_c, z_s = encode(models[model_key(2)].encoder, _randn(7, 3))
    assert z_c.shape == (7, 2)
    assert z_s.shape == (7, 1)

    with pytest.raises(ContractError):
        encode(models[model_key(2)].encoder, _randn(7, 2))
    with pytest.raises(SpecificationError):
        PerceptronArgs(n_layers=0)


def _batch(fig2, edge, n=16):
    data = sample_pair_dataset(fig2, edge, n, seed=0)
    return torch.from_numpy(data.x_i), torch.from_numpy(data.x_j)


@pytest.mark.parametrize("edge", [(1, 2), (2, 3)])
def test_stage1_terms_swap_symmetry(fig2, edge):
    models = build_models(fig2.latent, seed=0)
    masks = build_edge_masks(fig2.latent, fig2.graph.edges)
    config = Stage1Config(batch_size=16)
    i, j = edge
    x_i, x_j = _batch(fig2, edge)

    forward = stage1_terms(models, masks, i, j, x_i, x_j, config)
    swapped = stage1_terms(models, masks, j, i, x_j, x_i, config)

    assert torch.equal(forward["total"], swapped["total"])
    assert torch.equal(forward["L_rec_i"], swapped["L_rec_j"])


def test_empty_masks_drop_alignment_terms(fig2):
    models = build_models(fig2.latent, seed=0)
    masks = build_edge_masks(fig2.latent, fig2.graph.edges)
    x_1, x_2 = _batch(fig2, (1, 2))

    terms = stage1_terms(models, masks, 1, 2, x_1, x_2, Stage1Config())
    assert terms["L_con"] == 0
    assert terms["L_cross"] == 0
    torch.testing.assert_close(terms["total"], terms["L_rec_i"] + terms["L_rec_j"])


def test_stage1_training_moves_parameters(fig2):
    views = [
        sample_pair_dataset(fig2, edge, 64, seed=0).training_view() for edge in fig2.graph.edges
    ]
    models = build_models(fig2.latent, seed=0, encoder_args=PerceptronArgs(hidden=8))
    before = {k: v.clone() for k, v in models.state_dict().items()}
    config = Stage1Config(lr=1e-3, batch_size=16, epochs=1)
    trace = LossTraceWriter()

    module = train_stage1(
        models,
        views,
        build_edge_masks(fig2.latent, fig2.graph.edges),
        config,
        callbacks=[trace, GradNormMonitor(sub_module="m2")],
    )

    frame = trace.frame()
    assert len(frame) == 12
    assert set(frame["edge"]) == {"1-2", "1-3", "2-3"}
    assert all(torch.isfinite(torch.tensor(frame["total"].to_numpy())))
    assert module.last_terms is not None
    assert "train/m2/grad_norm" in module.trainer.callback_metrics
    assert any(not torch.equal(before[k], v) for k, v in models.state_dict().items())


def test_zero_epochs_leave_models_untouched(fig2):
    views = [sample_pair_dataset(fig2, (1, 2), 32, seed=0).training_view()]
    models = build_models(fig2.latent, seed=0)
    before = {k: v.clone() for k, v in models.state_dict().items()}

    train_stage1(
        models,
        views,
        build_edge_masks(fig2.latent, fig2.graph.edges),
        Stage1Config(epochs=0),
    )
    for k, v in models.state_dict().items():
        assert torch.equal(before[k], v)
