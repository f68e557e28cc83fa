import json

import numpy as np
import pytest
import torch

from pairlat.datasets.io import MANIFEST, dataset_roundtrip, load_dataset, save_dataset
from pairlat.datasets.pair import PairDataset, PairView
from pairlat.datasets.round_robin import EpochStepSampler, PairDataModule, RoundRobinPairs
from pairlat.errors import ContractError, FormatError
from pairlat.world.generator import sample_pair_dataset


@pytest.fixture
def dataset(fig2):
    return sample_pair_dataset(fig2, (1, 3), 50, seed=0)


def test_save_load_is_bit_exact(dataset, tmp_path):
    loaded = dataset_roundtrip(tmp_path / "edge_1_3", dataset)

    assert loaded.edge == (1, 3)
    assert loaded.fingerprint == dataset.fingerprint
    assert loaded.x_i.tobytes() == dataset.x_i.tobytes()
    assert loaded.x_j.tobytes() == dataset.x_j.tobytes()
    assert loaded.evaluation_latents().tobytes() == dataset.evaluation_latents().tobytes()


def test_save_without_latents(dataset, tmp_path):
    bare = PairDataset(dataset.edge, dataset.x_i, dataset.x_j)
    loaded = load_dataset(save_dataset(bare, tmp_path / "bare"))

    assert not loaded.has_latents
    with pytest.raises(ContractError):
        loaded.evaluation_latents()


def _rewrite_manifest(path, **changes):
    manifest = json.loads((path / MANIFEST).read_text())
    for key, value in changes.items():
        if value is None:
            manifest.pop(key)
        else:
            manifest[key] = value
    (path / MANIFEST).write_text(json.dumps(manifest))


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"dtype": "f64-be"}, "dtype"),
        ({"schema_version": 99}, "schema_version"),
        ({"generator_fingerprint": None}, "generator_fingerprint"),
        ({"edge": [3, 1]}, "edge"),
        ({"files": {"1": "x1.bin", "2": "x2.bin"}}, "files"),
        ({"row_major": False}, "row_major"),
    ],
)
def test_manifest_errors(dataset, tmp_path, changes, field):
    path = save_dataset(dataset, tmp_path / "edge")
    _rewrite_manifest(path, **changes)

    with pytest.raises(FormatError) as info:
        load_dataset(path)
    assert info.value.field == field


def test_truncated_matrix(dataset, tmp_path):
    path = save_dataset(dataset, tmp_path / "edge")
    data = (path / "x3.bin").read_bytes()
    (path / "x3.bin").write_bytes(data[:-8])

    with pytest.raises(FormatError, match="shape mismatch"):
        load_dataset(path)


def test_missing_and_malformed_manifest(dataset, tmp_path):
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "nothing")

    path = save_dataset(dataset, tmp_path / "edge")
    (path / MANIFEST).write_text("{not json")
    with pytest.raises(FormatError, match="malformed"):
        load_dataset(path)


def test_split_partitions_rows(dataset):
    parts = dataset.split_indices(seed=4)
    sizes = {name: len(rows) for name, rows in parts.items()}
    assert sizes == {"train": 40, "fit": 5, "score": 5}

    everything = np.concatenate(list(parts.values()))
    assert sorted(everything.tolist()) == list(range(50))

    again = dataset.split_indices(seed=4)
    for name in parts:
        np.testing.assert_array_equal(parts[name], again[name])


def test_training_view_hides_latents(dataset):
    view = dataset.training_view()
    assert isinstance(view, PairView)
    assert not hasattr(view, "latents")
    assert view.modality(1) is dataset.x_i
    with pytest.raises(ContractError):
        view.modality(2)


def test_pair_dataset_validation(dataset):
    with pytest.raises(ContractError):
        PairDataset((3, 1), dataset.x_i, dataset.x_j)
    with pytest.raises(ContractError):
        PairDataset((1, 3), dataset.x_i, dataset.x_j[:10])


def _views(sizes):
    rng = np.random.default_rng(0)
    edges = [(1, 2), (1, 3), (2, 3)]
    return [
        PairView(edge, rng.normal(size=(n, 2)), rng.normal(size=(n, 3)))
        for edge, n in zip(edges, sizes)
    ]


def test_round_robin_touches_every_edge_once_per_cycle():
    pairs = RoundRobinPairs(_views([40, 12, 25]), batch_size=4, seed=0)

    assert pairs.cycles == 10
    assert len(pairs) == 30
    schedule = [pairs.edge_at(s) for s in range(len(pairs))]
    for start in range(0, len(schedule), 3):
        assert sorted(schedule[start : start + 3]) == [(1, 2), (1, 3), (2, 3)]

    for step in range(len(pairs)):
        batch = pairs[step]
        assert tuple(batch["edge"].tolist()) == schedule[step]
        assert batch["x_i"].shape == (4, 2)
        assert batch["x_j"].shape == (4, 3)


def test_round_robin_batches_are_keyed():
    views = _views([20, 20, 20])
    a = RoundRobinPairs(views, batch_size=5, seed=1)
    b = RoundRobinPairs(list(reversed(views)), batch_size=5, seed=1)

    for step in (0, 4, 13):
        assert torch.equal(a[step]["x_i"], b[step]["x_i"])

    # Next epoch draws a different permutation of the same edge
    assert not torch.equal(a[0]["x_i"], a[len(a)]["x_i"])


def test_round_robin_validation():
    with pytest.raises(ContractError):
        RoundRobinPairs(_views([10, 10, 10]), batch_size=0, seed=0)
    with pytest.raises(ContractError):
        RoundRobinPairs(_views([10, 0, 10]), batch_size=2, seed=0)


def test_epoch_sampler_offsets_steps():
    sampler = EpochStepSampler(6)
    assert list(sampler) == list(range(6))
    sampler.set_epoch(2)
    assert list(sampler) == list(range(12, 18))


def test_datamodule_loader_yields_whole_batches():
    datamodule = PairDataModule(_views([16, 16, 16]), batch_size=8, seed=0)
    batches = list(datamodule.train_dataloader())

    assert len(batches) == 6
    assert [tuple(b["edge"].tolist()) for b in batches[:3]] == [(1, 2), (1, 3), (2, 3)]
