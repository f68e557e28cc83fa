from .io import dataset_roundtrip, load_dataset, save_dataset
from .pair import PairDataset, PairView
from .round_robin import EpochStepSampler, PairDataModule, RoundRobinPairs

__all__ = [
    "EpochStepSampler",
    "PairDataModule",
    "PairDataset",
    "PairView",
    "RoundRobinPairs",
    "dataset_roundtrip",
    "load_dataset",
    "save_dataset",
]
