from .file import run_lock
from .instantiators import instantiate_callbacks
from .logger import setup_logger
from .rich_utils import print_config_tree, print_table
from .seeding import derive_key, derive_seed, numpy_rng, torch_generator
from .utils import (
    atomic_write_text,
    dump_json,
    phase_wrapper,
    tensor_content_hash,
    to_jsonable,
)

__all__ = [
    "atomic_write_text",
    "derive_key",
    "derive_seed",
    "dump_json",
    "instantiate_callbacks",
    "numpy_rng",
    "phase_wrapper",
    "print_config_tree",
    "print_table",
    "run_lock",
    "setup_logger",
    "tensor_content_hash",
    "to_jsonable",
    "torch_generator",
]
