"""Keyed random sources.

Every random draw in pairlat is addressed by ``(seed, tag, *index)``. The key
is hashed into a Philox key, so adding draws under one tag never shifts the
stream seen by another tag.
"""

import hashlib

import numpy as np
import torch


def derive_key(seed: int, tag: str, *index: int) -> int:
    payload = ":".join([str(int(seed)), tag, *(str(int(i)) for i in index)])
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, tag: str, *index: int) -> int:
    """63-bit seed for APIs that only accept a plain integer."""

    return derive_key(seed, tag, *index) & ((1 << 63) - 1)


def numpy_rng(seed: int, tag: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, tag, *index)))


def torch_generator(seed: int, tag: str, *index: int) -> torch.Generator:
    generator = torch.Generator(device="cpu")
    generator.manual_seed(derive_seed(seed, tag, *index))
    return generator
