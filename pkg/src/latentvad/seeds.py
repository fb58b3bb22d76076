"""Counter-based seed derivation.

All randomness in the pipeline flows from one root seed.  Every consumer
derives its own stream via a path of labels, e.g. ``("video", 7)`` or
``("train", "joint", epoch, step)``, so streams are independent and any
sub-computation can be reproduced in isolation.
"""

from __future__ import annotations

import zlib

import numpy as np

_PathItem = "int | str"


def _key(item) -> int:
    if isinstance(item, (int, np.integer)):
        return int(item) & 0xFFFFFFFF
    if isinstance(item, str):
        return zlib.crc32(item.encode("utf-8"))
    raise TypeError(f"seed path items must be int or str, got {type(item)!r}")


def seed_sequence(root: int, *path) -> np.random.SeedSequence:
    """Derive a SeedSequence for ``path`` under the root seed."""
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(p) for p in path))


def generator(root: int, *path) -> np.random.Generator:
    """NumPy generator for ``path`` under the root seed."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root, *path)))


def torch_seed(root: int, *path) -> int:
    """A 63-bit integer seed for torch generators, derived like `generator`."""
    state = seed_sequence(root, *path).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1] >> 1)
