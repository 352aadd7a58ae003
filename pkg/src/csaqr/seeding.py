"""Splittable seeding.

All randomness in the package flows from one master seed.  Child streams are
derived as ``SeedSequence((master, *path))`` where ``path`` is a tuple of
small nonnegative integers identifying the consumer (subset size, replication
index, method tag, ...).  The rule is order-sensitive and collision-free for
distinct paths, so results never depend on evaluation order or thread count.
"""

from __future__ import annotations

import numpy as np

# path tags used across the package
PLAN_TAG = 0x706C616E  # "plan"
FOLD_TAG = 0x666F6C64  # "fold"
BOOT_TAG = 0x626F6F74  # "boot"
DATA_TAG = 0x64617461  # "data"
METHOD_TAG = 0x6D657468  # "meth"


def child_seed(master: int, *path: int) -> int:
    """128-bit integer seed for the stream identified by (master, *path)."""
    ss = np.random.SeedSequence((int(master),) + tuple(int(t) for t in path))
    state = ss.generate_state(4, np.uint32)
    return int.from_bytes(state.tobytes(), "little")


def child_rng(master: int, *path: int) -> np.random.Generator:
    """PCG64 generator for the stream identified by (master, *path)."""
    ss = np.random.SeedSequence((int(master),) + tuple(int(t) for t in path))
    return np.random.Generator(np.random.PCG64(ss))
