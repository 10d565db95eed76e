"""Deterministic stream derivation for seeded Monte Carlo runs.

Splitting rule
--------------
All randomness in the package flows through `np.random.Generator(PCG64DXSM)`
instances keyed by a `SeedSequence` whose spawn key encodes the consumer:

    stream(master_seed, label, index)
        -> PCG64DXSM(SeedSequence(master_seed, spawn_key=(crc32(label), index)))

`label` is a short ASCII purpose tag (experiment name, "layers", "iota", ...)
hashed with crc32 so that distinct purposes never collide on the same
counter. `index` is the replica-chunk number.

Replicated work is split into fixed-size chunks; chunk `i` of a run always
draws from `stream(seed, label, i)` regardless of how chunks are scheduled,
so results are independent of thread count and of whether chunks run at all
in parallel.  Within a chunk, replica `j` consumes column `j` of each batched
draw; batched draws happen in a documented fixed order (for the walk
decomposition: layer k_max down to layer 0).
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for chunk `index` of the purpose `label` under `master_seed`."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(_label_key(label), index))
    return np.random.Generator(np.random.PCG64DXSM(ss))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Split `total` replicas into fixed chunks (last one may be short)."""
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])
