"""Seeded random streams.

Every stream is identified by ``(master_seed, run, purpose, agent)`` and is
derived through :class:`numpy.random.SeedSequence`, so distinct labels give
independent generators and identical labels give identical draws.
"""

from __future__ import annotations

import zlib

import numpy as np

PURPOSES = ("bs-decision", "bs-projection", "noise", "init")


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(master_seed: int, run: int, purpose: str, agent: int | None = None) -> np.random.Generator:
    """Return the generator for one labeled stream."""
    if master_seed < 0 or run < 0:
        raise ValueError("seed and run index must be nonnegative")
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    key = (int(run), _purpose_code(purpose), 0 if agent is None else int(agent) + 1)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
