"""Seed splitting.

An episode seed fans out into named sub-streams so that swapping one
agent's policy never shifts the random numbers consumed by the item
dynamics or by any other agent.
"""

from __future__ import annotations

import numpy as np

SPAWN = 1
WIND = 2
DRIFT = 3
DEPLOY = 4
POLICY = 5
CORRUPTION = 6

SEED_MASK = (1 << 64) - 1


def stream(seed: int, kind: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & SEED_MASK, kind, *key]))


def episode_seeds(master_seed: int, n: int) -> list[int]:
    """64-bit per-episode seeds; episode ``i`` gets the same seed in every batch."""
    out = []
    for i in range(n):
        ss = np.random.SeedSequence([master_seed & SEED_MASK, 0xE915, i])
        out.append(int(ss.generate_state(1, np.uint64)[0]))
    return out
