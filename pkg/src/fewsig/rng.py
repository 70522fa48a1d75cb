"""Seed derivation: one master seed fans out into independent named streams.

Each consumer (episode sampling, parameter init, dropout, ...) gets its own
generator keyed by ``(purpose, index)``, so adding draws to one consumer never
perturbs another. Streams are ``numpy`` PCG64 generators spawned from
``SeedSequence(master, spawn_key=(purpose_id, index))`` and are reproducible
across machines.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose table; append only, never renumber.
_PURPOSES = {
    "init": 0,
    "train_episodes": 1,
    "val_episodes": 2,
    "test_episodes": 3,
    "dropout": 4,
    "perturbation": 5,
    "synth": 6,
    "verify": 7,
}


def stream(master_seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one named consumer of the master seed."""
    try:
        pid = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}; known: {sorted(_PURPOSES)}")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(pid, int(index)))
    return np.random.Generator(np.random.PCG64(seq))
