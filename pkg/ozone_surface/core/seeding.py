"""Sub-seed derivation.

Every random stream descends from the single top-level ``seed``: a labelled
stream uses ``SeedSequence(seed, spawn_key=(crc32(label),))``, so streams are
independent of each other and of the order in which they are requested.
Labels in use: ``simulate``, ``simulate/<city>``, ``stage2``,
``cv/split/<city>``, ``cv/chain/<variant>``.
"""

import zlib

import numpy as np


def derive_seed_sequence(seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(label.encode("utf-8")),))


def derive_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(seed, label))
