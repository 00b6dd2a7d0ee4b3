"""Per-path random streams derived from a master seed.

Path ``i`` uses ``PCG64(SeedSequence(master_seed, spawn_key=(i,)))``, so a
path's draws never depend on how paths are split across workers.
"""

import numpy as np


def path_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))))
