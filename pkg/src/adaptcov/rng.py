"""Seeded random streams.

A run has one 64-bit master seed. Each consumer gets its own generator,
keyed by a fixed stream index (plus optional sub-keys such as a replica or
region number), so adding a consumer never shifts the draws of another.
"""
import numpy as np

TRUTH = 0
OBSERVATION = 1
ENSEMBLE_INIT = 2
FORECAST = 3
COVARIANCE = 4
FILTER_INIT = 5
REGION = 100  # LETKF regions use (REGION, region_index)
REPLICA = 200  # independent experiment replicas use (REPLICA, r)


def stream(seed, index, *subkeys):
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), *map(int, subkeys)))
    return np.random.Generator(np.random.PCG64(seq))
