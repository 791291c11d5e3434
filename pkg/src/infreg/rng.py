"""Seeded random streams built on the Philox counter-based generator.

Philox (4x64) is a documented, platform-independent counter-based PRNG;
numpy ships it as a BitGenerator. Each purpose gets its own stream keyed
by (seed, stream id), so e.g. drawing more reparameterization noise never
shifts the data draws of the same run.
"""

import numpy as np

# Fixed stream ids; append only, never renumber (seeds would silently change).
STREAMS = {
    "dgp": 0,  # frozen generator parameters of a synthetic DGP
    "data": 1,  # sample draws (covariates, treatments, noise in outcomes)
    "init": 2,  # model parameter initialization
    "shuffle": 3,  # minibatch shuffling
    "noise": 4,  # reparameterization noise during training
    "eval": 5,  # reparameterization noise during evaluation
    "split": 6,  # train/eval split permutation
    "trials": 7,  # randomized bound-checker trials
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the named Philox stream for this seed."""
    if name not in STREAMS:
        raise KeyError(f"unknown stream {name!r}; expected one of {sorted(STREAMS)}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = np.array([seed, STREAMS[name]], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
