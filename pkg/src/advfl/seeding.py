"""Named random streams derived from a single master seed.

Every source of randomness in a run draws from its own stream so that, for
example, changing how the adversary consumes randomness never perturbs the
client sampling or the data noise.  Streams are derived with numpy's
``SeedSequence`` spawn keys:

    stream(seed, "data", client_id, round)  ->  Generator

The first spawn-key entry is the stream name's fixed integer tag; any further
integers scope the stream (per client, per round, ...).
"""

import numpy as np

STREAMS = {
    "sampling": 0,
    "data": 1,
    "adversary": 2,
    "stopping": 3,
    "instance": 4,
    "mask": 5,
    "trial": 6,
}


def seed_sequence(seed, name, *keys):
    if name not in STREAMS:
        raise KeyError(f"unknown stream {name!r}; expected one of {sorted(STREAMS)}")
    key = (STREAMS[name],) + tuple(int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(seed), spawn_key=key)


def stream(seed, name, *keys):
    """Return a fresh ``Generator`` for the named, key-scoped stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, name, *keys)))


def round_subset(seed, t, M, size):
    """Uniform size-``size`` subset of range(M) for round ``t`` (sorted array).

    Anyone holding ``seed`` reproduces the same subset, which is how a
    lower-bound instance and the adversary that "inspects" it stay in sync.
    """
    rng = stream(seed, "mask", t)
    return np.sort(rng.choice(M, size=size, replace=False))
