"""Stateless, counter-style random substreams.

Every random draw in the simulator is addressed by a root seed plus a tuple
of non-negative integers (stream tag, slot, device, ...). The same address
always yields the same generator, and distinct addresses yield statistically
independent generators, so any party can re-derive any block on demand.
"""

import numpy as np

# stream tags
DATA = 0
PARTITION = 1
DRM = 2
CHANNEL = 3
SHADOW = 4
NOISE = 5
TRIAL = 6
BASELINE_CHANNEL = 7
BASELINE_NOISE = 8


def substream(root_seed, *key):
    """Return a fresh ``numpy.random.Generator`` for ``(root_seed, *key)``."""
    key = tuple(int(k) for k in key)
    if any(k < 0 for k in key):
        raise ValueError(f"substream key entries must be non-negative, got {key}")
    ss = np.random.SeedSequence(int(root_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(root_seed, *key):
    """Collapse a substream address into a single 63-bit integer seed."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
