"""Deterministic named RNG streams.

Every random draw in the pipeline comes from a stream derived from the run
seed plus a structural key (component tag, camera, frame, entity). Streams
are independent of iteration order, which is what makes single-process and
distributed runs bit-identical and lets privileged evaluation passes replay
the exact draws of the committed pass.
"""

from __future__ import annotations

import numpy as np

# component tags
SCENE = 1
POLICY = 2
DETECT = 3
DETECT_FP = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, key...) slot; same arguments, same stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
