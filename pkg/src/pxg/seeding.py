"""Deterministic random-stream derivation.

Every stochastic step draws from its own generator keyed by
(root seed, step tag, integer ids).  Streams are therefore independent
of execution order, so serial and worker-pool runs of the sampler
produce identical results.
"""

import zlib
import numpy as np


def substream(seed, tag, *ids):
    """Generator for the (tag, ids) slot under the given root seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode("utf-8"))]
    entropy.extend(int(i) & 0xFFFFFFFFFFFFFFFF for i in ids)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
