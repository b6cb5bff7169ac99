import zlib

import numpy as np


def derive_seed(root, name):
    """64-bit seed of the named sub-stream of ``root``.

    Components (injection, reveal, sampling, init) each draw from their own
    stream so any one of them can be replayed in isolation.
    """
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return int(seq.generate_state(1, np.uint64)[0])


def substream(root, name):
    return np.random.default_rng(derive_seed(root, name))
