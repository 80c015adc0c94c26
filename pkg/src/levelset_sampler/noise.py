"""Counter-based Gaussian noise for reproducible, splittable chains.

Each step of a chain owns a fixed range of 256-bit counter blocks of a
Philox generator keyed by the chain seed, so the noise of step ``l`` is a
pure function of ``(seed, l, component)`` no matter how the stream is
chunked. Normals come from the inverse CDF applied to open-interval
uniforms built from the raw 64-bit words.
"""

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4
_INV_2_53 = 2.0**-53
_HALF_CELL = 2.0**-54


class GaussianNoise:
    """Standard-normal noise table indexed by (step, component)."""

    def __init__(self, seed, dim):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.seed = int(seed)
        self.dim = int(dim)
        self.blocks_per_step = -(-dim // _WORDS_PER_BLOCK)

    def steps(self, start, count):
        """Return the (count, dim) noise array for steps start .. start+count-1."""
        if count == 0:
            return np.empty((0, self.dim))
        bg = Philox(key=self.seed, counter=start * self.blocks_per_step)
        raw = bg.random_raw(count * self.blocks_per_step * _WORDS_PER_BLOCK)
        raw = raw.reshape(count, self.blocks_per_step * _WORDS_PER_BLOCK)
        # (raw >> 11) / 2^53 + 2^-54 lies strictly inside (0, 1)
        u = (raw[:, : self.dim] >> np.uint64(11)) * _INV_2_53 + _HALF_CELL
        return ndtri(u)

    def single(self, step):
        return self.steps(step, 1)[0]
