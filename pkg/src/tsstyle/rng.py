"""Seedable random source with a fixed, documented draw discipline.

The bit stream is PCG64 seeded through ``numpy.random.SeedSequence``, which is
platform-independent. Gaussian variates use the basic (trigonometric)
Box-Muller transform with a fixed pairing order rather than numpy's ziggurat,
so the exact values drawn depend only on the seed and the call sequence, not
on numpy internals: for 2m uniforms u1[i], u2[i] the normals are
r*cos(2*pi*u2) followed by r*sin(2*pi*u2) with r = sqrt(-2*ln(1-u1)),
interleaved pairwise. An odd request draws a full final pair and discards the
sine half, so consumption depends only on the requested count.
"""

from __future__ import annotations

import numpy as np

from .tensor import default_dtype

ALGORITHM = "pcg64+box-muller"


class Rng:
    """Deterministic random generator; ``seed`` is an int or tuple of ints."""

    def __init__(self, seed):
        if isinstance(seed, (tuple, list)):
            entropy = [int(s) for s in seed]
        else:
            entropy = int(seed)
        self.seed = seed
        self.algorithm = ALGORITHM
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def uniform(self, shape=(), low=0.0, high=1.0, dtype=None):
        dtype = dtype or default_dtype()
        u = self._gen.random(size=shape, dtype=np.float64)
        return (low + (high - low) * u).astype(dtype)

    def normal(self, shape=(), dtype=None):
        """Standard normal draws via fixed-order Box-Muller."""
        dtype = dtype or default_dtype()
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = self._gen.random(size=pairs, dtype=np.float64)
        u2 = self._gen.random(size=pairs, dtype=np.float64)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], log is finite
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        out = out[:n].astype(dtype)
        return out.reshape(shape) if shape else out[0]

    def integers(self, low, high, shape=()):
        """Uniform integers in [low, high) as int64."""
        return self._gen.integers(low, high, size=shape, dtype=np.int64)

    def choice_no_replace(self, n, k):
        """k distinct indices from range(n), order randomized."""
        return self._gen.permutation(n)[:k]

    def spawn_seeds(self, count, base=None):
        """Deterministic child seeds derived from this generator's seed.

        Children are independent of draws already made: they depend only on
        the original seed and the child index.
        """
        base = self.seed if base is None else base
        if isinstance(base, (tuple, list)):
            return [tuple(list(base) + [i]) for i in range(count)]
        return [(int(base), i) for i in range(count)]
