"""Seeded random number generation.

All randomness in this package flows through PCG64 generators built from
``numpy.random.SeedSequence`` so that every artifact is a pure function of
(inputs, seed).  Gaussian and sphere draws are produced by explicit
transforms of uniform variates (Box-Muller and cylinder-projection) rather
than numpy's distribution methods, which keeps the byte stream independent
of numpy's internal sampler choices.
"""

from __future__ import annotations

import numpy as np

# Stream tags used when deriving child seeds; keeping them distinct ensures
# the streams never collide even for equal trajectory/frame indices.
STREAM_MODEL = 1
STREAM_MOTION = 2
STREAM_INIT = 3
STREAM_ORACLE_COORD = 4
STREAM_ORACLE_ROT = 5
STREAM_INIT_EXTRA = 6
STREAM_INJECT = 7
STREAM_RANSAC = 8


def make_rng(*entropy: int) -> np.random.Generator:
    """PCG64 generator keyed by an arbitrary tuple of integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


def entropy_tuple(seed) -> tuple[int, ...]:
    """Normalize an int or tuple seed into an entropy tuple."""
    if isinstance(seed, (tuple, list)):
        return tuple(int(v) for v in seed)
    return (int(seed),)


def fold_seed(*entropy: int) -> int:
    """Collapse an entropy tuple into a single 64-bit seed."""
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


def normal(rng: np.random.Generator, size=None) -> np.ndarray | float:
    """Standard normal draws via Box-Muller.

    Each draw consumes exactly two uniforms: z = sqrt(-2 ln(1-u1)) cos(2 pi u2).
    """
    n = 1 if size is None else int(np.prod(size))
    u1 = rng.random(n)
    u2 = rng.random(n)
    z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
    if size is None:
        return float(z[0])
    return z.reshape(size)


def unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform directions on S^2 via z = 2u-1, phi = 2 pi u'."""
    z = 2.0 * rng.random(n) - 1.0
    phi = 2.0 * np.pi * rng.random(n)
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def unit_vector(rng: np.random.Generator) -> np.ndarray:
    return unit_vectors(rng, 1)[0]
