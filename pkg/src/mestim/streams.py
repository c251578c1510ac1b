"""Deterministic random streams.

Every random quantity in the package is drawn from a ``numpy.random.Generator``
passed in explicitly.  Streams for sub-tasks are derived from a master seed
and an integer key path through ``SeedSequence(seed, spawn_key=key)``, so the
stream for a given ``(seed, key)`` does not depend on the order in which tasks
are executed.
"""
from __future__ import annotations

import numpy as np

_TWO53 = 2.0**53


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``seed`` and the counter path ``key``.

    ``make_stream(s)`` and ``make_stream(s, n, rep)`` are independent streams;
    the same arguments always give the same stream.
    """
    if seed is None:
        raise ValueError("a seed is required; time-seeding is not supported")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_stream(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return make_stream(rng)


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1).

    Built from 53 random bits with a half-bit offset, so neither endpoint can
    occur.  Inverse-cdf samplers rely on this to stay strictly inside finite
    support endpoints.
    """
    bits = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (bits.astype(np.float64) + 0.5) / _TWO53


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed for the counter path ``key`` under ``seed``.

    The first 63 bits of the ``SeedSequence(seed, spawn_key=key)`` state, so
    a derived seed can be stored, printed and passed to ``make_stream``.
    """
    if seed is None:
        raise ValueError("a seed is required; time-seeding is not supported")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
