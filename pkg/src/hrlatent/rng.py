"""Seeded random streams.

Two counter-based sources are used. General sampling goes through numpy's
Philox generator keyed by ``(seed, stream-id)``. The max-stable kernel needs
random numbers addressable by position so that the compiled and the numpy
backends draw identical values in any evaluation order; it uses the
SplitMix64 mixing function applied to an explicit 64-bit counter.
"""

import zlib

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53
MASK64 = (1 << 64) - 1


def stream_id(name):
    """Stable integer id for a named stream."""
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def generator(seed, stream=0):
    """Philox-backed Generator for the stream ``(seed, stream)``."""
    ss = np.random.SeedSequence([int(seed) & MASK64, stream_id(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _mix_int(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def stream_key(seed, stream=0):
    """64-bit key for the counter hash, derived from ``(seed, stream)``."""
    a = _mix_int((int(seed) & MASK64) + 0x9E3779B97F4A7C15 & MASK64)
    return _mix_int(a ^ _mix_int((stream_id(stream) + 0x632BE59BD9B4E019) & MASK64))


def splitmix64(key, counter):
    """SplitMix64 output at position ``counter`` of the sequence keyed by ``key``.

    Vectorized over ``counter`` (uint64 array); arithmetic wraps modulo 2**64.
    """
    z = np.uint64(key) + (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_uniform(key, counter):
    """Uniform variates in the open interval (0, 1)."""
    h = splitmix64(key, counter)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
