"""Seed-splittable random streams.

Every random draw in the package descends from one 64-bit seed. Two flavours
are provided:

* :func:`substream` returns a :class:`numpy.random.Generator` for a
  ``(seed, tag, *indices)`` path. Used where a scalar API takes an ``rng``.
* :func:`philox_uniform` evaluates a Philox4x32-10 block cipher directly on a
  counter array, so per-pixel variates can be produced for a whole frame at
  once while staying independent of evaluation order and thread count.
"""

from __future__ import annotations

import zlib

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)


def tag_id(tag: str) -> int:
    """Stable 32-bit identifier for a purpose tag."""
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def substream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent generator for the stream ``(seed, tag, *indices)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(tag_id(tag), *(int(i) for i in indices)),
    )
    return np.random.Generator(np.random.Philox(ss))


def philox4x32(counter, key):
    """Ten-round Philox4x32 on broadcastable ``uint32`` words.

    Parameters
    ----------
    counter : sequence of 4 arrays (uint32)
    key : sequence of 2 arrays (uint32)

    Returns
    -------
    tuple of 4 uint32 arrays
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint32) for k in key)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    with np.errstate(over="ignore"):
        for _ in range(10):
            p0 = c0.astype(np.uint64) * _M0
            p1 = c2.astype(np.uint64) * _M1
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def philox_uniform(seed: int, tag: str, a, b, c, draw: int):
    """Two independent U(0,1) arrays for counters ``(a, b, c, draw)``.

    ``a``, ``b``, ``c`` are integer index arrays (e.g. frame, row, col);
    ``draw`` numbers the variate within one unit of work. Values lie in the
    open interval (0, 1) with 53-bit resolution.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    key0 = np.uint32((seed & 0xFFFFFFFF) ^ tag_id(tag))
    key1 = np.uint32(seed >> 32)
    w = philox4x32(
        (np.asarray(a, dtype=np.uint32), np.asarray(b, dtype=np.uint32),
         np.asarray(c, dtype=np.uint32), np.uint32(draw)),
        (key0, key1),
    )
    return _to_unit(w[0], w[1]), _to_unit(w[2], w[3])


def _to_unit(hi, lo):
    bits = (hi.astype(np.uint64) << np.uint64(21)) ^ (lo.astype(np.uint64) >> np.uint64(11))
    bits &= np.uint64((1 << 53) - 1)
    return (bits.astype(np.float64) + 0.5) / float(1 << 53)
