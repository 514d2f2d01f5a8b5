"""
Counter-based random streams.

Every simulated path owns a Philox4x64-10 stream keyed by its chunk and
indexed by its position in the chunk, so any single path can be replayed in
isolation and results never depend on how chunks are scheduled.  The block
function is bit-compatible with :class:`numpy.random.Philox` (same key,
counter incremented before each block).

Chunk keys are derived from the master seed with splitmix64.

Inside numba kernels a stream is a pair of arrays: ``st`` (uint64[6]:
key0, key1, path, tag, block counter, word position) and ``buf``
(uint64[4], the current output block), plus a float64[2] gaussian cache.
"""
import math

import numba as nb
import numpy as np

__all__ = [
    "RNG_ALGORITHM",
    "splitmix64",
    "chunk_key",
    "Stream",
    "philox_block",
]

RNG_ALGORITHM = "philox4x64-10/splitmix64-keys"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


def splitmix64(x):
    """One splitmix64 output for state ``x`` (state advanced by the golden gamma)."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def chunk_key(master_seed, chunk):
    """Two-word Philox key for ``chunk`` under ``master_seed``."""
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    base = (master_seed + (chunk + 1) * _GOLDEN) & _MASK64
    k0 = splitmix64(base)
    k1 = splitmix64(base ^ k0)
    return k0, k1


@nb.njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@nb.njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Philox4x64 with 10 rounds on counter (c0..c3) and key (k0, k1)."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def next_u64(st, buf):
    pos = st[5]
    if pos >= 4:
        st[4] += np.uint64(1)
        o0, o1, o2, o3 = philox_block(st[4], st[2], st[3], np.uint64(0), st[0], st[1])
        buf[0] = o0
        buf[1] = o1
        buf[2] = o2
        buf[3] = o3
        pos = np.uint64(0)
    st[5] = pos + np.uint64(1)
    return buf[pos]


@nb.njit(cache=True, inline="always")
def next_uniform(st, buf):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(st, buf) >> _S11) * _TWO_M53


@nb.njit(cache=True, inline="always")
def next_normal(st, buf, gc):
    """Standard normal by Box-Muller; the second value is cached in ``gc``."""
    if gc[0] != 0.0:
        gc[0] = 0.0
        return gc[1]
    u1 = (float(next_u64(st, buf) >> _S11) + 1.0) * _TWO_M53  # (0, 1]
    u2 = float(next_u64(st, buf) >> _S11) * _TWO_M53
    r = math.sqrt(-2.0 * math.log(u1))
    th = 2.0 * math.pi * u2
    gc[0] = 1.0
    gc[1] = r * math.sin(th)
    return r * math.cos(th)


@nb.njit(cache=True)
def reset_stream(st, buf, gc, k0, k1, path, tag):
    st[0] = k0
    st[1] = k1
    st[2] = path
    st[3] = tag
    st[4] = np.uint64(0)
    st[5] = np.uint64(4)
    gc[0] = 0.0
    gc[1] = 0.0


def new_state():
    return np.zeros(6, dtype=np.uint64), np.zeros(4, dtype=np.uint64), np.zeros(2)


class Stream:
    """
    Python handle on one path's stream (for single-path simulation and tests).

    ``Stream.for_path(seed, chunk, path)`` yields exactly the draws that the
    batch kernels use for path ``path`` of chunk ``chunk``.
    """

    def __init__(self, key, path=0, tag=0):
        self.key = (int(key[0]), int(key[1]))
        self.path = int(path)
        self.tag = int(tag)
        self.st, self.buf, self.gc = new_state()
        reset_stream(self.st, self.buf, self.gc, np.uint64(self.key[0]), np.uint64(self.key[1]),
                     np.uint64(self.path), np.uint64(self.tag))

    @classmethod
    def for_path(cls, master_seed, chunk=0, path=0, tag=0):
        return cls(chunk_key(master_seed, chunk), path, tag)

    def u64(self):
        return int(next_u64(self.st, self.buf))

    def uniform(self):
        return next_uniform(self.st, self.buf)

    def normal(self):
        return next_normal(self.st, self.buf, self.gc)
