"""Counter-based random streams (Philox4x32-10).

Every random number used by the simulators is a pure function of
``(seed, tag, step, particle, level, block)``.  There is no generator state
to carry around, so a run does not depend on the order in which particles,
levels or replicates are scheduled.

Counter words: ``(step, particle, level, tag << 24 | block)``; the 64-bit
seed is the key.  All words are 32-bit.
"""

import math

import numpy as np
from numba import njit

_MA = np.uint64(0xD2511F53)
_MB = np.uint64(0xCD9E8D57)
_WA = np.uint64(0x9E3779B9)
_WB = np.uint64(0xBB67AE85)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S24 = np.uint64(24)
_TWO_M32 = 2.0 ** -32

# stream tags
TAG_PROPAGATE = 1
TAG_SELECT = 2
TAG_PATH = 3
TAG_CRUDE = 4

# level word used for initial-state draws; real levels stay far below it
INIT_LEVEL = 0xFFFFFFFF


@njit(inline="always", nogil=True, cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox block; all arguments are 32-bit words."""
    c0 = np.uint64(c0) & _LO32
    c1 = np.uint64(c1) & _LO32
    c2 = np.uint64(c2) & _LO32
    c3 = np.uint64(c3) & _LO32
    k0 = np.uint64(k0) & _LO32
    k1 = np.uint64(k1) & _LO32
    for r in range(10):
        if r > 0:
            k0 = (k0 + _WA) & _LO32
            k1 = (k1 + _WB) & _LO32
        p0 = _MA * c0
        p1 = _MB * c2
        c0, c1, c2, c3 = (p1 >> _S32) ^ c1 ^ k0, p1 & _LO32, (p0 >> _S32) ^ c3 ^ k1, p0 & _LO32
    return c0, c1, c2, c3


@njit(inline="always", nogil=True, cache=True)
def _open_unit(r):
    # (0, 1), never hits either end
    return (np.float64(r) + 0.5) * _TWO_M32


@njit(inline="always", nogil=True, cache=True)
def uniforms4(seed, tag, step, particle, level, block):
    """Four independent U(0, 1) variates for one counter value."""
    s = np.uint64(seed)
    r0, r1, r2, r3 = philox4x32(step, particle, level,
                                (np.uint64(tag) << _S24) | np.uint64(block),
                                s & _LO32, s >> _S32)
    return _open_unit(r0), _open_unit(r1), _open_unit(r2), _open_unit(r3)


@njit(inline="always", nogil=True, cache=True)
def _box_muller(u0, u1):
    rad = math.sqrt(-2.0 * math.log(u0))
    ang = 2.0 * math.pi * u1
    return rad * math.cos(ang), rad * math.sin(ang)


@njit(inline="always", nogil=True, cache=True)
def fill_noise(seed, tag, step, particle, level, z):
    """Fill ``z`` with standard normals and return one extra uniform.

    In one dimension a single block serves two consecutive even/odd steps
    (see :func:`scalar_noise_pair`).  Otherwise block 0 supplies two normals
    plus the uniform used for mode transitions and later blocks supply four
    normals each.
    """
    d = z.shape[0]
    if d == 1:
        n0, n1, v0, v1 = scalar_noise_pair(seed, tag, step >> 1, particle, level)
        if step & 1:
            z[0] = n1
            return v1
        z[0] = n0
        return v0
    u0, u1, u2, _ = uniforms4(seed, tag, step, particle, level, 0)
    n0, n1 = _box_muller(u0, u1)
    if d > 0:
        z[0] = n0
        z[1] = n1
    k = 2
    block = 1
    while k < d:
        v0, v1, v2, v3 = uniforms4(seed, tag, step, particle, level, block)
        a0, a1 = _box_muller(v0, v1)
        a2, a3 = _box_muller(v2, v3)
        z[k] = a0
        if k + 1 < d:
            z[k + 1] = a1
        if k + 2 < d:
            z[k + 2] = a2
        if k + 3 < d:
            z[k + 3] = a3
        k += 4
        block += 1
    return u2


@njit(inline="always", nogil=True, cache=True)
def scalar_noise_pair(seed, tag, pair, particle, level):
    """Normals and uniforms for steps ``2*pair`` and ``2*pair + 1`` of a 1-d path."""
    u0, u1, u2, u3 = uniforms4(seed, tag, pair << 1, particle, level, 0)
    n0, n1 = _box_muller(u0, u1)
    return n0, n1, u2, u3


def normals(seed, tag, step, particle, level, size):
    """Python convenience wrapper around :func:`fill_noise`."""
    z = np.empty(size)
    u = fill_noise(seed, tag, step, particle, level, z)
    return z, u
