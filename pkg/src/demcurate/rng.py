"""Portable pseudo-random streams.

Every random draw in the package goes through :class:`Xoshiro256`, a
xoshiro256** generator whose state is seeded from SplitMix64. The generator
runs ``LANES`` independent lanes in lockstep so that large draws stay
vectorised; the output order is step-major (all lanes of step 0, then all
lanes of step 1, ...). Lane ``i`` takes splitmix words ``4*i .. 4*i+3`` of the
stream seeded with the user seed. Uniform doubles use the top 53 bits.
"""

from __future__ import annotations

import hashlib

import numpy as np

LANES = 1024

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state. Returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *keys: object) -> int:
    """Mix ``seed`` with arbitrary keys into a new 64-bit seed.

    Keys are hashed via their ``str`` form, so the result does not depend on
    ``PYTHONHASHSEED`` or on processing order.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & _MASK64).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    _, out = splitmix64(int.from_bytes(h.digest(), "little"))
    return out


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256:
    """Lane-parallel xoshiro256** stream."""

    def __init__(self, seed: int, lanes: int = LANES):
        state = int(seed) & _MASK64
        words = np.empty((4, lanes), dtype=np.uint64)
        for lane in range(lanes):
            for j in range(4):
                state, words[j, lane] = splitmix64(state)
        self._s = [words[j].copy() for j in range(4)]
        self._buf = np.empty(0, dtype=np.uint64)

    def _step(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = _rotl(s3, 45)
        return result

    def next_uint64(self, n: int) -> np.ndarray:
        n = int(n)
        have = self._buf.size
        if have < n:
            lanes = self._s[0].size
            steps = -(-(n - have) // lanes)
            fresh = np.empty((steps, lanes), dtype=np.uint64)
            for i in range(steps):
                fresh[i] = self._step()
            self._buf = np.concatenate([self._buf, fresh.ravel()])
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def random(self, n: int) -> np.ndarray:
        """Uniform doubles in ``[0, 1)``."""
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """Integers in ``[low, high)`` by scaling a uniform double."""
        span = high - low
        return low + np.minimum((self.random(n) * span).astype(np.int64), span - 1)

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller (both branches used)."""
        half = -(-n // 2)
        u = self.random(2 * half)
        r = np.sqrt(-2.0 * np.log1p(-u[:half]))
        phi = 2.0 * np.pi * u[half:]
        out = np.empty(2 * half)
        out[0::2] = r * np.cos(phi)
        out[1::2] = r * np.sin(phi)
        return out[:n]

    def choice(self, population: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(population)``, in draw order."""
        if k > population:
            raise ValueError(f"cannot draw {k} items from {population} without replacement")
        keys = self.random(population)
        return np.argsort(keys, kind="stable")[:k]
