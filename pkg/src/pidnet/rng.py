"""Counter-based deterministic random number generation.

The generator is a splitmix-style 64-bit mixer: the i-th draw is a pure
function of (seed, counter + i), so streams can be replayed or forked
without shared mutable state. Uniforms take the top 53 bits of the mixed
word; normal deviates use Box-Muller on those uniforms. Every draw is
bit-identical across platforms because only integer mixing and IEEE-754
double arithmetic are involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer applied elementwise to a uint64 array."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@dataclass
class RngState:
    """Reproducible stream identified by (seed, counter).

    Drawing n values consumes n counter slots; the k-th output of a stream
    is mix(seed + (counter + k + 1) * GOLDEN) regardless of how draws are
    batched.
    """

    seed: int
    counter: int = 0

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words."""
        idx = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(self.counter & _U64_MASK)
        out = _mix(np.uint64(self.seed & _U64_MASK) + idx * _GOLDEN)
        self.counter += n
        return out

    def uniform(self, shape=()) -> np.ndarray:
        """Uniforms in [0, 1) with 53-bit resolution."""
        n = int(np.prod(shape)) if shape else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals via Box-Muller (pairs drawn, surplus discarded)."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        w = (self.u64(2 * pairs) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u1 = w[:pairs] + 2.0**-53  # shift into (0, 1] so log is finite
        u2 = w[pairs:]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else float(z[0])

    def randint(self, lo: int, hi: int) -> int:
        """One integer in [lo, hi). Modulo reduction; bias is irrelevant here."""
        if hi <= lo:
            raise ValueError(f"empty range [{lo}, {hi})")
        return lo + int(self.u64(1)[0] % np.uint64(hi - lo))

    def shuffle(self, n: int) -> np.ndarray:
        """Deterministic Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derive(self, tag: int) -> "RngState":
        """Fork a disjoint child stream keyed by an integer tag."""
        t = np.array([(tag + 1) & _U64_MASK], dtype=np.uint64) * _GOLDEN
        child = _mix(np.array([self.seed & _U64_MASK], dtype=np.uint64) ^ _mix(t))
        return RngState(int(child[0]), 0)
