"""Deterministic PRNG (SplitMix64) with platform-stable output streams."""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *stream_ids: int) -> int:
    """Derive an independent substream seed by folding ids through the mixer."""
    s = seed & _MASK
    for sid in stream_ids:
        s = _mix((s + _GOLDEN * (sid + 1)) & _MASK)
    return s


class Rng:
    """SplitMix64 generator. Identical seed gives an identical stream everywhere."""

    def __init__(self, seed: int = 0):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return _mix(self.state)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1). Advances the state n times."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + np.uint64(_GOLDEN) * np.arange(
                1, n + 1, dtype=np.uint64
            )
            z = states
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GOLDEN) & _MASK
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        u = self.uniform(n) * (high - low) + low
        return u.reshape(shape)

    def normal_array(self, shape) -> np.ndarray:
        """Standard normals via Box-Muller on the uniform stream."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(1.0 - u1))
        out = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return out[:n].reshape(shape)

    def randint(self, bound: int) -> int:
        """Integer in [0, bound) by rejection-free scaling (bound << 2^53)."""
        return int(self.uniform(1)[0] * bound)

    def shuffle(self, n: int) -> np.ndarray:
        """A permutation of range(n) (Fisher-Yates on the uniform stream)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self.uniform(1)[0] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
