"""Counter-based splittable random numbers.

Every replica of every experiment is keyed by (master_seed, stream_id);
the draw sequence is a pure function of that pair, so replicas can run in
any order, on any worker, in either backend, and reproduce bit-identically.

The generator is the splitmix64 finalizer applied to an additive counter
(state += GOLDEN per draw).  Distinct streams use well-mixed starting
states, which makes overlap between streams astronomically unlikely.  The
compiled kernels implement the identical arithmetic on uint64.
"""
from __future__ import annotations

from dataclasses import dataclass

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0x5851F42D4C957F2D
_MASTER_SALT = 0xDA942042E4DD58B5


def mix64(z: int) -> int:
    """splitmix64 finalizer; accepts any int, works mod 2^64."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_state(master_seed: int, stream_id: int) -> int:
    """Initial generator state for one (master_seed, stream_id) replica."""
    a = mix64((master_seed & MASK64) ^ _STREAM_SALT)
    b = mix64((stream_id & MASK64) ^ _MASTER_SALT)
    return mix64((a + (b * GOLDEN)) & MASK64)


@dataclass(frozen=True)
class RngSeed:
    """Replica seed: (master_seed, stream_id) fully determines every draw."""

    master_seed: int
    stream_id: int = 0

    def state(self) -> int:
        return stream_state(self.master_seed, self.stream_id)

    def stream(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.master_seed, stream_id)


class CounterRng:
    """Mutable draw cursor over one stream (pure-Python reference)."""

    __slots__ = ("state",)

    def __init__(self, seed_or_state):
        if isinstance(seed_or_state, RngSeed):
            self.state = seed_or_state.state()
        else:
            self.state = seed_or_state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def bounded(self, n: int) -> int:
        """Uniform int in [0, n) by top-bit rejection (exactly uniform).

        n == 1 consumes no draw; kernels follow the same convention.
        """
        if n <= 1:
            return 0
        k = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - k)
            if r < n:
                return r

    def shuffle(self, xs: list) -> None:
        """In-place Fisher-Yates, deterministic given the stream."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.bounded(i + 1)
            xs[i], xs[j] = xs[j], xs[i]
