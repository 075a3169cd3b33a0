"""SplitMix64, the simulator's random source.

The recurrence is fixed so sessions are reproducible from a seed in any
language::

    GAMMA = 0x9E3779B97F4A7C15
    state = (state + GAMMA) mod 2**64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    out = z ^ (z >> 31)

A uniform double in [0, 1) is ``(out >> 11) * 2**-53``. Because the state
advances by a constant, the k-th output (k = 0, 1, ...) of a generator
started at ``key`` is ``mix(key + (k + 1) * GAMMA)``; the vectorised kernels
rely on that counter form.

Per-student streams: student ``s`` of a session seeded with ``seed`` uses
``key = mix(seed + (s + 1) * GAMMA)``, i.e. the s-th output of a generator
started at ``seed``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def student_key(seed: int, student: int) -> int:
    return mix64(seed + (student + 1) * GAMMA)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * INV_2_53

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` as ``floor(random() * n)``."""
        return int(self.random() * n)
