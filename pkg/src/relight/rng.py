"""Counter-based random streams for deterministic rendering.

Every sample dimension is addressed as (seed, pixel, sample, dim, salt) and
hashed independently, so parallel schedules cannot perturb the stream and a
gradient replay pass consumes exactly the numbers the forward pass saw.
Skipped decisions (e.g. env sampling when the map is black) never shift
later dimensions.
"""

from __future__ import annotations

from numba import njit, uint64

_GOLD = uint64(0x9E3779B97F4A7C15)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(uint64(uint64), cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(cache=True, inline="always")
def rand_u01(seed, pixel, sample, dim, salt):
    """One uniform in [0, 1) at a fixed (seed, pixel, sample, dim, salt) address."""
    h = _mix(uint64(seed) + _GOLD)
    h = _mix(h ^ (uint64(pixel) * _GOLD + uint64(1)))
    h = _mix(h ^ (uint64(sample) * _GOLD + uint64(2)))
    h = _mix(h ^ (uint64(dim) * _GOLD + uint64(3)))
    h = _mix(h ^ (uint64(salt) * _GOLD + uint64(4)))
    return (h >> uint64(11)) * _INV_2_53


_MASK64 = (1 << 64) - 1


def _mix_py(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Derive an independent 64-bit seed (e.g. per fit iteration)."""
    h = _mix_py((seed + 0x9E3779B97F4A7C15) & _MASK64)
    h = _mix_py(h ^ ((stream * 0x9E3779B97F4A7C15 + 7) & _MASK64))
    return h
