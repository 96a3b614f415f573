"""Deterministic randomness primitives.

All seeded behavior in the engine (split partitioning, shuffles, demo pools,
demo sampling, augmentor draws) derives from a single 64-bit mixing function
so identical inputs produce identical outputs across processes and platforms,
with no dependence on interpreter hash randomization or library RNG state.

The mixer is the splitmix64 finalizer with its standard constants:

    gamma = 0x9E3779B97F4A7C15
    m1    = 0xBF58476D1CE4E5B9
    m2    = 0x94D049BB133111EB

``hash64(seed, *parts)`` folds an arbitrary mixed sequence of ints and
strings (UTF-8 bytes, consumed in 8-byte little-endian chunks) into one
64-bit key. ``KeyedStream(key)`` turns a key into a reproducible stream of
uniform draws used for shuffles and sampling without replacement.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One splitmix64 finalization round over a 64-bit state."""
    x = (x + _GAMMA) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _fold(state: int, token: int) -> int:
    return splitmix64((state ^ (token & _MASK)) & _MASK)


def hash64(seed: int, *parts: int | str) -> int:
    """Mix a seed and a sequence of ints/strings into one 64-bit key."""
    state = splitmix64(seed & _MASK)
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            # Tag with the length so "ab","c" and "a","bc" differ.
            state = _fold(state, 0x5452494E47 ^ len(data))
            for off in range(0, len(data), 8):
                chunk = int.from_bytes(data[off : off + 8], "little")
                state = _fold(state, chunk)
        elif isinstance(part, bool):
            raise TypeError("bool is not a valid hash64 part")
        elif isinstance(part, int):
            state = _fold(state, 0x494E54 ^ (part & _MASK))
        else:
            raise TypeError(f"unsupported hash64 part type: {type(part).__name__}")
    return state


class KeyedStream:
    """Reproducible stream of pseudo-random draws seeded by a 64-bit key."""

    def __init__(self, key: int):
        self._state = key & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _M1) & _MASK
        z = ((z ^ (z >> 27)) * _M2) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform draw in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = _MASK - (_MASK + 1) % n
        while True:
            draw = self.next_u64()
            if draw <= limit:
                return draw % n

    def shuffled_indices(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in draw order."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n}")
        pool = list(range(n))
        picked = []
        for i in range(k):
            j = i + self.next_below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
            picked.append(pool[i])
        return picked
