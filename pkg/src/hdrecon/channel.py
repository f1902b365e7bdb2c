"""q-ary symmetric channel: frame sampling and entropy bookkeeping.

Random streams come from numpy's PCG64 bit generator seeded through
``SeedSequence``; any integer, sequence of integers or ``SeedSequence``
works as a seed, and child streams are derived with ``SeedSequence.spawn``
so that frames of an experiment are independent and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .galois import bits_per_symbol


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ChannelParams:
    p: float
    q: int

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"transition probability must lie in [0, 1), got {self.p}")
        bits_per_symbol(self.q)

    @property
    def v(self) -> int:
        return bits_per_symbol(self.q)


@dataclass(frozen=True)
class QaryFrame:
    q: int
    n: int
    x: np.ndarray
    y: np.ndarray
    seed: object = None

    @property
    def errors(self) -> int:
        return int(np.count_nonzero(self.x != self.y))


def add_symmetric_noise(x: np.ndarray, params: ChannelParams, rng) -> np.ndarray:
    """Pass ``x`` through the channel: each symbol is replaced, with
    probability p, by one of the q-1 other values chosen uniformly."""
    rng = make_rng(rng)
    x = np.asarray(x, dtype=np.int64)
    flip = rng.random(x.size) < params.p
    # nonzero XOR offset keeps the replacement uniform over the other values
    offset = rng.integers(1, params.q, size=x.size) if params.q > 2 else np.ones(x.size, np.int64)
    return np.where(flip, x ^ offset, x)


def sample_frame(params: ChannelParams, n: int, seed=None) -> QaryFrame:
    if n < 1:
        raise ValueError("frame length must be positive")
    rng = make_rng(seed)
    x = rng.integers(0, params.q, size=n, dtype=np.int64)
    y = add_symmetric_noise(x, params, rng)
    return QaryFrame(params.q, n, x, y, seed)


def _xlogx(p: float, base: float) -> float:
    return 0.0 if p <= 0.0 else p * math.log(p, base)


def conditional_entropy(params: ChannelParams, base: int | str = 2) -> float:
    """H(X|Y) per symbol for uniform input, in bits (``base=2``) or in
    q-ary units (``base=params.q`` or ``"q"``)."""
    p, q = params.p, params.q
    if base == "q":
        base = q
    h_bits = -(_xlogx(1.0 - p, 2) + (0.0 if p == 0 else p * (math.log2(p) - math.log2(q - 1))))
    if base == 2:
        return h_bits
    if base == q:
        return h_bits / params.v
    raise ValueError("base must be 2 or q")


def efficiency(leak_bits: float, n: int, params: ChannelParams) -> float:
    """leak / (n H(X|Y)) with the entropy in bits; ``inf`` when the channel
    is noiseless and something was still disclosed."""
    if leak_bits < 0:
        raise ValueError("leakage cannot be negative")
    h = conditional_entropy(params, 2)
    if h == 0.0:
        return math.inf if leak_bits > 0 else float("nan")
    return leak_bits / (n * h)
