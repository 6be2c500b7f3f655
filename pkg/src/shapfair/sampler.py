"""Seedable permutation and placement sampling.

Every draw is derived from raw 64-bit words of a Philox-4x64 counter-based
generator keyed by ``(seed, stream_id)``.  Only the raw bit stream is taken
from numpy (whose bit generators are stream-stable across releases); the
bounded-integer, uniform and categorical transforms are implemented here so
identical keys reproduce identical draws on every platform and numpy version.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidDistributionError, ZeroProbabilityError

_MASK64 = (1 << 64) - 1
_BLOCK = 512
SHARED_STREAM = 0xFFFFFFFF
DIST_TOL = 1e-9


class RngStream:
    """Independent random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= int(value) <= _MASK64:
                raise InvalidArgumentError(f"{name} must be an unsigned 64-bit integer, got {value}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        self._buf: list[int] = []
        self._pos = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def next_u64(self) -> int:
        if self._pos == len(self._buf):
            self._buf = self._bitgen.random_raw(_BLOCK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, k: int) -> int:
        """Unbiased integer in [0, k) (Lemire's multiply-and-reject)."""
        if k <= 0:
            raise InvalidArgumentError(f"bound must be positive, got {k}")
        m = self.next_u64() * k
        low = m & _MASK64
        if low < k:
            threshold = ((1 << 64) - k) % k
            while low < threshold:
                m = self.next_u64() * k
                low = m & _MASK64
        return m >> 64


class StreamFactory:
    """Per-(trial, player) streams so scheduling order never perturbs other players."""

    def __init__(self, seed: int, trial: int = 0):
        if not 0 <= trial < 1 << 32:
            raise InvalidArgumentError(f"trial index must fit in 32 bits, got {trial}")
        self.seed = int(seed)
        self.trial = int(trial)

    def player(self, i: int) -> RngStream:
        return RngStream(self.seed, (self.trial << 32) | i)

    def shared(self) -> RngStream:
        return RngStream(self.seed, (self.trial << 32) | SHARED_STREAM)


@dataclass(frozen=True)
class Placement:
    """Player ``player`` placed after a predecessor set of size ``cardinality``."""

    player: int
    cardinality: int
    predecessors: int


def sample_uniform_permutation(rng: RngStream, n: int) -> list[int]:
    """Fisher-Yates shuffle of 0..n-1."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    perm = list(range(n))
    for k in range(n - 1, 0, -1):
        j = rng.below(k + 1)
        perm[k], perm[j] = perm[j], perm[k]
    return perm


def predecessors_in(perm: Sequence[int], i: int) -> int:
    """Bitmask of the players preceding ``i`` in ``perm``."""
    mask = 0
    for p in perm:
        if p == i:
            return mask
        mask |= 1 << p
    raise InvalidArgumentError(f"player {i} not in permutation")


def validate_theta(theta: Sequence[float], n: int) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if t.shape != (n,):
        raise InvalidDistributionError(f"cardinality distribution must have length {n}, got shape {t.shape}")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InvalidDistributionError("cardinality distribution has negative or non-finite entries")
    if abs(math.fsum(t.tolist()) - 1.0) > DIST_TOL:
        raise InvalidDistributionError(f"cardinality distribution sums to {t.sum()!r}, not 1")
    return t


def cumulative(theta: Sequence[float]) -> list[float]:
    cdf = np.cumsum(np.asarray(theta, dtype=float)).tolist()
    cdf[-1] = math.inf
    return cdf


def draw_cardinality(rng: RngStream, cdf: list[float]) -> int:
    """Inverse-CDF draw; zero-mass categories are never returned."""
    return bisect.bisect_right(cdf, rng.uniform())


def draw_predecessors(rng: RngStream, i: int, n: int, c: int) -> int:
    """Uniform size-c subset of the players other than i (partial Fisher-Yates)."""
    others = [k for k in range(n) if k != i]
    mask = 0
    for t in range(c):
        j = t + rng.below(n - 1 - t)
        others[t], others[j] = others[j], others[t]
        mask |= 1 << others[t]
    return mask


def sample_placement(rng: RngStream, i: int, n: int, theta: Sequence[float]) -> Placement:
    """Draw c ~ theta, then a uniform predecessor set of size c for player i."""
    if not 0 <= i < n:
        raise InvalidArgumentError(f"player {i} outside 0..{n - 1}")
    t = validate_theta(theta, n)
    c = draw_cardinality(rng, cumulative(t))
    while t[c] == 0.0:
        # float cumsum can leave a zero-width bin at the boundary
        c -= 1
    return Placement(i, c, draw_predecessors(rng, i, n, c))


def importance_weight(theta: Sequence[float], c: int, n: int) -> float:
    """1 / (n * theta[c]); exactly 1 under the uniform cardinality distribution."""
    p = float(theta[c])
    if p <= 0.0:
        raise ZeroProbabilityError(f"cardinality {c} has zero probability")
    return 1.0 / (n * p)
