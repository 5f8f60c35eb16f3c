"""System parameters, Zipf popularity and i.i.d. demand sampling.

File ids are 1-based everywhere in the public API: ``q[f - 1]`` is the
request probability of file ``f`` and demand vectors hold values in
``1..m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidParameterError",
    "SystemParams",
    "PopularityDist",
    "DemandRealization",
    "zipf",
    "sample_demands",
    "as_generator",
]


class InvalidParameterError(ValueError):
    """Raised when a constructor or operation receives out-of-domain input."""


@dataclass(frozen=True)
class SystemParams:
    """Shared-link caching network parameters.

    Parameters
    ----------
    n : int
        Number of users.
    m : int
        Library size (number of files).
    M : float
        Per-user cache size, in files. May be fractional.
    B : int
        Packets per file.
    seed : int
        Root seed for every random stream derived from these parameters.
    """

    n: int
    m: int
    M: float
    B: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameterError(f"m must be a positive integer, got {self.m!r}")
        if int(self.B) != self.B or self.B < 1:
            raise InvalidParameterError(f"B must be a positive integer, got {self.B!r}")
        if not math.isfinite(self.M) or not 0 <= self.M <= self.m:
            raise InvalidParameterError(f"M must lie in [0, m={self.m}], got {self.M!r}")

    @property
    def packet_budget(self) -> int:
        """Packets a single user can store, ``floor(M * B)``."""
        # guard against 0.3 * 10 == 2.9999999999999996
        return int(math.floor(self.M * self.B + 1e-9))


@dataclass(frozen=True)
class PopularityDist:
    """Per-file request probabilities ``q``; ``q[f - 1]`` belongs to file ``f``."""

    q: np.ndarray
    alpha: float | None = field(default=None, compare=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise InvalidParameterError("q must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise InvalidParameterError("q entries must be finite and non-negative")
        if abs(math.fsum(q) - 1.0) > 1e-12:
            raise InvalidParameterError(f"q must sum to 1, sums to {math.fsum(q)!r}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.q.size

    def __len__(self):
        return self.q.size

    def __getitem__(self, f):
        return self.q[f - 1]


@dataclass(frozen=True)
class DemandRealization:
    """File requested by each user: ``d[u]`` for user index ``u``."""

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=np.int64)
        if d.ndim != 1:
            raise InvalidParameterError("demands must be a 1-d sequence")
        if d.size and d.min() < 1:
            raise InvalidParameterError("file ids are 1-based")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.size

    def distinct(self) -> int:
        """Number of distinct requested files."""
        return int(np.unique(self.d).size)

    def check(self, m: int) -> None:
        if self.d.size and self.d.max() > m:
            raise InvalidParameterError(f"demand for file {self.d.max()} exceeds m={m}")


def zipf(m: int, alpha: float) -> PopularityDist:
    """Zipf popularity ``q_f = f**-alpha / sum_i i**-alpha`` over ``m`` files.

    The normalization is an exactly rounded sum (``math.fsum``), so the
    result sums to one to within a couple of ulps for any library size.
    """
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"m must be a positive integer, got {m!r}")
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
        raise InvalidParameterError(f"alpha must be finite and >= 0, got {alpha!r}")
    w = np.arange(1, int(m) + 1, dtype=float) ** -alpha
    q = w / math.fsum(w)
    # renormalize once more so the fsum check in PopularityDist is tight
    q = q / math.fsum(q)
    return PopularityDist(q, alpha=alpha)


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed, ``SeedSequence`` or ``Generator`` to a ``Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_demands(q: PopularityDist, n: int, rng) -> DemandRealization:
    """Draw ``n`` i.i.d. requests from ``q``.

    One uniform variate is consumed per user, in user order, and mapped
    through the cumulative distribution; the result is a deterministic
    function of the stream state.
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    gen = as_generator(rng)
    cdf = np.cumsum(q.q)
    # trailing zero-mass files must stay unreachable despite rounding
    cdf[np.flatnonzero(q.q)[-1]:] = 1.0
    u = gen.random(int(n))
    d = np.searchsorted(cdf, u, side="right") + 1
    d = np.minimum(d, q.m)
    return DemandRealization(d)
