"""Caching distributions and decentralized random cache filling.

Every user fills its cache on its own: for each file ``f`` it stores a
uniformly random subset of ``quota[f]`` distinct packets, where the quotas
are the per-file share ``p_f * M * B`` of the packet budget.  The subset
drawn by user ``u`` depends only on the caching distribution, the system
parameters and a random substream keyed by ``u``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .model import InvalidParameterError, SystemParams

__all__ = [
    "CachingDist",
    "CacheConfig",
    "random_lfu_dist",
    "lfu_dist",
    "uniform_dist",
    "apportion_quotas",
    "fill_caches",
    "user_seed",
]

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class CachingDist:
    """Caching distribution ``p`` built for cache size ``M``.

    ``p[f - 1]`` is the fraction of a user's cache devoted to file ``f``.
    Feasibility requires ``sum(p) == 1`` and ``p_f <= 1/M``, so that no file
    is asked to contribute more packets than it has.
    """

    p: np.ndarray
    M: float

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidParameterError("p must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameterError("p entries must be finite and non-negative")
        if abs(math.fsum(p) - 1.0) > _SUM_TOL:
            raise InvalidParameterError(f"p must sum to 1, sums to {math.fsum(p)!r}")
        if self.M < 0 or self.M > p.size:
            raise InvalidParameterError(f"M={self.M} outside [0, m={p.size}]")
        if self.M > 0 and np.any(p * self.M > 1 + _SUM_TOL):
            raise InvalidParameterError("p_f must not exceed 1/M")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return self.p.size

    def __len__(self):
        return self.p.size


def random_lfu_dist(m: int, M: float, m_tilde: int) -> CachingDist:
    """Uniform caching over the ``m_tilde`` most popular files.

    ``m_tilde == ceil(M)`` is LFU, ``m_tilde == m`` is uniform caching.
    """
    if M <= 0:
        raise InvalidParameterError("random LFU needs M > 0")
    if int(m_tilde) != m_tilde or not math.ceil(M) <= m_tilde <= m:
        raise InvalidParameterError(
            f"m_tilde must be an integer in [ceil(M)={math.ceil(M)}, m={m}], got {m_tilde!r}")
    p = np.zeros(int(m))
    p[: int(m_tilde)] = 1.0 / m_tilde
    return CachingDist(p, M)


def lfu_dist(m: int, M: float) -> CachingDist:
    return random_lfu_dist(m, M, math.ceil(M))


def uniform_dist(m: int, M: float) -> CachingDist:
    return random_lfu_dist(m, M, m)


def apportion_quotas(p: np.ndarray, M: float, B: int) -> np.ndarray:
    """Integer per-file packet quotas summing to ``floor(M * B)``.

    Largest-remainder apportionment of the budget proportionally to ``p``,
    never exceeding ``B`` packets per file.  When every ``p_f * M * B`` is an
    integer the quotas equal it exactly.  Ties in the remainder go to the
    lower file id.
    """
    p = np.asarray(p, dtype=float)
    budget = int(math.floor(M * B + 1e-9))
    if budget == 0:
        return np.zeros(p.size, dtype=np.int64)
    raw = np.minimum(p * M * B, B)
    base = np.floor(raw + 1e-9).astype(np.int64)
    frac = np.where(base < B, raw - base, -np.inf)
    short = budget - int(base.sum())
    if short > 0:
        order = np.lexsort((np.arange(p.size), -frac))
        take = order[:short]
        if np.any(~np.isfinite(frac[take])):
            raise RuntimeError("quota apportionment infeasible: budget exceeds m * B")
        base[take] += 1
    elif short < 0:
        # p summed slightly above one; trim the smallest remainders first
        order = np.lexsort((-np.arange(p.size), frac))
        order = order[base[order] > 0][:-short]
        base[order] -= 1
    if base.sum() != budget or np.any(base > B):
        raise RuntimeError("quota apportionment failed")
    return base


def user_seed(root, user: int) -> np.random.SeedSequence:
    """Substream for one user, derived from ``root`` and the 0-based user index."""
    if not isinstance(root, np.random.SeedSequence):
        root = np.random.SeedSequence(root)
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + (int(user),))


class CacheConfig:
    """Packet-level cache contents of every user.

    ``cached[u, f - 1, b - 1]`` is True when user ``u`` (0-based) holds
    packet ``b`` of file ``f``.  Packet indices are 1-based like file ids.
    """

    def __init__(self, params: SystemParams, cached: np.ndarray, quotas: np.ndarray):
        cached = np.asarray(cached, dtype=bool)
        if cached.shape != (params.n, params.m, params.B):
            raise InvalidParameterError(
                f"cache array shape {cached.shape} != {(params.n, params.m, params.B)}")
        self.params = params
        self.cached = cached
        self.quotas = np.asarray(quotas, dtype=np.int64)

    @classmethod
    def empty(cls, params: SystemParams) -> "CacheConfig":
        return cls(params, np.zeros((params.n, params.m, params.B), dtype=bool),
                   np.zeros(params.m, dtype=np.int64))

    @property
    def flat(self) -> np.ndarray:
        """``(n, m * B)`` view indexed by global packet id ``(f - 1) * B + (b - 1)``."""
        p = self.params
        return self.cached.reshape(p.n, p.m * p.B)

    def packets(self, user: int, f: int) -> set[int]:
        """1-based packet indices of file ``f`` cached by user ``user``."""
        return set((np.flatnonzero(self.cached[user, f - 1]) + 1).tolist())

    def has(self, user: int, f: int, b: int) -> bool:
        return bool(self.cached[user, f - 1, b - 1])

    def load(self) -> np.ndarray:
        """Number of cached packets per user."""
        return self.cached.sum(axis=(1, 2))

    def dumps(self) -> str:
        """Text dump, one line per non-empty ``(user, file)`` pair.

        Format: ``u f b1 b2 ...`` with 0-based user, 1-based file and packet
        indices, preceded by a header ``# n m B M``.
        """
        p = self.params
        out = io.StringIO()
        out.write(f"# n={p.n} m={p.m} B={p.B} M={p.M}\n")
        for u in range(p.n):
            for f in range(p.m):
                idx = np.flatnonzero(self.cached[u, f])
                if idx.size:
                    out.write(f"{u} {f + 1} " + " ".join(map(str, idx + 1)) + "\n")
        return out.getvalue()


def fill_caches(p: CachingDist, params: SystemParams, rng=None) -> CacheConfig:
    """Fill every user's cache independently at random.

    Parameters
    ----------
    p : CachingDist
        Caching distribution; must have been built for ``params.M``.
    params : SystemParams
        Network parameters.
    rng : int or SeedSequence, optional
        Root of the per-user substreams. Defaults to ``params.seed``.

    Returns
    -------
    CacheConfig
        Caches where user ``u`` holds ``quota[f]`` distinct, uniformly chosen
        packets of each file ``f``.
    """
    if p.m != params.m:
        raise InvalidParameterError(f"p has {p.m} files, params.m={params.m}")
    if params.M == 0:
        return CacheConfig.empty(params)
    if not math.isclose(p.M, params.M):
        raise InvalidParameterError(f"p built for M={p.M}, params.M={params.M}")
    root = params.seed if rng is None else rng
    if isinstance(root, np.random.Generator):
        raise InvalidParameterError("fill_caches needs a seed or SeedSequence, not a Generator")
    quotas = apportion_quotas(p.p, params.M, params.B)
    if quotas.sum() > params.packet_budget:
        raise RuntimeError("per-user quota exceeds the packet budget")
    cached = np.zeros((params.n, params.m, params.B), dtype=bool)
    files = np.flatnonzero(quotas)
    for u in range(params.n):
        gen = np.random.default_rng(user_seed(root, u))
        for f in files:
            k = quotas[f]
            if k == params.B:
                cached[u, f, :] = True
            else:
                cached[u, f, gen.choice(params.B, size=k, replace=False)] = True
    return CacheConfig(params, cached, quotas)
