"""Analytic expected-rate bounds and caching-distribution optimization.

The expected delivery rate of random placement plus conflict-graph
coloring is bounded by ``min(psi(p, q), mbar)``, where ``mbar`` is the
expected number of distinct requests and ``psi`` sums, over subset sizes
``l``, the binomially weighted expected maximum of the per-file term

    g_l(f) = (p_f M)**(l - 1) * (1 - p_f M)**(n - l + 1)

over the files requested by ``l`` users.  The probability ``rho[f, l]``
that file ``f`` is that maximizer has a closed form: rank files by
``g_l`` (ties, up to a 1e-9 relative tolerance, go to the lower file id); ``f`` wins iff it is requested and no
higher-ranked file is, so with ``T_f`` the request mass ranked above ``f``

    rho[f, l] = (1 - T_f)**l - (1 - T_f - q_f)**l.

All products are formed in the log domain so that ``n`` in the thousands
neither overflows the binomial coefficients nor underflows the powers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .model import InvalidParameterError, PopularityDist, zipf
from .placement import CachingDist, random_lfu_dist

__all__ = [
    "WrongRegimeError",
    "RateBound",
    "mbar",
    "rho_matrix",
    "psi",
    "rate_upper_bound",
    "mtilde_theorem1",
    "theorem1_bound",
    "theorem1_cap",
    "mtilde_theorem2",
    "theorem2_cap",
    "search_mtilde",
    "optimize_rap",
    "lfu_rate",
    "uniform_rate",
]


TIE_TOL = 1e-9  # relative tolerance (log domain) below which g_l values tie


class WrongRegimeError(InvalidParameterError):
    """A Zipf-regime formula was called outside its range of ``alpha``."""


@dataclass(frozen=True)
class RateBound:
    """Upper bound on the expected rate, ``rub = min(psi, mbar)``.

    ``components[l - 1]`` holds the contribution of subset size ``l`` to
    ``psi`` when requested.
    """

    psi: float
    mbar: float
    rub: float
    components: np.ndarray | None = None


def _qarray(q) -> np.ndarray:
    return q.q if isinstance(q, PopularityDist) else np.asarray(q, dtype=float)


def _loading(p, M=None) -> np.ndarray:
    """Per-file cache loading ``x_f = p_f * M`` clipped to [0, 1]."""
    if isinstance(p, CachingDist):
        M = p.M if M is None else M
        p = p.p
    if M is None:
        raise InvalidParameterError("cache size M is required with a raw p vector")
    return np.clip(np.asarray(p, dtype=float) * M, 0.0, 1.0)


def mbar(q, n: int) -> float:
    """Expected number of distinct files requested by ``n`` i.i.d. users."""
    q = _qarray(q)
    with np.errstate(divide="ignore"):
        miss = np.exp(n * np.log1p(-q))
    return math.fsum(1.0 - miss)


def _log_g(x: np.ndarray, n: int) -> np.ndarray:
    """``log g_l`` for ``l = 1..n``; shape ``x.shape[:-1] + (n, k)``."""
    ell = np.arange(1, n + 1, dtype=float)[:, None]
    x = np.asarray(x)[..., None, :]
    # xlogy/xlog1py give 0 * log 0 = 0, i.e. the 0**0 = 1 convention
    return xlogy(ell - 1, x) + xlog1py(n - ell + 1, -x)


def _log_binom(n: int) -> np.ndarray:
    ell = np.arange(1, n + 1, dtype=float)
    return gammaln(n + 1) - gammaln(ell + 1) - gammaln(n - ell + 1)


def _ranked(x: np.ndarray, w: np.ndarray, n: int):
    """Rank files by ``g_l`` per ``l`` and return (order, log g sorted, rho sorted).

    ``x`` and ``w`` have shape ``(..., k)``; results have shape ``(..., n, k)``.
    """
    lg = _log_g(x, n)
    order = np.argsort(-lg, axis=-1, kind="stable")
    lg_s = np.take_along_axis(lg, order, axis=-1)
    # values equal up to rounding form one tie group, ordered by file id
    with np.errstate(invalid="ignore"):
        gap = lg_s[..., :-1] - lg_s[..., 1:]
    split = np.nan_to_num(gap, nan=0.0) > TIE_TOL
    group = np.concatenate([np.zeros(split.shape[:-1] + (1,), dtype=np.int64),
                            np.cumsum(split, axis=-1)], axis=-1)
    within = np.lexsort((order, group), axis=-1)
    order = np.take_along_axis(order, within, axis=-1)
    lg_s = np.take_along_axis(lg, order, axis=-1)
    w_s = np.take_along_axis(np.broadcast_to(np.asarray(w)[..., None, :], lg.shape), order, axis=-1)
    above = np.cumsum(w_s, axis=-1) - w_s
    above = np.clip(above, 0.0, 1.0)
    below = np.clip(above + w_s, 0.0, 1.0)
    ell = np.arange(1, n + 1, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.exp(ell * np.log1p(-above))
        ratio = ell * (np.log1p(-below) - np.log1p(-above))
        rho = head * -np.expm1(ratio)
    rho = np.where((w_s > 0) & (above < 1.0), rho, 0.0)
    return order, lg_s, rho


def rho_matrix(p, q, n: int, M=None) -> np.ndarray:
    """Probability that file ``f`` maximizes ``g_l`` among the files requested by ``l`` users.

    Returns
    -------
    ndarray, shape (n, m)
        ``rho[l - 1, f - 1]``; every row sums to one.
    """
    x = _loading(p, M)
    qa = _qarray(q)
    if x.size != qa.size:
        raise InvalidParameterError("p and q must cover the same files")
    order, _, rho_s = _ranked(x, qa, int(n))
    rho = np.empty_like(rho_s)
    np.put_along_axis(rho, order, rho_s, axis=-1)
    return rho


def _psi_terms(x: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """Per-(l, rank) terms of psi, shape ``(..., n, k)``."""
    _, lg_s, rho = _ranked(x, w, n)
    with np.errstate(over="ignore"):
        terms = np.exp(_log_binom(n)[:, None] + lg_s) * rho
    return np.where(rho > 0, terms, 0.0)


def _grouped(x: np.ndarray, q: np.ndarray):
    """Merge files with identical loading; psi depends on the groups only."""
    xu, inv = np.unique(x, return_inverse=True)
    return xu, np.bincount(inv.ravel(), weights=q, minlength=xu.size)


def psi(p, q, n: int, M=None, components: bool = False):
    """Coded-delivery rate expression ``psi(p, q)``.

    Parameters
    ----------
    p : CachingDist or array-like
        Caching distribution. A raw vector needs ``M``.
    q : PopularityDist or array-like
        Request probabilities.
    n : int
        Number of users.
    components : bool
        Also return the per-``l`` contributions.
    """
    x = _loading(p, M)
    qa = _qarray(q)
    if x.size != qa.size:
        raise InvalidParameterError("p and q must cover the same files")
    xu, wu = _grouped(x, qa)
    terms = _psi_terms(xu, wu, int(n))
    total = math.fsum(terms.ravel())
    if components:
        return total, np.array([math.fsum(row) for row in terms])
    return total


def rate_upper_bound(p, q, n: int, M=None, components: bool = False) -> RateBound:
    """``RateBound`` with ``rub = min(psi, mbar)``."""
    mb = mbar(q, n)
    if components:
        ps, comp = psi(p, q, n, M, components=True)
    else:
        ps, comp = psi(p, q, n, M), None
    return RateBound(psi=ps, mbar=mb, rub=min(ps, mb), components=comp)


def _psi_batch(P: np.ndarray, q: np.ndarray, n: int, M: float,
               chunk_elems: int = 4_000_000) -> np.ndarray:
    """psi for each row of ``P`` (rows are caching distributions)."""
    P = np.atleast_2d(P)
    G, k = P.shape
    rows = max(1, chunk_elems // max(1, n * k))
    out = np.empty(G)
    for s in range(0, G, rows):
        X = np.clip(P[s:s + rows] * M, 0.0, 1.0)
        W = np.broadcast_to(q, X.shape)
        out[s:s + rows] = _psi_terms(X, W, n).sum(axis=(-2, -1))
    return out


def lfu_rate(q, n: int, M: float) -> float:
    """Expected rate of LFU: the top ``floor(M)`` files cached whole, misses multicast once."""
    qa = _qarray(q)
    k = int(math.floor(M + 1e-9))
    return mbar(qa[k:], n) if k < qa.size else 0.0


def uniform_rate(q, n: int, M: float) -> float:
    """Upper bound for uniform caching (random LFU with ``m_tilde = m``)."""
    qa = _qarray(q)
    if M == 0:
        return mbar(qa, n)
    return rate_upper_bound(random_lfu_dist(qa.size, M, qa.size), qa, n).rub


def mtilde_theorem1(n: int, m: int, M: float, alpha: float) -> int:
    """Random-LFU cutoff prescribed for Zipf exponents ``0 <= alpha < 1``.

    ``min((n (1 - alpha) M / m)**(1/alpha) * m, m)`` rounded to the nearest
    integer and clamped into ``[ceil(M), m]``.  At ``alpha == 0`` the
    expression degenerates, so the exact one-dimensional search on uniform
    popularity is used instead.
    """
    if not 0 <= alpha < 1:
        raise WrongRegimeError(f"formula holds for 0 <= alpha < 1, got alpha={alpha}")
    if not 0 < M <= m:
        raise InvalidParameterError(f"need 0 < M <= m, got M={M}")
    lo = math.ceil(M)
    if alpha == 0:
        return search_mtilde(zipf(m, 0.0), n, m, M)[0]
    base = n * (1 - alpha) * M / m
    log_raw = math.log(base) / alpha + math.log(m)
    raw = m if log_raw >= math.log(m) else math.exp(log_raw)
    return int(min(max(math.floor(raw + 0.5), lo), m))


def theorem1_cap(n: int, m: int, M: float) -> float:
    """Coarse cap ``min(m/M - 1, n, m)``."""
    return min(m / M - 1, n, m)


def theorem1_bound(n: int, m: int, M: float, q, m_tilde: int) -> float:
    """Closed-form random-LFU bound for ``0 <= alpha < 1``.

    ``(m~/M - 1)(1 - (1 - M/m~)**(n Q)) + n (1 - Q)`` capped at ``m``, with
    ``Q`` the request mass of the ``m~`` most popular files.
    """
    if not math.ceil(M) <= m_tilde <= m:
        raise InvalidParameterError(f"m_tilde={m_tilde} outside [ceil(M), m]")
    qa = _qarray(q)
    head = math.fsum(qa[:m_tilde])
    tail = math.fsum(qa[m_tilde:])
    coded = (m_tilde / M - 1) * -math.expm1(n * head * math.log1p(-M / m_tilde)) \
        if m_tilde > M else 0.0
    return min(coded + n * tail, m)


def mtilde_theorem2(m: int) -> int:
    """Cutoff for ``alpha > 1`` with ``n`` growing faster than ``m**alpha``: cache uniformly."""
    return int(m)


def theorem2_cap(m: int, M: float, slack: float = 0.0) -> float:
    """``min(m/M - 1 + slack, m)``; ``slack`` stands in for the vanishing term."""
    return min(m / M - 1 + slack, m)


def search_mtilde(q, n: int, m: int, M: float) -> tuple[int, float]:
    """Best random-LFU cutoff by exhaustive scan of ``ceil(M)..m``.

    Returns ``(m_tilde, rub)``; ties go to the smallest cutoff.
    """
    if M <= 0:
        raise InvalidParameterError("search needs M > 0")
    qa = _qarray(q)
    if qa.size != m:
        raise InvalidParameterError(f"q has {qa.size} files, m={m}")
    mb = mbar(qa, n)
    head = np.cumsum(qa)
    best, best_val = None, math.inf
    for mt in range(math.ceil(M), m + 1):
        Q = min(head[mt - 1], 1.0) if mt < m else 1.0
        x = np.array([0.0, min(M / mt, 1.0)])
        w = np.array([1.0 - Q, Q])
        val = min(math.fsum(_psi_terms(x, w, n).ravel()), mb)
        if val < best_val:
            best, best_val = mt, val
    return best, best_val


def _simplex_grid(m: int, steps: int, cap: int) -> np.ndarray:
    """All compositions of ``steps`` into ``m`` parts, each at most ``cap``."""
    pts = []
    for head in itertools.product(range(min(cap, steps) + 1), repeat=m - 1):
        last = steps - sum(head)
        if 0 <= last <= cap:
            pts.append((*head, last))
    return np.array(pts, dtype=float) / steps


def optimize_rap(q, n: int, m: int, M: float, budget: int = 200_000,
                 tol: float = 1e-7) -> tuple[CachingDist, float]:
    """Caching distribution minimizing the rate bound.

    For ``m <= 4`` a simplex grid at resolution 0.01 (coarsened if it would
    exceed ``budget`` points) seeds the search; otherwise the best random-LFU
    cutoff does.  Pairwise mass transfers between files then refine the
    incumbent, accepting only moves that lower the bound (ties broken on
    ``psi``), so the result never loses to its starting point.

    Returns
    -------
    (CachingDist, float)
        The distribution and its ``rub``.
    """
    if M <= 0:
        raise InvalidParameterError("optimization needs M > 0")
    qa = _qarray(q)
    if qa.size != m:
        raise InvalidParameterError(f"q has {qa.size} files, m={m}")
    mb = mbar(qa, n)
    cap = 1.0 / M
    evals = 0

    def key(p):
        nonlocal evals
        evals += 1
        ps = math.fsum(_psi_terms(*_grouped(np.clip(p * M, 0, 1), qa), n).ravel())
        return (min(ps, mb), ps)

    mt, _ = search_mtilde(qa, n, m, M)
    best_p = random_lfu_dist(m, M, mt).p.copy()
    best_k = key(best_p)

    if m <= 4:
        steps = 100
        while math.comb(steps + m - 1, m - 1) > budget and steps > 4:
            steps //= 2
        grid = _simplex_grid(m, steps, int(math.floor(steps * cap + 1e-9)))
        if len(grid):
            ps = _psi_batch(grid, qa, n, M)
            evals += len(grid)
            rub = np.minimum(ps, mb)
            i = int(np.lexsort((ps, rub))[0])
            if (rub[i], ps[i]) < best_k:
                best_p, best_k = grid[i].copy(), key(grid[i])

    step = 0.01 if m <= 4 else 0.5 / m
    while step > tol and evals < budget:
        improved = False
        for i, j in itertools.permutations(range(m), 2):
            delta = min(step, best_p[i], cap - best_p[j])
            if delta <= 0:
                continue
            trial = best_p.copy()
            trial[i] -= delta
            trial[j] += delta
            k = key(trial)
            if k < best_k:
                best_p, best_k, improved = trial, k, True
            if evals >= budget:
                break
        if not improved:
            step /= 2
    best_p = np.clip(best_p, 0.0, cap)
    best_p /= math.fsum(best_p)
    dist = CachingDist(best_p, M)
    return dist, rate_upper_bound(dist, qa, n).rub
