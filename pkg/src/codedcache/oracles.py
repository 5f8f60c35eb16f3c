"""Slow, independent reference implementations used as test oracles.

Nothing here shares code with the fast paths it checks: the edge rule is
re-evaluated pair by pair from cache sets, chromatic numbers come from a
subset dynamic program, ``rho`` is either enumerated exactly or sampled
from its argmax definition, and ``psi`` is evaluated in exact rational
arithmetic.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

import numpy as np

__all__ = [
    "naive_edges",
    "chromatic_by_subsets",
    "chromatic_by_enumeration",
    "rho_enumerated",
    "rho_closed_form_exact",
    "rho_monte_carlo",
    "psi_exact",
]


def naive_edges(vertices, cache_sets) -> set[tuple[int, int]]:
    """Edge set from the textual conflict rule.

    Parameters
    ----------
    vertices : sequence of (file, packet, user)
    cache_sets : mapping user -> set of (file, packet)
    """
    edges = set()
    for i, j in itertools.combinations(range(len(vertices)), 2):
        f1, b1, u1 = vertices[i]
        f2, b2, u2 = vertices[j]
        if (f1, b1) == (f2, b2):
            continue
        if (f1, b1) not in cache_sets[u2] or (f2, b2) not in cache_sets[u1]:
            edges.add((i, j))
    return edges


def chromatic_by_subsets(n_vertices: int, edges) -> int:
    """Chromatic number as the fewest independent sets covering all vertices."""
    if n_vertices == 0:
        return 0
    nbr = [0] * n_vertices
    for i, j in edges:
        nbr[i] |= 1 << j
        nbr[j] |= 1 << i
    full = (1 << n_vertices) - 1
    indep = [False] * (full + 1)
    indep[0] = True
    for s in range(1, full + 1):
        low = (s & -s).bit_length() - 1
        rest = s & ~(1 << low)
        indep[s] = indep[rest] and not (nbr[low] & rest)
    best = [0] + [n_vertices] * full
    for s in range(1, full + 1):
        low = s & -s
        rest = s ^ low
        # independent sets containing the lowest vertex of s
        sub = rest
        while True:
            t = sub | low
            if indep[t] and best[s ^ t] + 1 < best[s]:
                best[s] = best[s ^ t] + 1
            if sub == 0:
                break
            sub = (sub - 1) & rest
    return best[full]


def chromatic_by_enumeration(n_vertices: int, edges) -> int:
    """Smallest k admitting a proper assignment, by trying every assignment."""
    if n_vertices == 0:
        return 0
    edges = list(edges)
    for k in range(1, n_vertices + 1):
        # fix vertex 0 to color 0 to cut symmetric assignments
        for rest in itertools.product(range(k), repeat=n_vertices - 1):
            col = (0, *rest)
            if all(col[i] != col[j] for i, j in edges):
                return k
    return n_vertices


TIE_TOL = 1e-9


def _g_exact(x: Fraction, ell: int, n: int) -> Fraction:
    return x ** (ell - 1) * (1 - x) ** (n - ell + 1)


def _ties(a, b) -> bool:
    """Values this close count as equal; the definition's tie rule then applies."""
    return abs(a - b) <= TIE_TOL * max(abs(a), abs(b))


def _rank(g) -> list[int]:
    """File indices by descending ``g``, near-ties ordered by index."""
    by_value = sorted(range(len(g)), key=lambda j: (-g[j], j))
    groups, last = [], None
    for j in by_value:
        if last is not None and _ties(g[last], g[j]):
            groups[-1].append(j)
        else:
            groups.append([j])
        last = j
    return [j for grp in groups for j in sorted(grp)]


def _loading_exact(p, M) -> list[Fraction]:
    Mf = Fraction(M)
    return [min(Fraction(pf) * Mf, Fraction(1)) for pf in p]


def rho_enumerated(p, q, n: int, M) -> list[list[Fraction]]:
    """Exact ``rho[l-1][f-1]`` by enumerating every request tuple of ``l`` users."""
    x = _loading_exact(p, M)
    qf = [Fraction(v) for v in q]
    m = len(qf)
    out = []
    for ell in range(1, n + 1):
        g = [_g_exact(xf, ell, n) for xf in x]
        row = [Fraction(0)] * m
        for req in itertools.product(range(m), repeat=ell):
            prob = Fraction(1)
            for j in req:
                prob *= qf[j]
            if prob == 0:
                continue
            top = max(g[j] for j in req)
            winner = min(j for j in req if _ties(g[j], top))
            row[winner] += prob
        out.append(row)
    return out


def rho_closed_form_exact(p, q, n: int, M) -> list[list[Fraction]]:
    """Exact rational ``rho`` from the ranking argument (no enumeration)."""
    x = _loading_exact(p, M)
    qf = [Fraction(v) for v in q]
    m = len(qf)
    out = []
    for ell in range(1, n + 1):
        g = [_g_exact(xf, ell, n) for xf in x]
        ranked = _rank(g)
        row = [Fraction(0)] * m
        above = Fraction(0)
        for j in ranked:
            row[j] = (1 - above) ** ell - (1 - above - qf[j]) ** ell
            above += qf[j]
        out.append(row)
    return out


def rho_monte_carlo(p, q, n: int, M, samples: int, rng, ells=None) -> dict[int, np.ndarray]:
    """Sampled ``rho``: draw ``l`` requests, take the argmax of ``g_l`` over the set.

    Ties between equal ``g_l`` values (to a 1e-9 relative tolerance) go to
    the smaller file id.  Returns
    ``{l: estimated row}`` for each ``l`` in ``ells`` (default ``1..n``).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = q.size
    x = np.clip(p * M, 0.0, 1.0)
    ells = range(1, n + 1) if ells is None else ells
    gen = np.random.default_rng(rng)
    req = gen.choice(m, size=(samples, max(ells)), p=q / q.sum()).astype(np.int16)
    out = {}
    for ell in ells:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.power(x, ell - 1) * np.power(1 - x, n - ell + 1)
        sub = req[:, :ell]
        gv = g[sub]
        top = gv.max(axis=1, keepdims=True)
        winner = np.where(gv >= top * (1 - TIE_TOL), sub, m).min(axis=1)
        out[ell] = np.bincount(winner, minlength=m)[:m] / samples
    return out


def psi_exact(p, q, n: int, M, rho=None) -> Fraction:
    """``psi`` as a plain double sum in rational arithmetic.

    ``rho`` defaults to the exact closed form; pass ``rho_enumerated(...)``
    for a fully definition-based value.
    """
    x = _loading_exact(p, M)
    if rho is None:
        rho = rho_closed_form_exact(p, q, n, M)
    total = Fraction(0)
    for ell in range(1, n + 1):
        inner = sum((rho[ell - 1][f] * _g_exact(x[f], ell, n) for f in range(len(x))),
                    Fraction(0))
        total += comb(n, ell) * inner
    return total
