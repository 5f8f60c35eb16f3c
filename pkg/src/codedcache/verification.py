"""Randomized cross-checks of the fast paths against the oracles.

Each suite returns a ``SuiteResult``; a failing suite carries the first
counterexample it found so it can be reproduced by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis, delivery, oracles
from .model import PopularityDist, SystemParams, sample_demands
from .placement import CachingDist, fill_caches, random_lfu_dist

__all__ = ["SuiteResult", "random_instance", "random_caching_dist", "edge_rule_suite",
           "coloring_suite", "rho_suite", "psi_suite", "decode_suite", "run_all"]


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: int = 0
    counterexample: dict | None = field(default=None)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def fail(self, **details):
        self.failures += 1
        if self.counterexample is None:
            self.counterexample = details


def random_caching_dist(m: int, M: float, gen: np.random.Generator) -> CachingDist:
    """Random feasible caching distribution (``p_f <= 1/M``)."""
    if M == 0:
        return CachingDist(np.full(m, 1.0 / m), 0.0)
    kind = gen.integers(3)
    if kind == 0:
        return random_lfu_dist(m, M, int(gen.integers(math.ceil(M), m + 1)))
    cap = 1.0 / M
    # mix a Dirichlet draw with uniform until the cap holds
    p = gen.dirichlet(np.ones(m))
    u = np.full(m, 1.0 / m)
    t = 1.0
    while np.any(t * p + (1 - t) * u > cap + 1e-12):
        t /= 2
    p = t * p + (1 - t) * u
    return CachingDist(p / p.sum(), M)


def random_instance(gen: np.random.Generator, n_max=4, m_max=3, B_max=3, Ms=None):
    n = int(gen.integers(1, n_max + 1))
    m = int(gen.integers(1, m_max + 1))
    B = int(gen.integers(1, B_max + 1))
    choices = [M for M in (Ms if Ms is not None else (0, 0.5, 1, 1.5, 2)) if M <= m]
    M = float(choices[int(gen.integers(len(choices)))])
    seed = int(gen.integers(2**32))
    params = SystemParams(n, m, M, B, seed)
    p = random_caching_dist(m, M, gen)
    caches = fill_caches(p, params)
    q = gen.dirichlet(np.ones(m))
    demands = sample_demands(_pop(q), n, gen)
    return params, p, caches, demands


def _pop(q):
    q = np.asarray(q, dtype=float)
    return PopularityDist(q / q.sum())


def _cache_sets(caches):
    prm = caches.params
    return {u: {(f, b) for f in range(1, prm.m + 1) for b in caches.packets(u, f)}
            for u in range(prm.n)}


def edge_rule_suite(seeds, builder=delivery.build_conflict_graph) -> SuiteResult:
    res = SuiteResult("edge_rule")
    for s in seeds:
        gen = np.random.default_rng([s, 1])
        params, _, caches, demands = random_instance(gen)
        g = builder(caches, demands)
        want = oracles.naive_edges(g.vertices(), _cache_sets(caches))
        got = g.edges()
        res.checked += 1
        if got != want:
            diff = sorted(got ^ want)
            i, j = diff[0]
            res.fail(seed=s, params=params, demands=demands.d.tolist(),
                     pair=(g.vertex(i), g.vertex(j)), in_graph=(i, j) in got)
    return res


def coloring_suite(seeds, max_vertices=12) -> SuiteResult:
    res = SuiteResult("coloring")
    for s in seeds:
        gen = np.random.default_rng([s, 2])
        V = int(gen.integers(0, max_vertices + 1))
        dens = gen.uniform(0.1, 0.9)
        edges = [(i, j) for i in range(V) for j in range(i + 1, V) if gen.random() < dens]
        g = delivery.ConflictGraph.from_edges(V, edges)
        chi = oracles.chromatic_by_subsets(V, edges)
        exact = delivery.exact_chromatic(g)
        res.checked += 1
        for order in delivery.COLORING_POLICIES:
            col = delivery.greedy_color(g, order, rng=s)
            if not delivery.is_proper(g, col) or col.K < chi:
                res.fail(seed=s, V=V, edges=edges, order=order, K=col.K, chi=chi)
        if exact != chi:
            res.fail(seed=s, V=V, edges=edges, exact=exact, chi=chi)
    return res


def rho_suite(seeds, samples=200_000, n_sigma=5.0) -> SuiteResult:
    """Closed-form rho against exact enumeration and against sampling."""
    res = SuiteResult("rho")
    for s in seeds:
        gen = np.random.default_rng([s, 3])
        m = int(gen.integers(1, 5))
        n = int(gen.integers(1, 6))
        M = float(gen.choice([M for M in (0.5, 1, 2, 3) if M <= m]))
        p = random_caching_dist(m, M, gen)
        q = gen.dirichlet(np.ones(m))
        rho = analysis.rho_matrix(p, q, n)
        exact = np.array(oracles.rho_enumerated(p.p, q, n, M), dtype=float)
        res.checked += 1
        if not np.allclose(rho, exact, atol=1e-9):
            res.fail(seed=s, kind="enumeration", p=p.p.tolist(), q=q.tolist(), n=n, M=M)
            continue
        ell = int(gen.integers(1, n + 1))
        est = oracles.rho_monte_carlo(p.p, q, n, M, samples, [s, 4], ells=[ell])[ell]
        sd = np.sqrt(rho[ell - 1] * (1 - rho[ell - 1]) / samples)
        if np.any(np.abs(est - rho[ell - 1]) > n_sigma * sd + 1e-12):
            res.fail(seed=s, kind="monte-carlo", p=p.p.tolist(), q=q.tolist(), n=n, M=M, ell=ell)
    return res


def psi_suite(seeds) -> SuiteResult:
    res = SuiteResult("psi")
    for s in seeds:
        gen = np.random.default_rng([s, 5])
        m = int(gen.integers(1, 5))
        n = int(gen.integers(1, 7))
        M = float(gen.choice([M for M in (0, 0.5, 1, 2, 3) if M <= m]))
        p = random_caching_dist(m, M, gen)
        q = gen.dirichlet(np.ones(m))
        fast = analysis.psi(p, q, n)
        exact = float(oracles.psi_exact(p.p, q, n, M))
        res.checked += 1
        if not math.isclose(fast, exact, rel_tol=1e-9, abs_tol=1e-12):
            res.fail(seed=s, p=p.p.tolist(), q=q.tolist(), n=n, M=M, fast=fast, exact=exact)
    return res


def decode_suite(seeds, payload_bytes=16) -> SuiteResult:
    res = SuiteResult("decode")
    for s in seeds:
        gen = np.random.default_rng([s, 6])
        params, _, caches, demands = random_instance(gen, n_max=6, m_max=6, B_max=6,
                                                     Ms=(0, 1, 2))
        g = delivery.build_conflict_graph(caches, demands)
        col = delivery.greedy_color(g, "degree")
        blob = gen.integers(0, 256, size=(params.m, params.B, payload_bytes), dtype=np.uint8)
        lib = {(f + 1, b + 1): blob[f, b].tobytes()
               for f in range(params.m) for b in range(params.B)}
        code = delivery.encode(g, col, lib)
        res.checked += 1
        for u in range(params.n):
            try:
                got = delivery.decode(u, code, caches, demands, lib)
            except delivery.DecodeError as exc:
                res.fail(seed=s, user=u, error=str(exc))
                break
            if any(lib[k] != v for k, v in got.items()):
                res.fail(seed=s, user=u, error="payload mismatch")
                break
    return res


def run_all(seeds, builder=delivery.build_conflict_graph, rho_samples=200_000) -> list[SuiteResult]:
    seeds = list(seeds)
    return [
        edge_rule_suite(seeds, builder),
        coloring_suite(seeds),
        rho_suite(seeds, samples=rho_samples),
        psi_suite(seeds),
        decode_suite(seeds),
    ]
