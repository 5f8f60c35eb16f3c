import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedcache import oracles
from codedcache.delivery import (COLORING_POLICIES, Coloring, ConflictGraph, ContractViolation,
                                 DecodeError, MulticastCode, SizeLimitError,
                                 build_conflict_graph, decode,
                                 delivery_rate, encode, exact_chromatic, greedy_color, is_proper)
from codedcache.model import DemandRealization, SystemParams
from codedcache.placement import CacheConfig, CachingDist, fill_caches
from codedcache.verification import random_instance


def _caches(n, m, B, held, M=1.0):
    """CacheConfig from {user: [(file, packet), ...]} (1-based file/packet)."""
    cached = np.zeros((n, m, B), dtype=bool)
    for u, pkts in held.items():
        for f, b in pkts:
            cached[u, f - 1, b - 1] = True
    return CacheConfig(SystemParams(n, m, M, B), cached, cached[0].sum(axis=1))


def _library(m, B, size=8, seed=0):
    gen = np.random.default_rng(seed)
    return {(f, b): gen.integers(0, 256, size, dtype=np.uint8).tobytes()
            for f in range(1, m + 1) for b in range(1, B + 1)}


def _cache_sets(caches):
    prm = caches.params
    return {u: {(f, b) for f in range(1, prm.m + 1) for b in caches.packets(u, f)}
            for u in range(prm.n)}


def test_empty_caches_distinct_files_form_clique():
    caches = _caches(2, 2, 1, {}, M=0.0)
    g = build_conflict_graph(caches, DemandRealization([1, 2]))
    assert g.n_vertices == 2 and g.n_edges() == 1
    col = greedy_color(g)
    assert col.K == 2
    assert delivery_rate(g, col, DemandRealization([1, 2]), 1) == 2.0


def test_same_file_requests_share_one_vertex_color():
    caches = _caches(3, 2, 1, {}, M=0.0)
    d = DemandRealization([1, 1, 1])
    g = build_conflict_graph(caches, d)
    assert g.n_vertices == 3 and g.n_edges() == 0
    assert greedy_color(g).K == 1
    assert delivery_rate(g, greedy_color(g), d, 1) == 1.0


def test_classic_xor_pair():
    # user 0 holds A2 wants A1; user 1 holds A1 wants A2 -> one transmission A1^A2
    caches = _caches(2, 1, 2, {0: [(1, 2)], 1: [(1, 1)]})
    d = DemandRealization([1, 1])
    g = build_conflict_graph(caches, d)
    assert g.vertices() == [(1, 1, 0), (1, 2, 1)]
    assert g.n_edges() == 0
    col = greedy_color(g)
    lib = _library(1, 2)
    code = encode(g, col, lib)
    assert code.K == 1
    want = bytes(a ^ b for a, b in zip(lib[(1, 1)], lib[(1, 2)]))
    assert code.transmissions[0].codeword == want
    assert decode(0, code, caches, d, lib) == {(1, 1): lib[(1, 1)]}
    assert decode(1, code, caches, d, lib) == {(1, 2): lib[(1, 2)]}
    assert delivery_rate(g, col, d, 2) == 0.5


def test_one_sided_side_information_still_conflicts():
    caches = _caches(2, 2, 1, {0: [(2, 1)]})
    g = build_conflict_graph(caches, DemandRealization([1, 2]))
    assert g.n_edges() == 1


def test_full_caches_give_empty_graph():
    params = SystemParams(3, 2, 2, 4)
    caches = fill_caches(CachingDist([0.5, 0.5], 2), params)
    d = DemandRealization([1, 2, 1])
    g = build_conflict_graph(caches, d)
    assert g.n_vertices == 0
    col = greedy_color(g)
    assert col.K == 0
    assert delivery_rate(g, col, d, 4) == 0.0
    assert encode(g, col, _library(2, 4)).K == 0


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_edge_rule_matches_naive(seed):
    gen = np.random.default_rng(seed)
    _, _, caches, demands = random_instance(gen, n_max=5, m_max=4, B_max=4)
    g = build_conflict_graph(caches, demands)
    assert g.edges() == oracles.naive_edges(g.vertices(), _cache_sets(caches))


def test_vertices_are_missing_requested_packets():
    gen = np.random.default_rng(5)
    _, _, caches, demands = random_instance(gen, n_max=5, m_max=4, B_max=5)
    g = build_conflict_graph(caches, demands)
    want = sorted((int(demands.d[u]), b, u)
                  for u in range(caches.params.n)
                  for b in range(1, caches.params.B + 1)
                  if not caches.has(u, int(demands.d[u]), b))
    assert g.vertices() == want


def _random_graph(seed, vmax=12):
    gen = np.random.default_rng(seed)
    V = int(gen.integers(0, vmax + 1))
    dens = gen.uniform(0.05, 0.95)
    edges = [(i, j) for i in range(V) for j in range(i + 1, V) if gen.random() < dens]
    return V, edges


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), order=st.sampled_from(COLORING_POLICIES))
def test_greedy_is_proper_and_at_least_chromatic(seed, order):
    V, edges = _random_graph(seed)
    g = ConflictGraph.from_edges(V, edges)
    col = greedy_color(g, order, rng=seed)
    assert is_proper(g, col)
    assert col.K >= oracles.chromatic_by_subsets(V, edges)
    if V:
        assert sorted(set(col.color.tolist())) == list(range(1, col.K + 1))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_exact_chromatic_matches_subset_dp(seed):
    V, edges = _random_graph(seed)
    g = ConflictGraph.from_edges(V, edges)
    assert exact_chromatic(g) == oracles.chromatic_by_subsets(V, edges)


@pytest.mark.parametrize("seed", range(30))
def test_chromatic_oracles_agree(seed):
    V, edges = _random_graph(seed, vmax=7)
    assert oracles.chromatic_by_subsets(V, edges) == oracles.chromatic_by_enumeration(V, edges)


@pytest.mark.parametrize("V, edges, chi", [
    (5, [(i, (i + 1) % 5) for i in range(5)], 3),          # odd cycle
    (4, [(i, j) for i in range(4) for j in range(i + 1, 4)], 4),
    (6, [(i, j) for i in range(3) for j in range(3, 6)], 2),  # K3,3
])
def test_exact_chromatic_examples(V, edges, chi):
    assert exact_chromatic(ConflictGraph.from_edges(V, edges)) == chi


def test_exact_chromatic_refuses_large_graphs():
    with pytest.raises(SizeLimitError):
        exact_chromatic(ConflictGraph.from_edges(21, []))


def test_encode_rejects_improper_coloring():
    g = ConflictGraph.from_edges(2, [(0, 1)])
    with pytest.raises(ContractViolation):
        encode(g, Coloring(np.array([1, 1]), 1), {})


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), order=st.sampled_from(COLORING_POLICIES))
def test_every_user_decodes(seed, order):
    gen = np.random.default_rng(seed)
    params, _, caches, demands = random_instance(gen, n_max=6, m_max=5, B_max=5, Ms=(0, 1, 2))
    g = build_conflict_graph(caches, demands)
    col = greedy_color(g, order, rng=seed)
    lib = _library(params.m, params.B, seed=seed % 1000)
    code = encode(g, col, lib)
    assert code.K == col.K
    for u in range(params.n):
        got = decode(u, code, caches, demands, lib)
        f = int(demands.d[u])
        missing = {(f, b) for b in range(1, params.B + 1) if not caches.has(u, f, b)}
        assert set(got) == missing
        assert all(got[k] == lib[k] for k in got)


def test_decode_fails_when_packet_missing_from_code():
    caches = _caches(2, 1, 2, {0: [(1, 2)], 1: [(1, 1)]})
    d = DemandRealization([1, 1])
    g = build_conflict_graph(caches, d)
    code = encode(g, greedy_color(g), _library(1, 2))
    with pytest.raises(DecodeError):
        decode(0, MulticastCode((), code.B, code.payload_size), caches, d, _library(1, 2))


def test_rate_capped_by_distinct_files():
    caches = _caches(2, 2, 1, {}, M=0.0)
    d = DemandRealization([1, 2])
    g = build_conflict_graph(caches, d)
    assert delivery_rate(g, Coloring(np.array([1, 2]), 2), d, 1) == 2.0
    assert delivery_rate(g, Coloring(np.array([1, 2]), 2), DemandRealization([1, 1]), 1) == 1.0


def test_rate_monotone_under_cache_growth():
    # adding cached packets can only remove vertices and edges
    gen = np.random.default_rng(2)
    for _ in range(30):
        _, _, small, demands = random_instance(gen, n_max=5, m_max=4, B_max=4)
        extra = gen.random(small.cached.shape) < 0.3
        big = CacheConfig(small.params, small.cached | extra, small.quotas)
        g_small = build_conflict_graph(small, demands)
        g_big = build_conflict_graph(big, demands)
        assert g_big.n_vertices <= g_small.n_vertices
        if g_small.n_vertices <= 20:
            assert exact_chromatic(g_big) <= exact_chromatic(g_small)


def test_vertex_guard():
    caches = _caches(4, 2, 10, {}, M=0.0)
    with pytest.raises(SizeLimitError):
        build_conflict_graph(caches, DemandRealization([1, 2, 1, 2]), max_vertices=39)
    assert build_conflict_graph(caches, DemandRealization([1, 2, 1, 2]),
                                max_vertices=40).n_vertices == 40


def test_adjlist_dump_round_trips():
    V, edges = 5, [(0, 1), (1, 2), (3, 4), (0, 4)]
    g = ConflictGraph.from_edges(V, edges)
    buf = io.StringIO()
    text = g.write_adjlist(buf)
    assert buf.getvalue() == text
    got = set()
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        head, *rest = map(int, line.split())
        got |= {(min(head, r), max(head, r)) for r in rest}
    assert got == set(edges)
