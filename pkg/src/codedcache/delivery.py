"""Coded multicast delivery by coloring the conflict graph.

Each (requested packet, requesting user) pair is a vertex.  Two vertices
conflict unless they carry the same packet or each requester already holds
the other's packet.  A proper coloring therefore partitions the requests
into groups that can share one XOR transmission, and the number of colors
divided by ``B`` is the delivery rate in file units.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import DemandRealization, InvalidParameterError, as_generator
from .placement import CacheConfig

__all__ = [
    "SizeLimitError",
    "ContractViolation",
    "DecodeError",
    "ConflictGraph",
    "Coloring",
    "Transmission",
    "MulticastCode",
    "build_conflict_graph",
    "greedy_color",
    "exact_chromatic",
    "is_proper",
    "encode",
    "decode",
    "delivery_rate",
    "COLORING_POLICIES",
]

COLORING_POLICIES = ("degree", "dsatur", "random")


class SizeLimitError(RuntimeError):
    """A computation was refused because the instance is too large."""


class ContractViolation(ValueError):
    """An input violated an operation's precondition (e.g. improper coloring)."""


class DecodeError(RuntimeError):
    """A user could not recover a requested packet from the transmissions."""


class ConflictGraph:
    """Conflict graph over (packet, requester) vertices.

    Attributes
    ----------
    file, packet : ndarray of int
        1-based file id and packet index of each vertex.
    user : ndarray of int
        0-based index of the requesting user.
    adj : ndarray of bool, shape (V, V)
        Symmetric, irreflexive adjacency matrix.
    B : int
        Packets per file of the underlying system.
    """

    def __init__(self, file, packet, user, adj, B):
        self.file = np.asarray(file, dtype=np.int64)
        self.packet = np.asarray(packet, dtype=np.int64)
        self.user = np.asarray(user, dtype=np.int64)
        self.adj = np.asarray(adj, dtype=bool)
        self.B = int(B)

    @property
    def n_vertices(self) -> int:
        return self.file.size

    def __len__(self):
        return self.file.size

    def vertex(self, i: int) -> tuple[int, int, int]:
        """``(file, packet, user)`` of vertex ``i``."""
        return int(self.file[i]), int(self.packet[i]), int(self.user[i])

    def vertices(self) -> list[tuple[int, int, int]]:
        return [self.vertex(i) for i in range(self.n_vertices)]

    def degree(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def edges(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adj, 1))
        return set(zip(i.tolist(), j.tolist()))

    def n_edges(self) -> int:
        return int(np.triu(self.adj, 1).sum())

    def global_packet(self) -> np.ndarray:
        return (self.file - 1) * self.B + (self.packet - 1)

    @classmethod
    def from_edges(cls, n_vertices: int, edges) -> "ConflictGraph":
        """Bare graph with the given edges, for coloring tests and tools."""
        adj = np.zeros((n_vertices, n_vertices), dtype=bool)
        for i, j in edges:
            if i == j:
                raise InvalidParameterError("self-loops are not allowed")
            adj[i, j] = adj[j, i] = True
        idx = np.arange(n_vertices)
        return cls(np.ones(n_vertices), idx + 1, np.zeros(n_vertices), adj, max(n_vertices, 1))

    def write_adjlist(self, fh=None) -> str:
        """Adjacency-list text dump readable by ``networkx.read_adjlist``.

        Comment lines give each vertex's ``file packet user``; data lines list
        a vertex followed by its higher-numbered neighbors.
        """
        out = io.StringIO()
        out.write(f"# conflict graph V={self.n_vertices} E={self.n_edges()} B={self.B}\n")
        for i in range(self.n_vertices):
            f, b, u = self.vertex(i)
            out.write(f"# {i} file={f} packet={b} user={u}\n")
        upper = np.triu(self.adj, 1)
        for i in range(self.n_vertices):
            nbrs = np.flatnonzero(upper[i])
            out.write(" ".join(map(str, [i, *nbrs.tolist()])) + "\n")
        text = out.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def build_conflict_graph(caches: CacheConfig, demands: DemandRealization,
                         max_vertices: int | None = None) -> ConflictGraph:
    """Conflict graph for the given cache contents and demands.

    User ``u`` requests exactly the packets of file ``d[u]`` missing from
    its cache.  Vertices are ordered by (file, packet, user).
    """
    params = caches.params
    if demands.n != params.n:
        raise InvalidParameterError(f"{demands.n} demands for {params.n} users")
    demands.check(params.m)
    B = params.B
    d0 = demands.d - 1
    missing = ~caches.cached[np.arange(params.n), d0, :]  # (n, B)
    users, pkts = np.nonzero(missing)
    files = d0[users]
    order = np.lexsort((users, pkts, files))
    users, pkts, files = users[order], pkts[order], files[order]
    V = users.size
    if max_vertices is not None and V > max_vertices:
        raise SizeLimitError(f"conflict graph would have {V} vertices (cap {max_vertices})")
    gp = files * B + pkts
    # held[i, j]: packet of vertex i is in the cache of the user requesting j
    held = caches.flat[:, gp][users].T
    adj = gp[:, None] != gp[None, :]
    adj &= ~(held & held.T)
    return ConflictGraph(files + 1, pkts + 1, users, adj, B)


@dataclass(frozen=True)
class Coloring:
    """Vertex coloring with colors ``1..K``."""

    color: np.ndarray
    K: int

    def classes(self) -> list[np.ndarray]:
        """Vertex indices of each color class, in color order."""
        return [np.flatnonzero(self.color == c) for c in range(1, self.K + 1)]


def is_proper(g: ConflictGraph, coloring: Coloring) -> bool:
    c = np.asarray(coloring.color)
    if c.size != g.n_vertices:
        return False
    if c.size == 0:
        return True
    return not np.any(g.adj & (c[:, None] == c[None, :]))


def _first_fit(nbrs: list[np.ndarray], order) -> np.ndarray:
    colors = np.full(len(nbrs), -1, dtype=np.int64)
    for v in order:
        used = colors[nbrs[v]]
        used = used[used >= 0]
        if used.size == 0:
            colors[v] = 0
            continue
        mark = np.zeros(used.size + 1, dtype=bool)
        mark[used[used <= used.size]] = True
        colors[v] = int(np.argmin(mark))
    return colors


def _dsatur(adj: np.ndarray) -> np.ndarray:
    V = adj.shape[0]
    deg = adj.sum(axis=1)
    colors = np.full(V, -1, dtype=np.int64)
    seen = np.zeros((V, int(deg.max(initial=0)) + 2), dtype=bool)
    sat = np.zeros(V, dtype=np.int64)
    idx = np.arange(V)
    for _ in range(V):
        # max saturation, then max degree, then lowest index
        key = np.where(colors < 0, sat * (V + 1) + deg, -1)
        v = int(np.argmax(key))
        c = int(np.argmin(seen[v]))
        colors[v] = c
        nb = idx[adj[v]]
        fresh = nb[~seen[nb, c]]
        seen[fresh, c] = True
        sat[fresh] += 1
    return colors


def greedy_color(g: ConflictGraph, order: str = "degree", restarts: int = 20,
                 rng=None) -> Coloring:
    """Proper coloring by first-fit greedy.

    Parameters
    ----------
    g : ConflictGraph
    order : {"degree", "dsatur", "random"}
        ``"degree"`` colors vertices by descending degree, ties broken by
        vertex index, i.e. by (file, packet, user).  ``"dsatur"`` picks the
        most saturated vertex next.  ``"random"`` keeps the best of the
        degree order, DSATUR and ``restarts`` random orders.
    restarts : int
        Number of random orders tried under ``"random"``.
    rng : seed or Generator, optional
        Stream for the random orders.

    Returns
    -------
    Coloring
        Uses at most ``max_degree + 1`` colors.
    """
    V = g.n_vertices
    if V == 0:
        return Coloring(np.zeros(0, dtype=np.int64), 0)
    if order == "dsatur":
        colors = _dsatur(g.adj)
    else:
        if order not in COLORING_POLICIES:
            raise InvalidParameterError(f"unknown coloring order {order!r}")
        nbrs = [np.flatnonzero(row) for row in g.adj]
        deg = g.degree()
        colors = _first_fit(nbrs, np.lexsort((np.arange(V), -deg)))
        if order == "random":
            candidates = [colors, _dsatur(g.adj)]
            gen = as_generator(rng)
            for _ in range(restarts):
                candidates.append(_first_fit(nbrs, gen.permutation(V)))
            colors = min(candidates, key=lambda c: int(c.max()))
    return Coloring(colors + 1, int(colors.max()) + 1)


def exact_chromatic(g: ConflictGraph, cap: int = 20) -> int:
    """Chromatic number by DSATUR branch and bound.

    Raises
    ------
    SizeLimitError
        If the graph has more than ``cap`` vertices.
    """
    V = g.n_vertices
    if V > cap:
        raise SizeLimitError(f"exact coloring refused: {V} vertices > cap {cap}")
    if V == 0:
        return 0
    nbr = [0] * V
    for i, j in zip(*np.nonzero(g.adj)):
        nbr[i] |= 1 << int(j)
    deg = [bin(x).count("1") for x in nbr]

    # greedy clique for the lower bound
    clique = 0
    for v in sorted(range(V), key=lambda v: -deg[v]):
        if clique & ~nbr[v] == 0:
            clique |= 1 << v
    lower = bin(clique).count("1")
    best = int(_dsatur(g.adj).max()) + 1
    if best == lower:
        return best

    classes: list[int] = []
    color = [-1] * V

    def search(n_colored: int) -> bool:
        nonlocal best
        k = len(classes)
        if n_colored == V:
            best = k
            return best == lower
        v = max((u for u in range(V) if color[u] < 0),
                key=lambda u: (sum(1 for c in classes if c & nbr[u]), deg[u]))
        for c in range(k):
            if not classes[c] & nbr[v]:
                classes[c] |= 1 << v
                color[v] = c
                done = search(n_colored + 1)
                classes[c] &= ~(1 << v)
                color[v] = -1
                if done:
                    return True
        if k + 1 < best:
            classes.append(1 << v)
            color[v] = k
            done = search(n_colored + 1)
            classes.pop()
            color[v] = -1
            if done:
                return True
        return False

    search(0)
    return best


@dataclass(frozen=True)
class Transmission:
    """One coded transmission: the XOR of the distinct packets of a color class."""

    color: int
    packets: tuple[tuple[int, int], ...]
    codeword: bytes


@dataclass(frozen=True)
class MulticastCode:
    transmissions: tuple[Transmission, ...]
    B: int
    payload_size: int

    @property
    def K(self) -> int:
        return len(self.transmissions)


def _xor(blocks) -> bytes:
    acc = None
    for blk in blocks:
        arr = np.frombuffer(bytes(blk), dtype=np.uint8)
        acc = arr.copy() if acc is None else np.bitwise_xor(acc, arr, out=acc)
    return acc.tobytes()


def encode(g: ConflictGraph, coloring: Coloring,
           payloads: Mapping[tuple[int, int], bytes]) -> MulticastCode:
    """XOR codeword per color class.

    A packet requested by several users of the same class enters its
    codeword once.
    """
    if not is_proper(g, coloring):
        raise ContractViolation("coloring is not proper for this graph")
    size = None
    transmissions = []
    for c, members in enumerate(coloring.classes(), start=1):
        pkts = tuple(sorted({(int(g.file[i]), int(g.packet[i])) for i in members}))
        blocks = []
        for pk in pkts:
            if pk not in payloads:
                raise ContractViolation(f"no payload for packet {pk}")
            blk = payloads[pk]
            if size is None:
                size = len(blk)
            elif len(blk) != size:
                raise ContractViolation("payloads must all have the same length")
            blocks.append(blk)
        transmissions.append(Transmission(c, pkts, _xor(blocks)))
    return MulticastCode(tuple(transmissions), g.B, size or 0)


def decode(user: int, code: MulticastCode, caches: CacheConfig,
           demands: DemandRealization,
           library: Mapping[tuple[int, int], bytes]) -> dict[tuple[int, int], bytes]:
    """Recover the packets ``user`` requested but does not cache.

    ``library`` stands in for the user's local storage: only packets present
    in the user's cache are read from it.

    Raises
    ------
    DecodeError
        If some requested packet appears in no transmission whose other
        packets are all cached by the user.
    """
    f = int(demands.d[user])
    cached = caches.cached[user]
    wanted = [(f, b) for b in range(1, caches.params.B + 1) if not cached[f - 1, b - 1]]
    by_packet: dict[tuple[int, int], list[Transmission]] = {}
    for t in code.transmissions:
        for pk in t.packets:
            by_packet.setdefault(pk, []).append(t)

    recovered = {}
    for pk in wanted:
        for t in by_packet.get(pk, ()):
            others = [o for o in t.packets if o != pk]
            if all(cached[o[0] - 1, o[1] - 1] for o in others):
                recovered[pk] = _xor([t.codeword, *(library[o] for o in others)])
                break
        else:
            raise DecodeError(f"user {user} cannot decode packet {pk}")
    return recovered


def delivery_rate(g: ConflictGraph, coloring: Coloring, demands: DemandRealization,
                  B: int) -> float:
    """Rate in file units: coded ``K / B`` or naive multicast, whichever is lower."""
    return min(coloring.K / B, float(demands.distinct()))
