"""Static graphs: representation, deterministic generators, shift operators,
and exact combinatorial oracles (BFS distances, eccentricity, diameter).

Edge lists are ordered pairs; undirected graphs store both orientations.
Generators take explicit seeds and never touch global RNG state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "barabasi_albert",
    "crossed_ring_graph",
    "diameter",
    "dirichlet_energy",
    "eccentricity",
    "erdos_renyi",
    "graph_from_json",
    "graph_to_json",
    "grid_graph",
    "path_graph",
    "ring_graph",
    "ring_graph",
    "shift_operator",
    "sssp",
]

SHIFT_KINDS = (
    "adjacency",
    "sym_norm_adjacency",
    "random_walk_adjacency",
    "laplacian",
    "sym_norm_laplacian",
    "random_walk_laplacian",
)


@dataclass(frozen=True)
class Graph:
    """Immutable static graph.

    ``edges`` is an (E,2) int array of ordered pairs; if ``undirected`` both
    orientations are present.  ``x`` is the n x d_in node-feature matrix,
    ``e`` optional |edges| x d_e edge features.
    """

    n: int
    edges: np.ndarray
    undirected: bool = True
    x: np.ndarray | None = None
    e: np.ndarray | None = None
    _adj: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if len(edges) and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed in the base graph")
        if len(np.unique(edges, axis=0)) != len(edges):
            raise ValueError("duplicate directed edge")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            if x.shape[0] != self.n:
                raise ValueError("feature row count must equal n")
            x.setflags(write=False)
            object.__setattr__(self, "x", x)
        if self.e is not None:
            e = np.asarray(self.e, dtype=float)
            if e.shape[0] != len(edges):
                raise ValueError("edge-feature row count must equal |edges|")
            e.setflags(write=False)
            object.__setattr__(self, "e", e)
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in edges:
            adj[u].append(int(v))
        object.__setattr__(self, "_adj", adj)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def degrees(self) -> np.ndarray:
        """Out-degree per node (== degree for undirected graphs)."""
        d = np.zeros(self.n, dtype=np.int64)
        if len(self.edges):
            np.add.at(d, self.edges[:, 0], 1)
        return d

    def with_features(self, x: np.ndarray, e: np.ndarray | None = None) -> "Graph":
        return Graph(self.n, self.edges, self.undirected, x, e)


def _undirected(n: int, pairs: set[tuple[int, int]], x=None) -> Graph:
    edges = []
    for u, v in sorted(pairs):
        edges.append((u, v))
        edges.append((v, u))
    return Graph(n, np.array(sorted(edges), dtype=np.int64).reshape(-1, 2), True, x)


def path_graph(n: int) -> Graph:
    if n < 2:
        raise ValueError("path graph needs n >= 2")
    return _undirected(n, {(i, i + 1) for i in range(n - 1)})


def ring_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("ring graph needs n >= 3")
    pairs = {(i, i + 1) for i in range(n - 1)}
    pairs.add((0, n - 1))
    return _undirected(n, pairs)


def crossed_ring_graph(n: int) -> Graph:
    """Ring of even size n = 2k (k >= 3) with chords between opposite arcs.

    With 1-indexed nodes the chords are {u_i, u_{n-i+1}} for i in [2, k) and
    {u_{n-j}, u_{3+j}} for j in [0, k-2); stored 0-indexed.
    """
    if n < 6 or n % 2:
        raise ValueError("crossed ring needs even n = 2k with k >= 3")
    k = n // 2
    pairs = {(i, i + 1) for i in range(n - 1)}
    pairs.add((0, n - 1))
    for i in range(2, k):
        a, b = i - 1, n - i
        pairs.add((min(a, b), max(a, b)))
    for j in range(0, k - 2):
        a, b = n - j - 1, j + 2
        pairs.add((min(a, b), max(a, b)))
    return _undirected(n, pairs)


def grid_graph(m: int, n: int) -> Graph:
    if m < 1 or n < 1 or m * n < 2:
        raise ValueError("grid needs at least two nodes")
    pairs = set()
    for i in range(m):
        for j in range(n):
            u = i * n + j
            if j + 1 < n:
                pairs.add((u, u + 1))
            if i + 1 < m:
                pairs.add((u, u + n))
    return _undirected(m * n, pairs)


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    pairs = set()
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                pairs.add((u, v))
    return _undirected(n, pairs)


def barabasi_albert(n: int, k: int, seed: int) -> Graph:
    """Preferential attachment starting from a k-clique; each newcomer
    attaches to k distinct existing nodes sampled by degree."""
    if not 1 <= k < n:
        raise ValueError("need 1 <= k < n")
    rng = np.random.default_rng(seed)
    pairs = set()
    deg = np.zeros(n, dtype=np.int64)
    for u in range(k):
        for v in range(u + 1, k):
            pairs.add((u, v))
            deg[u] += 1
            deg[v] += 1
    if k == 1:
        deg[0] = 1  # lone seed node still needs sampling mass
    for u in range(k, n):
        targets: set[int] = set()
        while len(targets) < k:
            w = deg[:u].astype(float)
            w /= w.sum()
            cand = int(rng.choice(u, p=w))
            targets.add(cand)
        for v in targets:
            pairs.add((min(u, v), max(u, v)))
            deg[u] += 1
            deg[v] += 1
    return _undirected(n, pairs)


# ---------------------------------------------------------------------------
# shift operators


def shift_operator(g: Graph, kind: str, zero_degree: str = "zero") -> np.ndarray:
    """Dense n x n shift operator.

    ``zero_degree`` controls isolated nodes under degree normalization:
    "zero" leaves the corresponding row/column zero, "error" raises.
    """
    if kind not in SHIFT_KINDS:
        raise ValueError(f"unknown shift operator kind {kind!r}")
    n = g.n
    a = np.zeros((n, n))
    if g.n_edges:
        a[g.edges[:, 0], g.edges[:, 1]] = 1.0
    if kind == "adjacency":
        return a
    deg = a.sum(axis=1)
    if kind == "laplacian":
        return np.diag(deg) - a
    if np.any(deg == 0):
        if zero_degree == "error":
            raise ValueError("degenerate-degree: isolated node under normalized operator")
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
        dinv_sqrt = np.sqrt(dinv)
    if kind == "sym_norm_adjacency":
        return dinv_sqrt[:, None] * a * dinv_sqrt[None, :]
    if kind == "random_walk_adjacency":
        return dinv[:, None] * a
    if kind == "sym_norm_laplacian":
        eye = np.diag((deg > 0).astype(float))
        return eye - dinv_sqrt[:, None] * a * dinv_sqrt[None, :]
    # random_walk_laplacian
    eye = np.diag((deg > 0).astype(float))
    return eye - dinv[:, None] * a


# ---------------------------------------------------------------------------
# combinatorial oracles

UNREACHABLE = -1


def sssp(g: Graph, source: int) -> np.ndarray:
    """BFS hop distances from source; unreachable nodes get -1."""
    if not 0 <= source < g.n:
        raise ValueError("source out of range")
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                if dist[v] == UNREACHABLE:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def eccentricity(g: Graph) -> np.ndarray:
    """Per-node max hop distance; -1 anywhere on a disconnected graph."""
    out = np.zeros(g.n, dtype=np.int64)
    for u in range(g.n):
        d = sssp(g, u)
        out[u] = UNREACHABLE if np.any(d == UNREACHABLE) else d.max()
    return out


def diameter(g: Graph) -> int:
    ecc = eccentricity(g)
    return UNREACHABLE if np.any(ecc == UNREACHABLE) else int(ecc.max())


def is_connected(g: Graph) -> bool:
    return bool(np.all(sssp(g, 0) != UNREACHABLE))


def dirichlet_energy(x: np.ndarray, g: Graph) -> float:
    """(1/n) * sum_u sum_{v in N(u)} ||x_u - x_v||^2."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != g.n:
        raise ValueError("state row count must equal n")
    if not g.n_edges:
        return 0.0
    diff = x[g.edges[:, 0]] - x[g.edges[:, 1]]
    return float((diff**2).sum() / g.n)


# ---------------------------------------------------------------------------
# serialization


def graph_to_json(g: Graph) -> dict:
    out = {
        "n": g.n,
        "undirected": g.undirected,
        "edges": g.edges.tolist(),
    }
    out["x"] = g.x.tolist() if g.x is not None else None
    out["e"] = g.e.tolist() if g.e is not None else None
    return out


def graph_from_json(obj: dict) -> Graph:
    return Graph(
        n=int(obj["n"]),
        edges=np.array(obj["edges"], dtype=np.int64).reshape(-1, 2),
        undirected=bool(obj["undirected"]),
        x=np.array(obj["x"], dtype=float) if obj.get("x") is not None else None,
        e=np.array(obj["e"], dtype=float) if obj.get("e") is not None else None,
    )


def dumps_graph(g: Graph) -> str:
    return json.dumps(graph_to_json(g), separators=(",", ":"))
