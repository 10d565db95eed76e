"""Finite d-regular graphs, the midpoint graph, and structural checks.

Vertices are dense integers 0..N-1.  Midpoints of edges get ids
N..N+M-1 in lexicographic edge order, so all derived indexing is
reproducible given (n, d, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh


class GraphBuildError(RuntimeError):
    pass


@dataclass(frozen=True)
class Graph:
    """Simple connected d-regular graph.

    `adjacency` is an (n, d) int32 array; row x lists the neighbors of x in
    ascending order.  Immutable after construction, safe to share across
    workers.
    """

    n_vertices: int
    degree: int
    adjacency: np.ndarray
    seed: int
    method: str

    def edge_array(self) -> np.ndarray:
        """All edges as an (M, 2) array with u < v, lexicographically sorted."""
        n, d = self.n_vertices, self.degree
        u = np.repeat(np.arange(n, dtype=np.int64), d)
        v = self.adjacency.reshape(-1).astype(np.int64)
        keep = u < v
        edges = np.stack([u[keep], v[keep]], axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]

    @property
    def n_edges(self) -> int:
        return self.n_vertices * self.degree // 2


@dataclass(frozen=True)
class MidpointGraph:
    """Bipartite graph with one extra vertex on every edge of the base graph.

    Vertex ids: 0..N-1 are the original vertices, N+j is the midpoint of the
    j-th edge of `base.edge_array()`.  `weights` holds the walk weights
    (degree d on originals, 2 on midpoints), `parity` is +1 on originals and
    -1 on midpoints, and `walk` is the row-stochastic transition matrix of
    the plain simple random walk.
    """

    base: Graph
    n_total: int
    weights: np.ndarray
    parity: np.ndarray
    edges: np.ndarray
    walk: csr_matrix

    @property
    def n_original(self) -> int:
        return self.base.n_vertices

    def midpoint_id(self, u: int, v: int) -> int:
        """Vertex id of the midpoint of edge (u, v)."""
        a, b = (u, v) if u < v else (v, u)
        j = np.searchsorted(self.edges[:, 0] * (self.n_original + 1) + self.edges[:, 1],
                            a * (self.n_original + 1) + b)
        if j >= len(self.edges) or self.edges[j, 0] != a or self.edges[j, 1] != b:
            raise KeyError(f"({u},{v}) is not an edge")
        return self.n_original + int(j)


@dataclass(frozen=True)
class AssumptionReport:
    """Measured structural quantities of a graph (thresholds are reported,
    never asserted: the regularity class fixes no numeric constants)."""

    alpha_radius: int
    treelike_fraction: float
    one_cycle_fraction: float
    spectral_gap: float
    min_expansion_sampled: float


def _adjacency_from_edges(n: int, d: int, edges: np.ndarray) -> np.ndarray:
    adj = np.full((n, d), -1, dtype=np.int32)
    fill = np.zeros(n, dtype=np.int32)
    for u, v in edges:
        adj[u, fill[u]] = v
        fill[u] += 1
        adj[v, fill[v]] = u
        fill[v] += 1
    if not np.all(fill == d):
        raise GraphBuildError("degree sequence is not constant d")
    adj.sort(axis=1)
    return adj


def _is_connected(n: int, adj: np.ndarray) -> bool:
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = np.array([0], dtype=np.int64)
    reached = 1
    while frontier.size:
        nxt = np.unique(adj[frontier].reshape(-1))
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        reached += nxt.size
        frontier = nxt
    return reached == n


def from_edges(n: int, edges, seed: int = 0, method: str = "explicit") -> Graph:
    """Build a Graph from an explicit edge list; validates regularity,
    simplicity and connectivity."""
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphBuildError("edge endpoint out of range")
    a = np.minimum(edges[:, 0], edges[:, 1])
    b = np.maximum(edges[:, 0], edges[:, 1])
    if np.any(a == b):
        raise GraphBuildError("self-loop in edge list")
    key = a * n + b
    if len(np.unique(key)) != len(key):
        raise GraphBuildError("repeated edge in edge list")
    if (2 * len(edges)) % n != 0:
        raise GraphBuildError("edge count incompatible with a regular graph")
    d = 2 * len(edges) // n
    adj = _adjacency_from_edges(n, d, np.stack([a, b], axis=1))
    if not _is_connected(n, adj):
        raise GraphBuildError("graph is not connected")
    return Graph(n, d, adj, seed, method)


def complete_graph(n: int) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, n - 1, _adjacency_from_edges(n, n - 1, np.array(edges)), 0, "explicit")


def build_random_regular(n: int, d: int, seed: int, max_retries: int = 1000) -> Graph:
    """Uniform-ish simple connected d-regular graph via the configuration model.

    The whole half-edge pairing is resampled on any loop, multi-edge or
    disconnected outcome.  Deterministic given (n, d, seed).
    """
    if (n * d) % 2 != 0:
        raise ValueError(f"n*d = {n * d} is odd; no d-regular graph exists")
    if d < 3:
        raise ValueError("degree must be at least 3")
    if n < d + 1:
        raise ValueError("need at least d+1 vertices")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, n, d])))
    stub_vertex = np.repeat(np.arange(n, dtype=np.int64), d)
    for _ in range(max_retries):
        perm = rng.permutation(n * d)
        u = stub_vertex[perm[0::2]]
        v = stub_vertex[perm[1::2]]
        if np.any(u == v):
            continue
        a = np.minimum(u, v)
        b = np.maximum(u, v)
        key = a * n + b
        if len(np.unique(key)) != len(key):
            continue
        adj = _adjacency_from_edges(n, d, np.stack([a, b], axis=1))
        if not _is_connected(n, adj):
            continue
        return Graph(n, d, adj, seed, "configuration-model")
    raise GraphBuildError(f"no simple connected pairing found in {max_retries} attempts")


def midpoint_graph(g: Graph) -> MidpointGraph:
    """Insert a vertex in the middle of every edge of g."""
    n, d = g.n_vertices, g.degree
    edges = g.edge_array()
    m = len(edges)
    n_total = n + m
    weights = np.concatenate([np.full(n, float(d)), np.full(m, 2.0)])
    parity = np.concatenate([np.ones(n), -np.ones(m)])
    mids = n + np.arange(m, dtype=np.int64)
    # rows: original -> each incident midpoint with weight 1/d,
    #       midpoint -> each endpoint with weight 1/2
    rows = np.concatenate([edges[:, 0], edges[:, 1], mids, mids])
    cols = np.concatenate([mids, mids, edges[:, 0], edges[:, 1]])
    vals = np.concatenate([np.full(2 * m, 1.0 / d), np.full(2 * m, 0.5)])
    walk = csr_matrix((vals, (rows, cols)), shape=(n_total, n_total))
    return MidpointGraph(g, n_total, weights, parity, edges, walk)


def ball(g: Graph, x: int, r: int) -> np.ndarray:
    """Vertices at graph distance <= r from x (sorted)."""
    seen = np.zeros(g.n_vertices, dtype=bool)
    seen[x] = True
    frontier = np.array([x], dtype=np.int64)
    for _ in range(r):
        if not frontier.size:
            break
        nxt = np.unique(g.adjacency[frontier].reshape(-1).astype(np.int64))
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return np.flatnonzero(seen)


def ball_excess(g: Graph, x: int, r: int) -> int:
    """Number of independent cycles in B(x, r): |edges| - (|vertices| - 1)."""
    verts = ball(g, x, r)
    mask = np.zeros(g.n_vertices, dtype=bool)
    mask[verts] = True
    internal = int(mask[g.adjacency[verts].reshape(-1)].sum()) // 2
    return internal - (len(verts) - 1)


def is_treelike(g: Graph, x: int, r: int) -> bool:
    """True iff the radius-r ball around x contains no cycle."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return ball_excess(g, x, r) == 0


def treelike_fraction(g: Graph, r: int, max_excess: int = 0,
                      sample: int | None = None, seed: int = 0) -> float:
    """Fraction of vertices whose radius-r ball has at most `max_excess`
    independent cycles.  `sample` vertices are scanned if given, else all."""
    if sample is None or sample >= g.n_vertices:
        verts = np.arange(g.n_vertices)
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, r])))
        verts = rng.choice(g.n_vertices, size=sample, replace=False)
    good = sum(1 for x in verts if ball_excess(g, int(x), r) <= max_excess)
    return good / len(verts)


def max_treelike_radius(g: Graph, min_fraction: float = 0.99,
                        sample: int | None = 2000, seed: int = 0) -> int:
    """Largest radius r with treelike fraction >= min_fraction (measured)."""
    r = 0
    while True:
        frac = treelike_fraction(g, r + 1, sample=sample, seed=seed)
        if frac < min_fraction:
            return r
        r += 1
        if r > 64:  # ball would exceed any finite graph long before this
            return r


def lazy_matrix(g: Graph) -> csr_matrix:
    """Transition matrix of the lazy walk: stay with prob 1/2, else uniform
    neighbor.  Symmetric for regular graphs."""
    n, d = g.n_vertices, g.degree
    rows = np.repeat(np.arange(n, dtype=np.int64), d)
    cols = g.adjacency.reshape(-1).astype(np.int64)
    off = csr_matrix((np.full(n * d, 0.5 / d), (rows, cols)), shape=(n, n))
    eye = csr_matrix((np.full(n, 0.5), (np.arange(n), np.arange(n))), shape=(n, n))
    return off + eye


def lazy_gap_from_dense(transition: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Spectral gap 1 - mu_2 of an arbitrary lazy-walk matrix via dense
    eigendecomposition (oracle path; handles non-regular graphs through the
    similarity transform with the stationary weights)."""
    if weights is None:
        sym = transition
    else:
        s = np.sqrt(weights)
        sym = (transition * s[None, :]) / s[:, None]
    vals = np.linalg.eigvalsh((sym + sym.T) / 2)
    return 1.0 - float(vals[-2])


def spectral_gap(g: Graph) -> float:
    """Spectral gap of the lazy walk on g: 1 - (second largest eigenvalue).

    All lazy-walk eigenvalues lie in [0, 1], so this single number controls
    the geometric convergence rate to stationarity.
    """
    p = lazy_matrix(g)
    if g.n_vertices <= 512:
        return lazy_gap_from_dense(p.toarray())
    vals = eigsh(p, k=2, which="LA", return_eigenvectors=False, tol=1e-10)
    return 1.0 - float(np.sort(vals)[0])


def vertex_boundary(g: Graph, a) -> np.ndarray:
    """Outer vertex boundary: vertices outside `a` adjacent to some vertex
    of `a` (sorted array)."""
    a = np.asarray(sorted(a), dtype=np.int64)
    if a.size == 0:
        return a
    mask = np.zeros(g.n_vertices, dtype=bool)
    mask[a] = True
    nbrs = np.unique(g.adjacency[a].reshape(-1).astype(np.int64))
    return nbrs[~mask[nbrs]]


def sampled_expansion(g: Graph, n_samples: int = 200, seed: int = 0) -> float:
    """Minimum of |boundary(A)|/|A| over sampled BFS-grown connected sets A
    with |A| <= N/2.  BFS balls are locally the worst expanders available
    without exhaustive search."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, g.n_vertices])))
    worst = np.inf
    half = g.n_vertices // 2
    for _ in range(n_samples):
        target = int(rng.integers(1, max(2, half)))
        x = int(rng.integers(g.n_vertices))
        seen = {x}
        frontier = [x]
        while frontier and len(seen) < target:
            nxt = []
            for v in frontier:
                for w in g.adjacency[v]:
                    w = int(w)
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
                        if len(seen) >= target:
                            break
                if len(seen) >= target:
                    break
            frontier = nxt
        a = np.fromiter(seen, dtype=np.int64)
        if a.size > half:
            continue
        ratio = len(vertex_boundary(g, a)) / a.size
        worst = min(worst, ratio)
    return float(worst)


def assumption_report(g: Graph, alpha: float = 0.25, expansion_samples: int = 200,
                      treelike_sample: int | None = 2000, seed: int = 0) -> AssumptionReport:
    """Measure the structural quantities the model relies on, at the radius
    floor(alpha * log_{d-1} N)."""
    n, d = g.n_vertices, g.degree
    radius = max(1, int(np.floor(alpha * np.log(n) / np.log(d - 1))))
    return AssumptionReport(
        alpha_radius=radius,
        treelike_fraction=treelike_fraction(g, radius, 0, treelike_sample, seed),
        one_cycle_fraction=treelike_fraction(g, radius, 1, treelike_sample, seed),
        spectral_gap=spectral_gap(g),
        min_expansion_sampled=sampled_expansion(g, expansion_samples, seed),
    )


def tree_ball_size(d: int, r: int) -> int:
    """|B(x, r)| when the radius-r ball around x is a tree."""
    if r == 0:
        return 1
    return (d * (d - 1) ** r - 2) // (d - 2)


def save_edgelist(g: Graph, path) -> None:
    """Write the graph as 'u v' lines (u < v) behind a metadata header."""
    edges = g.edge_array()
    with open(path, "w") as fh:
        fh.write(f"# n={g.n_vertices} d={g.degree} seed={g.seed}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")


def load_edgelist(path) -> Graph:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise GraphBuildError("missing header line")
        meta = dict(tok.split("=") for tok in header[1:].split())
        n, seed = int(meta["n"]), int(meta["seed"])
        edges = [tuple(map(int, line.split())) for line in fh if line.strip()]
    g = from_edges(n, np.array(edges), seed=seed, method="explicit")
    if g.degree != int(meta["d"]):
        raise GraphBuildError("header degree does not match edge list")
    return g
