"""Level sets, connected components, mesoscopic statistics, reduced graphs,
and the sprinkling merge experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import sampler, tree
from .graphs import Graph, midpoint_graph, build_random_regular, spectral_gap, \
    max_treelike_radius, tree_ball_size
from .operator import principal_eigenvalue
from .sampler import default_k_max

NEG_INF = float("-inf")


class UnionFind:
    """Array-based union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, v: int) -> int:
        parent = self.parent
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return int(v)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class ComponentStats:
    """Connected components of an induced vertex set.

    `labels[x]` is a dense component id, -1 for vertices outside the set;
    `sizes` is sorted descending.
    """

    level: float
    labels: np.ndarray
    sizes: np.ndarray

    @property
    def c_max(self) -> int:
        return int(self.sizes[0]) if len(self.sizes) else 0

    @property
    def c_sec(self) -> int:
        return int(self.sizes[1]) if len(self.sizes) > 1 else 0

    @property
    def n_in_set(self) -> int:
        return int(self.sizes.sum())

    def mesoscopic_count(self, threshold: float) -> int:
        """Number of vertices lying in components of size >= threshold."""
        big = self.sizes[self.sizes >= threshold]
        return int(big.sum())

    def component_of(self, x: int) -> np.ndarray:
        cid = self.labels[x]
        if cid < 0:
            return np.array([], dtype=np.int64)
        return np.flatnonzero(self.labels == cid)


def level_set(values: np.ndarray, h: float) -> np.ndarray:
    """Boolean membership mask of {x : values(x) >= h}."""
    return np.asarray(values) >= h


def components(g: Graph, member: np.ndarray, level: float = math.nan) -> ComponentStats:
    """Exact connected components of the subgraph induced by the mask,
    via union-find over the induced edges."""
    member = np.asarray(member, dtype=bool)
    if member.shape[0] != g.n_vertices:
        raise ValueError("mask length does not match vertex count")
    uf = UnionFind(g.n_vertices)
    edges = g.edge_array()
    both = member[edges[:, 0]] & member[edges[:, 1]]
    for u, v in edges[both]:
        uf.union(int(u), int(v))
    labels = np.full(g.n_vertices, -1, dtype=np.int64)
    idx = np.flatnonzero(member)
    if idx.size == 0:
        return ComponentStats(level, labels, np.array([], dtype=np.int64))
    roots = np.fromiter((uf.find(int(v)) for v in idx), dtype=np.int64, count=idx.size)
    uniq, inverse, counts = np.unique(roots, return_inverse=True, return_counts=True)
    order = np.argsort(-counts, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels[idx] = rank[inverse]
    return ComponentStats(level, labels, counts[order])


def level_components(g: Graph, values: np.ndarray, h: float) -> ComponentStats:
    return components(g, level_set(values, h), level=h)


def small_component_fraction(g: Graph, values: np.ndarray, h: float, r: int) -> float:
    """Fraction of vertices whose level-set component stays inside the ball
    of radius r/2 around them.  Vertices outside the level set have empty
    components and count as small."""
    if r < 2:
        raise ValueError("radius must be at least 2")
    radius = r // 2
    stats = level_components(g, values, h)
    small = int((stats.labels < 0).sum())
    max_ball = tree_ball_size(g.degree, radius)
    for cid, size in enumerate(stats.sizes):
        if size > max_ball:
            continue  # cannot fit in any radius r/2 ball
        comp = np.flatnonzero(stats.labels == cid)
        comp_set = set(comp.tolist())
        for x in comp:
            reached = {int(x)}
            frontier = [int(x)]
            for _ in range(radius):
                nxt = []
                for v in frontier:
                    for w in g.adjacency[v]:
                        w = int(w)
                        if w not in reached:
                            reached.add(w)
                            nxt.append(w)
                frontier = nxt
            if comp_set <= reached:
                small += 1
    return small / g.n_vertices


def bad_set_counts(psi1_values: np.ndarray, zbar2_values: np.ndarray,
                   k_floor: float, l_floor: float) -> tuple[int, int]:
    """Sizes of the two bad sets: sprinkle sites below the reduced-graph
    floor, and sites where the split main part dips under its floor."""
    b1 = int((np.asarray(zbar2_values) < l_floor).sum())
    b2 = int((np.asarray(psi1_values) < k_floor).sum())
    return b1, b2


def sprinkle_floor(p: float) -> float:
    """The floor L < 0 with P(N(0, 1/2) >= L) = p, for p > 1/2."""
    if not 0.5 < p <= 1.0:
        raise ValueError("mark probability must lie in (1/2, 1]")
    if p == 1.0:
        return NEG_INF
    return float(norm.isf(p) * math.sqrt(0.5))


@dataclass(frozen=True)
class ReducedGraphParams:
    """Floors defining the reduced graph: keep sites with sprinkle base
    >= l_floor (probability p each) and split main part >= k_floor."""

    k_floor: float
    l_floor: float
    p: float
    t: float

    @classmethod
    def from_p(cls, p: float, t: float, k_floor: float) -> "ReducedGraphParams":
        return cls(k_floor, sprinkle_floor(p), p, t)


def mesoscopic_scan(g: Graph, psi1_values: np.ndarray, psi_values: np.ndarray,
                    zbar2_values: np.ndarray, params: ReducedGraphParams,
                    h: float, size_threshold: float) -> tuple[int, ComponentStats]:
    """Vertices in components of size >= size_threshold of the doubly-thinned
    level set {psi1 >= h} & {psi >= h}, within the reduced graph induced by
    {zbar2 >= l_floor} & {psi1 >= k_floor} (the latter is vacuous in the
    usual regime k_floor <= h)."""
    psi1_values = np.asarray(psi1_values)
    if psi1_values.shape != np.shape(psi_values) or psi1_values.shape[0] != g.n_vertices:
        raise ValueError("field sizes do not match the graph")
    mask = (psi1_values >= h) & (np.asarray(psi_values) >= h)
    mask &= np.asarray(zbar2_values) >= params.l_floor
    mask &= psi1_values >= params.k_floor
    stats = components(g, mask, level=h)
    return stats.mesoscopic_count(size_threshold), stats


def measured_mesoscopic_threshold(g: Graph, h: float, p: float,
                                  delta_prime: float = 0.05,
                                  treelike_sample: int | None = 2000) -> tuple[float, int]:
    """Mesoscopic size cutoff (p * lambda_h * (1 - 2 delta'))^{r_n} with r_n
    the measured treelike radius of this graph; the growth-rate base must
    exceed one.  Returns (threshold, r_n)."""
    r_n = max_treelike_radius(g, sample=treelike_sample)
    lam = principal_eigenvalue(g.degree, h)
    base = p * lam * (1.0 - 2.0 * delta_prime)
    if base <= 1.0:
        raise ValueError(f"growth base {base:.4f} <= 1: parameters are subcritical")
    return float(base ** r_n), r_n


def giant_experiment(n: int, d: int, h: float, seed: int, k_max: int | None = None,
                     eta_ref: float | None = None) -> dict:
    """Sample one field on a fresh random regular graph and report the two
    largest level-set components."""
    g = build_random_regular(n, d, seed)
    mg = midpoint_graph(g)
    if k_max is None:
        k_max = default_k_max(spectral_gap(g))
    field, _ = sampler.sample_decomposition(mg, k_max, seed)
    stats = level_components(g, field.values, h)
    return {
        "seed": seed, "n": n, "d": d, "h": h, "h_prime": None, "p": None,
        "t": None, "k_max": k_max,
        "c_max": stats.c_max, "c_sec": stats.c_sec,
        "meso_count": None, "merged": None,
        "eta_ref": eta_ref,
    }


def mesoscopic_experiment(n: int, d: int, h: float, p: float, t: float, seed: int,
                          k_max: int | None = None, eta_ref: float | None = None,
                          delta_prime: float = 0.05) -> dict:
    """Fresh-split sample plus an independent sprinkle base; counts vertices
    in mesoscopic components of the thinned level set in the reduced graph."""
    g = build_random_regular(n, d, seed)
    mg = midpoint_graph(g)
    if k_max is None:
        k_max = default_k_max(spectral_gap(g))
    p1, p2 = sampler.sample_split_batch(mg, k_max, t, 1, seed)
    psi1, psi = p1[:, 0], p1[:, 0] + p2[:, 0]
    _, zbar2 = sampler.sample_sprinkle_parts(g, t, seed)
    params = ReducedGraphParams.from_p(p, t, k_floor=h)
    threshold, r_n = measured_mesoscopic_threshold(g, h, p, delta_prime)
    count, stats = mesoscopic_scan(g, psi1, psi, zbar2, params, h, threshold)
    return {
        "seed": seed, "n": n, "d": d, "h": h, "h_prime": None, "p": p, "t": t,
        "k_max": k_max, "c_max": stats.c_max, "c_sec": stats.c_sec,
        "meso_count": count, "meso_threshold": threshold, "treelike_radius": r_n,
        "merged": None, "eta_ref": eta_ref,
    }


def sprinkling_run(n: int, d: int, h: float, h_prime: float, p: float, seed: int,
                   t: float | None = None, delta: float = 0.2,
                   delta_prime: float = 0.05, k0: float = -2.0,
                   k_max: int | None = None, eta_ref: float | None = None,
                   eta_depth: int = 16, eta_replicas: int = 20000) -> dict:
    """One sprinkling merge experiment.

    Builds the split main part at level h', fixes its mesoscopic components
    inside the reduced graph, adds the independent recentred sprinkle, and
    reports whether those components merged into a single component of the
    level-h set of the summed field of macroscopic size.
    """
    if not h < h_prime:
        raise ValueError("need h < h_prime")
    if t is None:
        t = 1.0 / math.log(n)
    eps = h_prime - h
    g = build_random_regular(n, d, seed)
    mg = midpoint_graph(g)
    if k_max is None:
        k_max = default_k_max(spectral_gap(g))
    if eta_ref is None:
        eta_ref = tree.estimate_eta(d, h_prime, p, NEG_INF, eta_depth,
                                    eta_replicas, seed).survival_fraction

    p1, _ = sampler.sample_split_batch(mg, k_max, t, 1, seed)
    psi1 = p1[:, 0]
    bar_field, zbar2 = sampler.sample_sprinkle_parts(g, t, seed)
    psi_bar = psi1 + bar_field.values

    k_floor = min(h, k0)
    l_floor = sprinkle_floor(p)
    centering = float(abs(zbar2.mean()))

    threshold, r_n = measured_mesoscopic_threshold(g, h_prime, p, delta_prime)
    c_exponent = math.log(max(threshold, 2.0)) / math.log(n)
    # sprinkle-strength feasibility from the measured exponent
    bridge_prob = float(norm.sf((h + t * eps - k_floor) / (t * math.sqrt(0.5))))
    t_check_ok = bool(bridge_prob >= n ** (-c_exponent * delta * eta_ref / 8.0))

    meso_mask = (psi1 >= h_prime) & (zbar2 >= l_floor)
    meso_stats = components(g, meso_mask, level=h_prime)
    meso_ids = np.flatnonzero(meso_stats.sizes >= threshold)
    meso_vertices = int(meso_stats.sizes[meso_ids].sum())

    bar_stats = level_components(g, psi_bar, h)
    merged = False
    contained = 0
    if len(meso_ids) and bar_stats.c_max > 0:
        giant_label = 0  # labels are size-ranked
        for cid in meso_ids:
            comp = np.flatnonzero(meso_stats.labels == cid)
            if np.all(bar_stats.labels[comp] == giant_label):
                contained += 1
        big_enough = bar_stats.c_max >= (1.0 - 2.0 * delta) * eta_ref * n
        merged = bool(big_enough and 2 * contained >= len(meso_ids))

    b1, b2 = bad_set_counts(psi1, zbar2, k_floor, l_floor)
    return {
        "seed": seed, "n": n, "d": d, "h": h, "h_prime": h_prime, "p": p, "t": t,
        "k_max": k_max, "c_max": bar_stats.c_max, "c_sec": bar_stats.c_sec,
        "meso_count": meso_vertices, "n_meso_components": int(len(meso_ids)),
        "meso_threshold": threshold, "treelike_radius": r_n,
        "merged": merged, "contained_components": contained,
        "centering": centering, "centering_ok": bool(centering < eps),
        "t_check_ok": t_check_ok, "k_floor": k_floor, "l_floor": l_floor,
        "bad_sprinkle_sites": b1, "bad_main_sites": b2,
        "eta_ref": eta_ref,
    }
