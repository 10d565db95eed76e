"""Joint construction of the graph field and two independent tree fields by
sharing the decomposition layers on treelike balls.

For a 2r-treelike vertex x, the layer loads with index k <= 2r are copied
bit-exactly from the midpoint graph onto the midpoint tree through the
canonical ball isomorphism; walks of length <= 2r started inside the
radius-2r tree ball never leave the copied region, so the low-layer parts
of the two fields agree exactly and the discrepancy over the radius-r ball
reduces to three explicit remainder sums (checked per replica to 1e-9).
The tree-side remainder (layers k > 2r) is a Gaussian field whose
covariance depends only on tree distances; it is drawn in one shot from
the exact distance-chain covariance instead of walking enormous balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .graphs import Graph, MidpointGraph, ball, is_treelike, tree_ball_size
from .rng import chunk_sizes, stream
from .sampler import Field, layer_variances
from .tree import TreeStructure, tree_structure

COUPLING_CHUNK = 128


class CouplingPreconditionError(ValueError):
    pass


@dataclass
class CoupledSample:
    """One replica of the coupled triple (graph field, two tree fields).

    Tree fields live on the radius-r tree ball in BFS order; `rho` and
    `rho_prime` map tree-ball indices to graph vertex ids.  `shared`
    records, per layer k <= 2r, the graph-side midpoint-graph ids and the
    copied values used by the first tree (likewise `shared_prime`).
    """

    graph_field: Field
    tree_values: np.ndarray
    tree_values_prime: np.ndarray
    rho: np.ndarray
    rho_prime: np.ndarray
    r: int
    k_max: int
    shared: dict[int, tuple[np.ndarray, np.ndarray]]
    shared_prime: dict[int, tuple[np.ndarray, np.ndarray]]
    identity_residual: float
    identity_residual_prime: float


def canonical_ball_order(g: Graph, x: int, r: int) -> np.ndarray:
    """Graph vertices of B(x, r) in canonical tree-BFS order: frontier in
    discovery order, neighbors ascending.  On a treelike ball this matches
    the index layout of `tree_structure(d, r)`."""
    order = [x]
    seen = {x}
    frontier = [x]
    for _ in range(r):
        nxt = []
        for v in frontier:
            for w in g.adjacency[v]:
                w = int(w)
                if w not in seen:
                    seen.add(w)
                    order.append(w)
                    nxt.append(w)
        frontier = nxt
    return np.array(order, dtype=np.int64)


def _midpoint_lookup(mg: MidpointGraph):
    n = mg.n_original
    keys = mg.edges[:, 0] * n + mg.edges[:, 1]

    def lookup(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        a = np.minimum(u, v)
        b = np.maximum(u, v)
        j = np.searchsorted(keys, a * n + b)
        return n + j

    return lookup


def shared_ball_ids(mg: MidpointGraph, x: int, r: int,
                    struct: TreeStructure) -> np.ndarray:
    """Midpoint-graph ids of the shared region around x, ordered like the
    midpoint-tree ball: first the originals of B(x, 2r) in canonical order,
    then the midpoint of (v, parent(v)) for each non-root tree index v."""
    order = canonical_ball_order(mg.base, x, 2 * r)
    if len(order) != struct.n_vertices:
        raise CouplingPreconditionError(
            f"ball around {x} is not treelike at radius {2 * r}")
    lookup = _midpoint_lookup(mg)
    mids = lookup(order[1:], order[struct.parent[1:]])
    return np.concatenate([order, mids])


def midpoint_tree_walk(struct: TreeStructure) -> csr_matrix:
    """Walk matrix of the midpoint tree over the truncated ball, with
    infinite-tree weights (1/d at originals, 1/2 at midpoints); missing
    boundary edges act as absorption and are never hit by the walks read
    off inside the half-radius ball."""
    d = struct.d
    n_o = struct.n_vertices
    kids = np.arange(1, n_o, dtype=np.int64)
    mids = n_o + kids - 1
    pars = struct.parent[kids]
    rows = np.concatenate([kids, pars, mids, mids])
    cols = np.concatenate([mids, mids, kids, pars])
    vals = np.concatenate([np.full(n_o - 1, 1.0 / d), np.full(n_o - 1, 1.0 / d),
                           np.full(n_o - 1, 0.5), np.full(n_o - 1, 0.5)])
    n_total = 2 * n_o - 1
    return csr_matrix((vals, (rows, cols)), shape=(n_total, n_total))


def tree_layer_std(struct: TreeStructure) -> np.ndarray:
    n_o = struct.n_vertices
    out = np.full(2 * n_o - 1, math.sqrt(struct.d / 4.0))
    out[:n_o] = math.sqrt(0.5)
    return out


def lazy_tree_distance_dist(d: int, k_max: int) -> np.ndarray:
    """(k_max+1, k_max+2) table of the lazy-walk distance law on the
    d-regular tree started at the root."""
    size = k_max + 2
    table = np.zeros((k_max + 1, size))
    table[0, 0] = 1.0
    for k in range(1, k_max + 1):
        cur = table[k - 1]
        nxt = 0.5 * cur.copy()          # lazy hold
        nxt[1] += 0.5 * cur[0]          # leave the root
        nxt[: size - 1] += cur[1:] * (0.5 / d)             # step toward the root
        nxt[2:] += cur[1: size - 1] * (0.5 * (d - 1) / d)  # step away
        table[k] = nxt
    return table


def tree_tail_covariance(d: int, r: int, k_low: int, k_max: int) -> np.ndarray:
    """Covariance on B(o, r) of the summed tree layers k in (k_low, k_max]:
    entries depend only on the tree distance, computed from the distance
    chain and the sphere sizes."""
    dist_table = lazy_tree_distance_dist(d, k_max)
    max_m = 2 * r
    sphere = np.array([1.0] + [d * (d - 1) ** (m - 1) for m in range(1, max_m + 1)])
    gamma = np.zeros(max_m + 1)
    for m in range(max_m + 1):
        gamma[m] = 0.5 * dist_table[k_low + 1: k_max + 1, m].sum() / sphere[m]
    struct = tree_structure(d, r)
    dm = _pairwise_tree_distances(struct)
    return gamma[dm]


def _pairwise_tree_distances(struct: TreeStructure) -> np.ndarray:
    n = struct.n_vertices
    anc: list[list[int]] = []
    for v in range(n):
        chain = [v]
        while chain[-1] != 0:
            chain.append(int(struct.parent[chain[-1]]))
        anc.append(chain)
    depth_of = {v: len(anc[v]) - 1 for v in range(n)}
    dm = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        ai = set(anc[i])
        for j in range(i + 1, n):
            lca = next(v for v in anc[j] if v in ai)
            dij = depth_of[i] + depth_of[j] - 2 * depth_of[lca]
            dm[i, j] = dm[j, i] = dij
    return dm


def _check_preconditions(g: Graph, x: int, xp: int, r: int, k_max: int):
    if k_max < 2 * r:
        raise CouplingPreconditionError(f"k_max={k_max} must be at least 2r={2 * r}")
    for v in (x, xp):
        if not is_treelike(g, v, 2 * r):
            raise CouplingPreconditionError(f"vertex {v} is not {2 * r}-treelike")
    bx = set(ball(g, x, 2 * r).tolist())
    bxp = set(ball(g, xp, 2 * r).tolist())
    if bx & bxp:
        raise CouplingPreconditionError("the two radius-2r balls overlap")


def find_coupled_pair(g: Graph, r: int, max_candidates: int = 64) -> tuple[int, int]:
    """A pair of 2r-treelike vertices with disjoint radius-2r balls."""
    candidates: list[tuple[int, set]] = []
    for x in range(g.n_vertices):
        if not is_treelike(g, x, 2 * r):
            continue
        bx = set(ball(g, x, 2 * r).tolist())
        for y, by in candidates:
            if not (bx & by):
                return y, x
        if len(candidates) < max_candidates:
            candidates.append((x, bx))
    raise CouplingPreconditionError(
        f"no pair of {2 * r}-treelike vertices with disjoint balls exists here")


def run_coupling_batch(mg: MidpointGraph, x: int, xp: int, r: int, k_max: int,
                       n_replicas: int, seed: int, chunk: int = COUPLING_CHUNK,
                       keep_fields: bool = False) -> dict:
    """Batched coupled sampling.

    Returns per-replica arrays: max discrepancies over the two radius-r
    balls, the residual of the three-sum remainder identity, and the full
    graph/tree ball values of the first replica of each chunk when
    `keep_fields` is set.
    """
    g = mg.base
    _check_preconditions(g, x, xp, r, k_max)
    d = g.degree
    n = mg.n_original
    low_k = 2 * r

    struct2r = tree_structure(d, 2 * r)
    n_ball2r = struct2r.n_vertices
    n_ballr = tree_ball_size(d, r)
    shared_x = shared_ball_ids(mg, x, r, struct2r)
    shared_xp = shared_ball_ids(mg, xp, r, struct2r)
    tree_walk = midpoint_tree_walk(struct2r)
    n_tree_total = 2 * n_ball2r - 1

    tail_cov = tree_tail_covariance(d, r, low_k, k_max)
    tail_chol = np.linalg.cholesky(tail_cov + 1e-14 * np.eye(n_ballr))

    stds = np.sqrt(layer_variances(mg))[:, None]
    d_x = np.empty(n_replicas)
    d_xp = np.empty(n_replicas)
    resid_x = np.empty(n_replicas)
    resid_xp = np.empty(n_replicas)
    psi_probe = np.empty(n_replicas)
    phi_probe = np.empty(n_replicas)
    kept = []

    col = 0
    for ci, size in enumerate(chunk_sizes(n_replicas, chunk)):
        rng = stream(seed, "coupling", ci)
        # Horner pass over all layers; `high` snapshots the partial state of
        # the layers above 2r and is propagated alongside, ending up as the
        # full high-layer sum after one extra product.
        acc = np.zeros((mg.n_total, size))
        high = np.zeros((mg.n_total, size))
        captured_x = {}
        captured_xp = {}
        for k in range(k_max, -1, -1):
            z = rng.standard_normal((mg.n_total, size)) * stds
            if k <= low_k:
                captured_x[k] = z[shared_x].copy()
                captured_xp[k] = z[shared_xp].copy()
            if k == low_k:
                high = acc.copy()
            acc = z + mg.walk @ acc
            if k < low_k:
                high = mg.walk @ high
        high = mg.walk @ high

        acc_orig = acc[:n]
        high_orig = high[:n]
        m_low = (acc_orig - high_orig).mean(axis=0)
        m_high = high_orig.mean(axis=0)
        psi = acc_orig - acc_orig.mean(axis=0)

        results = {}
        for which, cap, shared_ids in (("x", captured_x, shared_x),
                                       ("xp", captured_xp, shared_xp)):
            t_acc = np.zeros((n_tree_total, size))
            for k in range(low_k, -1, -1):
                t_acc = cap[k] + tree_walk @ t_acc
            zeta = tail_chol @ rng.standard_normal((n_ballr, size))
            phi = t_acc[:n_ballr] + zeta
            ball_gids = shared_ids[:n_ballr]
            diff = psi[ball_gids] - phi
            rhs = (high_orig[ball_gids] - m_high) - m_low - zeta
            results[which] = (phi, np.abs(diff).max(axis=0),
                              np.abs(diff - rhs).max(axis=0))

        phi_x, disc, resid = results["x"]
        d_x[col:col + size] = disc
        resid_x[col:col + size] = resid
        phi_probe[col:col + size] = phi_x[0]
        psi_probe[col:col + size] = psi[x]
        phi_p, disc, resid = results["xp"]
        d_xp[col:col + size] = disc
        resid_xp[col:col + size] = resid
        if keep_fields:
            kept.append({
                "psi": psi[:, 0].copy(),
                "phi": phi_x[:, 0].copy(),
                "phi_prime": phi_p[:, 0].copy(),
                "captured_x": {k: v[:, 0].copy() for k, v in captured_x.items()},
                "captured_xp": {k: v[:, 0].copy() for k, v in captured_xp.items()},
            })
        col += size

    return {
        "d_x": d_x, "d_xp": d_xp,
        "residual_x": resid_x, "residual_xp": resid_xp,
        "psi_at_x": psi_probe, "phi_at_root": phi_probe,
        "rho": shared_x[:n_ballr], "rho_prime": shared_xp[:n_ballr],
        "kept": kept,
    }


def build_coupled(mg: MidpointGraph, x: int, xp: int, r: int, k_max: int,
                  seed: int) -> CoupledSample:
    """Single coupled replica with full bookkeeping."""
    out = run_coupling_batch(mg, x, xp, r, k_max, 1, seed, chunk=1, keep_fields=True)
    kept = out["kept"][0]
    struct2r = tree_structure(mg.base.degree, 2 * r)
    shared_x = shared_ball_ids(mg, x, r, struct2r)
    shared_xp = shared_ball_ids(mg, xp, r, struct2r)
    shared = {k: (shared_x, v) for k, v in kept["captured_x"].items()}
    shared_prime = {k: (shared_xp, v) for k, v in kept["captured_xp"].items()}
    graph_field = Field(kept["psi"], "decomposition", seed, k_max=k_max)
    n_ballr = tree_ball_size(mg.base.degree, r)
    return CoupledSample(
        graph_field=graph_field,
        tree_values=kept["phi"][:n_ballr],
        tree_values_prime=kept["phi_prime"][:n_ballr],
        rho=out["rho"], rho_prime=out["rho_prime"],
        r=r, k_max=k_max,
        shared=shared, shared_prime=shared_prime,
        identity_residual=float(out["residual_x"][0]),
        identity_residual_prime=float(out["residual_xp"][0]),
    )


def measure_discrepancy(cs: CoupledSample) -> tuple[float, float]:
    """Max |graph field - tree field| over the two radius-r balls."""
    d_x = float(np.abs(cs.graph_field.values[cs.rho] - cs.tree_values).max())
    d_xp = float(np.abs(cs.graph_field.values[cs.rho_prime] - cs.tree_values_prime).max())
    return d_x, d_xp
