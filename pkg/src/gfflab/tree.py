"""Gaussian field on the depth-truncated d-regular tree.

The field is generated exactly by the increment recursion (root variance
(d-1)/(d-2), increment variance d/(d-1), parent contribution 1/(d-1)),
which reproduces the marginal of the infinite-tree field on the ball.
Survival probabilities are estimated by growing only the root component,
so cost scales with the component rather than with the full ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import chunk_sizes, stream

NEG_INF = float("-inf")
MAX_FRONT = 50_000_000  # flat-front safety cap per chunk
DEFAULT_PRUNE_T_GUARD = 0.5


def root_variance(d: int) -> float:
    return (d - 1) / (d - 2)


def increment_variance(d: int) -> float:
    return d / (d - 1)


def tree_green(d: int, dist: int) -> float:
    """Covariance of the infinite-tree field between vertices at distance
    `dist` (walk Green function)."""
    return root_variance(d) * (d - 1) ** (-dist)


@dataclass(frozen=True)
class TreeStructure:
    """Index arrays for the depth-truncated d-regular tree in BFS order.

    Root is vertex 0 with d children; every other internal vertex has d-1
    children.  Level l occupies [level_start[l], level_start[l+1]) and the
    children of a vertex form a contiguous id range.
    """

    d: int
    depth: int
    n_vertices: int
    parent: np.ndarray
    level: np.ndarray
    level_start: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray

    def level_slice(self, l: int) -> slice:
        return slice(int(self.level_start[l]), int(self.level_start[l + 1]))

    def children_of(self, v: int) -> np.ndarray:
        return np.arange(self.first_child[v], self.first_child[v] + self.n_children[v])


def tree_structure(d: int, depth: int) -> TreeStructure:
    if d < 3:
        raise ValueError("degree must be at least 3")
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    sizes = [1] + [d * (d - 1) ** (l - 1) for l in range(1, depth + 1)]
    level_start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(level_start[-1])
    parent = np.full(n, -1, dtype=np.int64)
    level = np.empty(n, dtype=np.int32)
    for l, size in enumerate(sizes):
        level[level_start[l]:level_start[l + 1]] = l
    for l in range(1, depth + 1):
        parents = np.arange(level_start[l - 1], level_start[l])
        kids_per = d if l == 1 else d - 1
        parent[level_start[l]:level_start[l + 1]] = np.repeat(parents, kids_per)
    n_children = np.zeros(n, dtype=np.int64)
    first_child = np.zeros(n, dtype=np.int64)
    if depth >= 1:
        np.add.at(n_children, parent[1:], 1)
        csum = np.concatenate([[1], 1 + np.cumsum(n_children)[:-1]])
        first_child = csum
    return TreeStructure(d, depth, n, parent, level, level_start, first_child, n_children)


@dataclass
class TreeSample:
    """One field realization on a truncated tree, with optional Bernoulli
    marks and the pruned/sprinkle decomposition values."""

    structure: TreeStructure
    phi: np.ndarray
    increments: np.ndarray
    iota: np.ndarray | None = None
    phi1: np.ndarray | None = None
    phi2: np.ndarray | None = None
    pruned_depth: int | None = None
    seed: int = 0

    @property
    def d(self) -> int:
        return self.structure.d

    @property
    def depth(self) -> int:
        return self.structure.depth


def _phi_batch(ts: TreeStructure, n_rep: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """(n_vertices, n_rep) field values plus the raw increments."""
    d = ts.d
    y = rng.standard_normal((ts.n_vertices, n_rep)) * math.sqrt(increment_variance(d))
    y[0] = rng.standard_normal(n_rep) * math.sqrt(root_variance(d))
    phi = np.empty_like(y)
    phi[0] = y[0]
    for l in range(1, ts.depth + 1):
        sl = ts.level_slice(l)
        phi[sl] = phi[ts.parent[sl]] / (d - 1) + y[sl]
    return phi, y


def sample_tree(d: int, depth: int, seed: int) -> TreeSample:
    """Exact field sample on the depth-truncated tree."""
    ts = tree_structure(d, depth)
    rng = stream(seed, "tree", 0)
    phi, y = _phi_batch(ts, 1, rng)
    return TreeSample(ts, phi[:, 0], y[:, 0], seed=seed)


def _component_mask(ts: TreeStructure, eligible: np.ndarray, max_level: int) -> np.ndarray:
    """Root component of the eligible set, restricted to levels <= max_level.
    Connectivity in a tree reduces to an unbroken parent chain."""
    member = np.zeros(ts.n_vertices, dtype=bool)
    member[0] = eligible[0]
    for l in range(1, max_level + 1):
        sl = ts.level_slice(l)
        member[sl] = eligible[sl] & member[ts.parent[sl]]
    return member


def _draw_iota(n: int, p: float, rng) -> np.ndarray:
    if p >= 1.0:
        return np.ones(n, dtype=bool)
    if p <= 0.0:
        return np.zeros(n, dtype=bool)
    return rng.random(n) < p


def robust_component(sample: TreeSample, h: float, p: float, gamma: float,
                     seed_iota: int) -> tuple[np.ndarray, np.ndarray]:
    """Root component of the robust vertices: field >= h, Bernoulli(p) mark
    on, and children sum >= gamma.

    The children-sum condition is undefined on the deepest sampled level, so
    membership and the per-level counts cover levels 0..depth-1 only.
    Returns (member vertex ids, per-level counts).
    """
    ts = sample.structure
    if not 0.0 <= p <= 1.0:
        raise ValueError("mark probability must lie in [0, 1]")
    max_level = ts.depth - 1
    if max_level < 0:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    rng = stream(seed_iota, "iota", 0)
    iota = _draw_iota(ts.n_vertices, p, rng)
    sample.iota = iota
    eligible = (sample.phi >= h) & iota
    if gamma != NEG_INF:
        child_sum = np.zeros(ts.n_vertices)
        np.add.at(child_sum, ts.parent[1:], sample.phi[1:])
        eligible = eligible & (child_sum >= gamma)
    member = _component_mask(ts, eligible, max_level)
    ids = np.flatnonzero(member)
    counts = np.bincount(ts.level[ids], minlength=max_level + 1)[: max_level + 1]
    return ids, counts.astype(np.int64)


@dataclass
class EtaEstimate:
    """Monte Carlo estimate of the root-component survival probability."""

    h: float
    p: float
    gamma: float
    t: float | None
    depth: int
    replicas: int
    survival_fraction: float
    ci_halfwidth: float
    front_means: np.ndarray = field(repr=False)
    level_counts: np.ndarray | None = field(default=None, repr=False)


def _grow_components(d, h, p, gamma, depth, n_rep, rng):
    """Vectorized lazy growth of the root components of `n_rep` replicas.

    Only the component and its immediate children are ever sampled; with a
    finite gamma the children of every candidate are drawn one level ahead
    to evaluate the children-sum condition, then reused.
    Returns an (n_rep, depth) array of per-level member counts.
    """
    vy = math.sqrt(increment_variance(d))
    counts = np.zeros((n_rep, depth), dtype=np.int64)
    need_sums = gamma != NEG_INF

    phi_o = rng.standard_normal(n_rep) * math.sqrt(root_variance(d))
    alive = (phi_o >= h) & _draw_iota(n_rep, p, rng)
    kids_o = phi_o[:, None] / (d - 1) + rng.standard_normal((n_rep, d)) * vy
    if need_sums:
        alive &= kids_o.sum(axis=1) >= gamma
    counts[:, 0] = alive
    rep = np.repeat(np.flatnonzero(alive), d)
    phi_c = kids_o[alive].reshape(-1)

    for lvl in range(1, depth):
        if rep.size == 0:
            break
        if rep.size > MAX_FRONT:
            raise RuntimeError("component front exceeded the safety cap; "
                               "lower the depth or raise the level h")
        keep = (phi_c >= h) & _draw_iota(rep.size, p, rng)
        rep, phi_c = rep[keep], phi_c[keep]
        kids = phi_c[:, None] / (d - 1) + rng.standard_normal((rep.size, d - 1)) * vy
        if need_sums:
            ok = kids.sum(axis=1) >= gamma
            rep, phi_c, kids = rep[ok], phi_c[ok], kids[ok]
        np.add.at(counts[:, lvl], rep, 1)
        rep = np.repeat(rep, d - 1)
        phi_c = kids.reshape(-1)
    return counts


def estimate_eta(d: int, h: float, p: float, gamma: float, depth: int,
                 replicas: int, seed: int, chunk: int = 8192,
                 keep_counts: bool = False) -> EtaEstimate:
    """Fraction of replicas whose robust root component reaches level
    depth-1, with a 95% normal CI, plus mean per-level front sizes."""
    if depth < 5:
        raise ValueError("depth must be at least 5 for a meaningful survival scan")
    if replicas < 1:
        raise ValueError("need at least one replica")
    front_sums = np.zeros(depth)
    survived = 0
    all_counts = [] if keep_counts else None
    for i, size in enumerate(chunk_sizes(replicas, chunk)):
        rng = stream(seed, "eta", i)
        counts = _grow_components(d, h, p, gamma, depth, size, rng)
        front_sums += counts.sum(axis=0)
        survived += int((counts[:, depth - 1] > 0).sum())
        if keep_counts:
            all_counts.append(counts)
    frac = survived / replicas
    ci = 1.96 * math.sqrt(max(frac * (1 - frac), 1e-12) / replicas)
    level_counts = np.concatenate(all_counts, axis=0) if keep_counts else None
    return EtaEstimate(h, p, gamma, None, depth, replicas, frac, ci,
                       front_sums / replicas, level_counts)


def _neighbor_sum(ts: TreeStructure, phi: np.ndarray, max_level: int) -> np.ndarray:
    """Sum of the field over all d tree neighbors, for levels <= max_level
    (requires the sample to extend one level further)."""
    out = np.zeros_like(phi)
    top = ts.level_slice(max_level + 1).stop
    np.add.at(out, ts.parent[1:top], phi[1:top])          # children contributions
    nonroot = slice(1, ts.level_slice(max_level).stop)
    out[nonroot] += phi[ts.parent[nonroot]]               # parent contribution
    return out


def _prune_cholesky(ts: TreeStructure, t: float, max_level: int):
    """Leaf-to-root Cholesky of the sprinkle conditional covariance
    a*I + b*A restricted to levels <= max_level (no fill-in on trees)."""
    a = t * t / 2.0 - t ** 4 / 4.0
    b = t ** 4 / (4.0 * ts.d)
    n1 = int(ts.level_slice(max_level).stop)
    diag_work = np.full(n1, a)
    l_diag = np.empty(n1)
    l_par = np.zeros(n1)
    for l in range(max_level, 0, -1):
        sl = ts.level_slice(l)
        if np.any(diag_work[sl] <= 0):
            raise ValueError("conditional covariance not positive definite; t too large")
        l_diag[sl] = np.sqrt(diag_work[sl])
        l_par[sl] = b / l_diag[sl]
        np.add.at(diag_work, ts.parent[sl], -l_par[sl] ** 2)
    if diag_work[0] <= 0:
        raise ValueError("conditional covariance not positive definite; t too large")
    l_diag[0] = math.sqrt(diag_work[0])
    return l_diag, l_par, n1


def _prune_batch(ts: TreeStructure, phi: np.ndarray, t: float, rng,
                 max_level: int) -> tuple[np.ndarray, np.ndarray]:
    """Conditional draw of the sprinkle part given the field, on levels
    <= max_level; returns (phi1, phi2) with phi1 = phi - phi2 there."""
    l_diag, l_par, n1 = _prune_cholesky(ts, t, max_level)
    nb = _neighbor_sum(ts, phi, max_level)[:n1]
    mean = (t * t / 2.0) * (phi[:n1] - nb / ts.d)
    z = rng.standard_normal(phi[:n1].shape)
    noise = l_diag.reshape(-1, *([1] * (z.ndim - 1))) * z
    np.add.at(noise, ts.parent[1:n1],
              l_par[1:n1].reshape(-1, *([1] * (z.ndim - 1))) * z[1:n1])
    phi2 = mean + noise
    return phi[:n1] - phi2, phi2


def prune_field(sample: TreeSample, t: float, seed: int,
                t_guard: float = DEFAULT_PRUNE_T_GUARD) -> TreeSample:
    """Fill phi2 (the sprinkle part, drawn from its exact conditional law
    given the field) and phi1 = phi - phi2 on levels 0..depth-1.

    The conditional mean at a vertex references all d neighbors, so the
    deepest sampled level only feeds the computation and carries no pruned
    values itself.
    """
    if t < 0 or t > t_guard:
        raise ValueError(f"sprinkle strength t={t} outside the guard [0, {t_guard}]")
    ts = sample.structure
    if ts.depth < 1:
        raise ValueError("need depth >= 1: the deepest level has no children to average")
    max_level = ts.depth - 1
    n1 = int(ts.level_slice(max_level).stop)
    if t == 0.0:
        phi1, phi2 = sample.phi[:n1].copy(), np.zeros(n1)
    else:
        rng = stream(seed, "prune", 0)
        phi1, phi2 = _prune_batch(ts, sample.phi, t, rng, max_level)
    sample.phi1 = phi1
    sample.phi2 = phi2
    sample.pruned_depth = max_level
    return sample


def pruned_component(sample: TreeSample, h: float, p: float,
                     seed_iota: int) -> tuple[np.ndarray, np.ndarray]:
    """Root component of {phi >= h} & {phi1 >= h} & {mark on}, on the levels
    where the pruned values exist.  Returns (member ids, per-level counts)."""
    if sample.phi1 is None or sample.pruned_depth is None:
        raise ValueError("pruned values missing: call prune_field first")
    ts = sample.structure
    max_level = sample.pruned_depth
    n1 = int(ts.level_slice(max_level).stop)
    rng = stream(seed_iota, "iota", 0)
    iota = _draw_iota(n1, p, rng)
    eligible = np.zeros(ts.n_vertices, dtype=bool)
    eligible[:n1] = (sample.phi[:n1] >= h) & (sample.phi1 >= h) & iota
    member = _component_mask(ts, eligible, max_level)
    ids = np.flatnonzero(member)
    counts = np.bincount(ts.level[ids], minlength=max_level + 1)[: max_level + 1]
    return ids, counts.astype(np.int64)


def pruned_front_frequencies(d: int, h: float, p: float, t_values, depth: int,
                             replicas: int, seed: int, chunk: int = 64) -> dict[float, float]:
    """For each sprinkle strength t, the fraction of replicas whose pruned
    root component reaches the deepest pruned level.  Used to track the
    small-t trend against the unpruned survival probability."""
    struct = tree_structure(d, depth + 1)
    max_level = depth
    out = {}
    for t in t_values:
        reached = 0
        done = 0
        for i, size in enumerate(chunk_sizes(replicas, chunk)):
            rng = stream(seed, f"prunedfront{t}", i)
            phi, _ = _phi_batch(struct, size, rng)
            if t == 0.0:
                phi1 = phi[: struct.level_slice(max_level).stop]
            else:
                phi1, _ = _prune_batch(struct, phi, t, rng, max_level)
            n1 = phi1.shape[0]
            iota = _draw_iota(n1 * size, p, rng).reshape(n1, size)
            eligible = (phi[:n1] >= h) & (phi1 >= h) & iota
            member = eligible[0:1].copy()
            member_all = np.zeros_like(eligible)
            member_all[0] = member[0]
            for l in range(1, max_level + 1):
                sl = struct.level_slice(l)
                member_all[sl] = eligible[sl] & member_all[struct.parent[sl]]
            reached += int(member_all[struct.level_slice(max_level)].any(axis=0).sum())
            done += size
        out[float(t)] = reached / done
    return out
