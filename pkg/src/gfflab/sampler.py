"""Samplers for the zero-average field: exact factorization, the random-walk
decomposition over the midpoint graph, and the sprinkling split.

The decomposition writes the field as a sum of independent layers; layer k
is an independent Gaussian load on the midpoint graph, spread by k steps of
the plain walk and recentred over the original vertices.  All batched
sampling is chunked over replicas with per-chunk streams (see `rng`);
within a chunk the layers are drawn from k_max down to 0 (Horner order).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, MidpointGraph
from .rng import chunk_sizes, stream

PROVENANCES = ("cholesky", "decomposition", "split1", "split2", "bar2", "sum")
DEFAULT_CHUNK = 256


@dataclass
class Field:
    """Real-valued function on the original vertices with sampling metadata."""

    values: np.ndarray
    provenance: str
    seed: int
    t: float | None = None
    k_max: int | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass
class ZLayers:
    """Gaussian layers underlying one decomposition sample.

    `z0` is the raw layer-0 load on the midpoint graph; `xi_tail` is the
    recentred sum of all layers k >= 1 on the original vertices -- together
    they reproduce the sampled field and are all the sprinkling split needs.
    `layers` optionally materializes every raw layer (small graphs only).
    """

    z0: np.ndarray
    xi_tail: np.ndarray
    k_max: int
    seed: int
    n_original: int
    variances: np.ndarray
    layers: list[np.ndarray] | None = None


def layer_variances(mg: MidpointGraph) -> np.ndarray:
    """Per-site layer variance: 1/2 on originals, d/4 on midpoints."""
    v = np.full(mg.n_total, mg.base.degree / 4.0)
    v[: mg.n_original] = 0.5
    return v


def default_k_max(gap: float) -> int:
    """Truncation depth putting the geometric layer tail below 1e-8."""
    return int(math.ceil(40.0 / gap))


def k_max_for_bias(gap: float, bias: float) -> int:
    """Smallest truncation with summed tail variance below `bias`
    (tail(K) <= e^{-gap(K+1)} / (2(1 - e^{-gap})))."""
    decay = 1.0 - math.exp(-gap)
    k = math.ceil(-math.log(2.0 * bias * decay) / gap - 1.0)
    return max(1, k)


def _center_originals(values: np.ndarray, n_orig: int) -> np.ndarray:
    v = values[:n_orig]
    return v - v.mean(axis=0, keepdims=True)


def _draw_layer(rng, stds_col: np.ndarray, n_rep: int) -> np.ndarray:
    return rng.standard_normal((stds_col.shape[0], n_rep)) * stds_col


def _tail_sum(mg: MidpointGraph, k_max: int, rng, n_rep: int,
              layers_out: list | None = None) -> np.ndarray:
    """Horner evaluation of sum_{k=1..k_max} Q^k Z_k with fresh Z per layer."""
    q = mg.walk
    stds = np.sqrt(layer_variances(mg))[:, None]
    total = np.zeros((mg.n_total, n_rep))
    for k in range(k_max, 0, -1):
        z = _draw_layer(rng, stds, n_rep)
        if layers_out is not None:
            layers_out.append((k, z))
        total = z + q @ total
    return q @ total


def stationary_projection(mg: MidpointGraph, f: np.ndarray, x: int) -> float:
    """Stationary-weighted average of f over the original vertices, i.e. the
    rank-two projection of f evaluated at an original vertex x."""
    if x >= mg.n_original:
        raise ValueError(f"vertex {x} is a midpoint; projection formula needs an original vertex")
    return float(np.mean(np.asarray(f, dtype=float)[: mg.n_original]))


def sample_decomposition(mg: MidpointGraph, k_max: int, seed: int,
                         store_layers: bool = False) -> tuple[Field, ZLayers]:
    """One field sample through the truncated walk decomposition.

    Every retained layer is recentred over the original vertices, so the
    sample sums to zero exactly (up to round-off) at any truncation.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    rng = stream(seed, "decomp", 0)
    captured: list | None = [] if store_layers else None
    tail = _tail_sum(mg, k_max, rng, 1, captured)
    stds = np.sqrt(layer_variances(mg))[:, None]
    z0 = _draw_layer(rng, stds, 1)
    xi_tail = _center_originals(tail, mg.n_original)[:, 0]
    values = _center_originals(z0, mg.n_original)[:, 0] + xi_tail
    layers = None
    if store_layers:
        layers = [None] * (k_max + 1)
        layers[0] = z0[:, 0].copy()
        for k, z in captured:
            layers[k] = z[:, 0].copy()
    zl = ZLayers(z0[:, 0].copy(), xi_tail, k_max, seed, mg.n_original,
                 layer_variances(mg), layers)
    return Field(values, "decomposition", seed, k_max=k_max), zl


def sample_decomposition_batch(mg: MidpointGraph, k_max: int, n_replicas: int,
                               seed: int, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """(N, n_replicas) matrix of independent decomposition samples."""
    out = np.empty((mg.n_original, n_replicas))
    stds = np.sqrt(layer_variances(mg))[:, None]
    col = 0
    for i, size in enumerate(chunk_sizes(n_replicas, chunk)):
        rng = stream(seed, "decomp", i)
        tail = _tail_sum(mg, k_max, rng, size)
        z0 = _draw_layer(rng, stds, size)
        out[:, col:col + size] = _center_originals(z0 + tail, mg.n_original)
        col += size
    return out


def sample_layer_batch(mg: MidpointGraph, k: int, n_replicas: int, seed: int) -> np.ndarray:
    """(N, n_replicas) samples of the single recentred layer k."""
    rng = stream(seed, f"layer{k}", 0)
    stds = np.sqrt(layer_variances(mg))[:, None]
    v = _draw_layer(rng, stds, n_replicas)
    for _ in range(k):
        v = mg.walk @ v
    return _center_originals(v, mg.n_original)


def split_sprinkle(zl: ZLayers, t: float, seed2: int) -> tuple[Field, Field]:
    """Split a sampled field into independent parts, resolving the layer-0
    load as sqrt(1-t^2) * fresh + t * remainder.

    The fresh copy is drawn from the exact Gaussian conditional given the
    existing layer-0 load (an unconditioned draw would distort the law of
    the remainder); the two returned parts add back to the original field
    exactly.
    """
    if not 0.0 <= t < 1.0:
        raise ValueError("sprinkle strength t must lie in [0, 1)")
    rng = stream(seed2, "split", 0)
    eps = rng.standard_normal(zl.z0.shape[0]) * np.sqrt(zl.variances)
    root = math.sqrt(1.0 - t * t)
    z0_1 = root * zl.z0 + t * eps
    z0_2 = t * zl.z0 - root * eps
    n = zl.n_original

    def ctr(z):
        return z[:n] - z[:n].mean()

    part1 = Field(root * ctr(z0_1) + zl.xi_tail, "split1", seed2, t=t, k_max=zl.k_max)
    part2 = Field(t * ctr(z0_2), "split2", seed2, t=t, k_max=zl.k_max)
    return part1, part2


def sample_split_batch(mg: MidpointGraph, k_max: int, t: float, n_replicas: int,
                       seed: int, chunk: int = DEFAULT_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """Fresh-construction split: draws two independent layer-0 copies and the
    usual k >= 1 layers, returning ((N,R) part1, (N,R) part2); part1 + part2
    is distributed as the full field."""
    if not 0.0 <= t < 1.0:
        raise ValueError("sprinkle strength t must lie in [0, 1)")
    n = mg.n_original
    p1 = np.empty((n, n_replicas))
    p2 = np.empty((n, n_replicas))
    root = math.sqrt(1.0 - t * t)
    col = 0
    for i, size in enumerate(chunk_sizes(n_replicas, chunk)):
        rng = stream(seed, "splitfresh", i)
        tail = _tail_sum(mg, k_max, rng, size)
        z1 = rng.standard_normal((n, size)) * math.sqrt(0.5)
        z2 = rng.standard_normal((n, size)) * math.sqrt(0.5)
        xi_tail = _center_originals(tail, n)
        p1[:, col:col + size] = root * (z1 - z1.mean(axis=0, keepdims=True)) + xi_tail
        p2[:, col:col + size] = t * (z2 - z2.mean(axis=0, keepdims=True))
        col += size
    return p1, p2


def sample_sprinkle_parts(g: Graph, t: float, seed: int) -> tuple[Field, np.ndarray]:
    """Independent sprinkle field t*(z - mean(z)) built from i.i.d. N(0, 1/2)
    site values; also returns the raw site values (they induce the reduced
    graph in the percolation experiments)."""
    rng = stream(seed, "sprinkle", 0)
    z = rng.standard_normal(g.n_vertices) * math.sqrt(0.5)
    values = t * (z - z.mean())
    return Field(values, "bar2", seed, t=t), z


def sample_sprinkle(g: Graph, t: float, seed: int) -> Field:
    return sample_sprinkle_parts(g, t, seed)[0]


def add_fields(a: Field, b: Field) -> Field:
    if a.values.shape != b.values.shape:
        raise ValueError("field size mismatch")
    return Field(a.values + b.values, "sum", a.seed, t=b.t if b.t is not None else a.t,
                 k_max=a.k_max)


def exact_factor(cov: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Factor B with B B^T = cov, dropping the null direction.  Raises if the
    covariance has an eigenvalue below -tol * scale."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    scale = max(vals[-1], 1.0)
    if vals[0] < -tol * scale:
        raise ValueError(f"covariance not PSD: min eigenvalue {vals[0]:.3e}")
    keep = vals > tol * scale
    return vecs[:, keep] * np.sqrt(vals[keep])[None, :]


def sample_exact(cov: np.ndarray, seed: int) -> Field:
    """Exact centered Gaussian sample with the given covariance, drawn in the
    orthogonal complement of the constant direction (zero-sum by design)."""
    b = exact_factor(cov)
    rng = stream(seed, "exact", 0)
    return Field(b @ rng.standard_normal(b.shape[1]), "cholesky", seed)


def sample_exact_batch(cov: np.ndarray, n_replicas: int, seed: int) -> np.ndarray:
    b = exact_factor(cov)
    rng = stream(seed, "exact", 0)
    return b @ rng.standard_normal((b.shape[1], n_replicas))


def dump_field(field: Field, csv_path, sidecar_path) -> None:
    """CSV 'vertex,value' dump plus a JSON sidecar with sampling metadata."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex", "value"])
        for i, v in enumerate(field.values):
            writer.writerow([i, repr(float(v))])
    with open(sidecar_path, "w") as fh:
        json.dump({"provenance": field.provenance, "seed": field.seed,
                   "t": field.t, "k_max": field.k_max}, fh, sort_keys=True)
        fh.write("\n")
