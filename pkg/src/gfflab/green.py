"""Lazy-walk operators and the zero-average Green function / field covariance.

The dense Green table is a validation tool: it is exact (one linear solve)
but O(N^2), so construction is capped; large-graph experiments never touch
it and sample through the walk decomposition instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, lazy_matrix

DEFAULT_SIZE_CAP = 4096


class GreenSizeError(ValueError):
    pass


@dataclass(frozen=True)
class GreenTable:
    """Symmetric table gbar(x, y) of the zero-average Green density together
    with the field scaling constant c0 = d/2; the covariance of the field is
    c0 * gbar."""

    base: Graph
    gbar: np.ndarray
    c0: float


def lazy_step(g: Graph, f: np.ndarray) -> np.ndarray:
    """One lazy-walk averaging step: f(x)/2 + mean of f over neighbors / 2."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != g.n_vertices:
        raise ValueError("field length does not match vertex count")
    return 0.5 * f + 0.5 * f[g.adjacency].mean(axis=1)


def zero_average_green(g: Graph, size_cap: int = DEFAULT_SIZE_CAP) -> GreenTable:
    """Exact zero-average Green table.

    Solves the augmented system (I - P + 1 pi^T) X = I - 1 pi^T, which is
    nonsingular on connected graphs and whose unique solution is the
    zero-average Green function (rows automatically sum to zero).
    """
    n = g.n_vertices
    if n > size_cap:
        raise GreenSizeError(f"dense Green table capped at N <= {size_cap}, got {n}")
    p = lazy_matrix(g).toarray()
    proj = np.full((n, n), 1.0 / n)
    lhs = np.eye(n) - p + proj
    rhs = np.eye(n) - proj
    try:
        gbar_full = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - Graph is connected
        raise GreenSizeError("singular walk system; is the graph connected?") from exc
    gbar_full = 0.5 * (gbar_full + gbar_full.T)  # exact up to round-off
    return GreenTable(g, gbar_full / g.degree, g.degree / 2.0)


def green_table_raw(gt: GreenTable) -> np.ndarray:
    """The unnormalized table deg * gbar (rows sum to zero)."""
    return gt.gbar * gt.base.degree


def covariance_table(gt: GreenTable) -> np.ndarray:
    """Field covariance c0 * gbar: PSD with the constant vector as its only
    null direction."""
    return gt.c0 * gt.gbar


def dump_covariance_csv(gt: GreenTable, path) -> None:
    """Row-major 'i,j,value' dump of the covariance for cross-tool checks."""
    cov = covariance_table(gt)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "value"])
        n = cov.shape[0]
        for i in range(n):
            for j in range(n):
                writer.writerow([i, j, repr(float(cov[i, j]))])
