"""Branching mean-value operators on the half-line [h, oo): principal
eigenvalue, eigenfunction, and the critical level where the eigenvalue
crosses one.

The base operator spreads mass by a/(d-1) + Y with Y ~ N(0, d/(d-1)) and
multiplies by (d-1), killing below the level h.  The marked/averaged
variant multiplies by the mark probability p and by the chance that the
full (d-1)-children sum clears the floor gamma; conditioning on the child
carried into the test function leaves a Gaussian tail factor of the
remaining (d-2)-sum, which gives the closed-form kernel used here (the
Monte Carlo route in `mc_apply` validates it independently).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .rng import stream

NEG_INF = float("-inf")


def nu_sigma(d: int) -> float:
    """Standard deviation of the reference measure (the stationary marginal
    of the spreading recursion)."""
    return math.sqrt((d - 1) / (d - 2))


def step_sigma(d: int) -> float:
    return math.sqrt(d / (d - 1))


@dataclass(frozen=True)
class OperatorGrid:
    """Quadrature discretization of the operator on [h, h_max].

    `kernel` holds the density of the operator against the reference
    measure; `matrix` = kernel * measure-weights is what power iteration
    applies.  With p = 1 and gamma = -inf the kernel is the plain level-h
    kernel entrywise.
    """

    d: int
    h: float
    p: float
    gamma: float
    nodes: np.ndarray
    weights: np.ndarray
    kernel: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True)
class EigenResult:
    lambda_: float
    chi: np.ndarray
    iterations: int
    residual: float


def _tail_factor(d: int, gamma: float, a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """P(remaining (d-2)-children sum >= gamma - y | first child lands at y),
    for parents at a.  Equals 1 identically at the gamma = -inf sentinel."""
    if gamma == NEG_INF:
        return np.ones(np.broadcast(a, y).shape)
    mean = (d - 2) * a / (d - 1)
    sigma = math.sqrt((d - 2) * d / (d - 1))
    return norm.sf((gamma - y - mean) / sigma)


def build_operator(d: int, h: float, p: float = 1.0, gamma: float = NEG_INF,
                   n_nodes: int = 256, h_max_sigmas: float = 8.0) -> OperatorGrid:
    """Gauss-Legendre grid on [h, max(h, 0) + h_max_sigmas * sigma_nu].

    The window is anchored at the center of the reference measure so its
    tails stay negligible for any level; sentinel -inf for h or gamma drops
    the corresponding indicator symbolically.
    """
    if d < 3:
        raise ValueError("degree must be at least 3")
    if not 0.0 <= p <= 1.0:
        raise ValueError("mark probability must lie in [0, 1]")
    if n_nodes < 32:
        raise ValueError("need at least 32 quadrature nodes")
    span = h_max_sigmas * nu_sigma(d)
    lo = -span if h == NEG_INF else h
    hi = max(0.0, lo) + span if h != NEG_INF else span
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * (x + 1.0) * (hi - lo) + lo
    gl_w = 0.5 * (hi - lo) * w
    nu_pdf = norm.pdf(nodes / nu_sigma(d)) / nu_sigma(d)
    weights = gl_w * nu_pdf

    a = nodes[:, None]
    y = nodes[None, :]
    q = norm.pdf((y - a / (d - 1)) / step_sigma(d)) / step_sigma(d)
    matrix = p * (d - 1) * q * _tail_factor(d, gamma, a, y) * gl_w[None, :]
    kernel = matrix / weights[None, :]
    return OperatorGrid(d, h, p, gamma, nodes, weights, kernel, matrix)


def apply_operator(og: OperatorGrid, f_nodes: np.ndarray) -> np.ndarray:
    return og.matrix @ f_nodes


def measure_norm(og: OperatorGrid, f_nodes: np.ndarray) -> float:
    return math.sqrt(float(np.sum(og.weights * f_nodes ** 2)))


def measure_inner(og: OperatorGrid, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(og.weights * f * g))


def principal_eigen(og: OperatorGrid, tol: float = 1e-12,
                    max_iter: int = 20000) -> EigenResult:
    """Power iteration from the constant positive vector.  The kernel is
    positive on the whole grid, so the iteration converges to the simple
    principal eigenpair with a nonnegative eigenfunction."""
    chi = np.ones(len(og.nodes))
    chi /= measure_norm(og, chi)
    lam = 0.0
    for it in range(1, max_iter + 1):
        nxt = apply_operator(og, chi)
        nrm = measure_norm(og, nxt)
        if nrm == 0.0:
            return EigenResult(0.0, chi, it, 0.0)
        new_chi = nxt / nrm
        residual = measure_norm(og, apply_operator(og, new_chi) - nrm * new_chi)
        converged = abs(nrm - lam) < tol and residual <= 10 * tol
        lam, chi = nrm, new_chi
        if converged:
            return EigenResult(float(lam), chi, it, float(residual))
    raise RuntimeError(f"power iteration did not converge in {max_iter} steps")


def principal_eigenvalue(d: int, h: float, p: float = 1.0, gamma: float = NEG_INF,
                         n_nodes: int = 256) -> float:
    return principal_eigen(build_operator(d, h, p, gamma, n_nodes)).lambda_


def critical_level(d: int, tol: float = 1e-4, n_nodes: int = 256,
                   max_level: float = 16.0) -> float:
    """Bisection on the level of (principal eigenvalue - 1).  The eigenvalue
    is strictly decreasing in the level, equals d-1 far below zero, and
    drops under 1 at finite levels, so the root is positive and finite."""
    lo, hi = 0.0, 1.0
    lam_lo = principal_eigenvalue(d, lo, n_nodes=n_nodes)
    if lam_lo <= 1.0:
        raise RuntimeError(f"eigenvalue at level 0 is {lam_lo:.6f} <= 1; no positive root")
    while principal_eigenvalue(d, hi, n_nodes=n_nodes) >= 1.0:
        hi *= 2.0
        if hi > max_level:
            raise RuntimeError("eigenvalue never crossed 1 on the search interval")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if principal_eigenvalue(d, mid, n_nodes=n_nodes) >= 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eigenvalue_limit_scan(d: int, h: float, p: float, gamma_sequence,
                          n_nodes: int = 256) -> list[tuple[float, float]]:
    """Eigenvalues along a decreasing gamma sequence; the sentinel -inf entry
    equals p times the plain level-h eigenvalue up to quadrature error."""
    return [(float(g), principal_eigenvalue(d, h, p, g, n_nodes)) for g in gamma_sequence]


def apply_pointwise(og: OperatorGrid, f, a: float) -> float:
    """Quadrature evaluation of the operator applied to a function at an
    arbitrary point (used against the Monte Carlo oracle)."""
    if og.h != NEG_INF and a < og.h:
        return 0.0
    y = og.nodes
    q = norm.pdf((y - a / (og.d - 1)) / step_sigma(og.d)) / step_sigma(og.d)
    gl_w = og.weights / (norm.pdf(y / nu_sigma(og.d)) / nu_sigma(og.d))
    row = og.p * (og.d - 1) * q * _tail_factor(og.d, og.gamma, np.asarray(a), y) * gl_w
    return float(np.sum(row * f(y)))


def mc_apply(d: int, h: float, p: float, gamma: float, f, a: float,
             n_samples: int, seed: int) -> float:
    """Direct simulation of the defining expectation: draw the d-1 children
    displacements, keep the realizations whose sum clears gamma, and average
    the test function over the first (exchangeable) child."""
    if h != NEG_INF and a < h:
        return 0.0
    rng = stream(seed, "mcoperator", 0)
    y = rng.standard_normal((n_samples, d - 1)) * step_sigma(d)
    pts = a / (d - 1) + y
    vals = f(pts[:, 0])
    if h != NEG_INF:
        vals = vals * (pts[:, 0] >= h)
    if gamma != NEG_INF:
        vals = vals * (pts.sum(axis=1) >= gamma)
    return float(p * (d - 1) * vals.mean())
