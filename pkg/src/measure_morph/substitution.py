"""The linear Volterra substitution y(t) = x(t) + m * int_a^t x(s) ds on a grid.

The running integral uses left rectangles, so the map is the unit
lower-triangular matrix  (S x)_i = x_i + m sum_{j<i} x_j dt_j  and stays on
the node set of the input path.  Wiener paths are the natural domain here:
the map does not preserve a pinned right end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InvalidParameter, SingularMatrix
from .measure import (
    LHS_STREAM,
    MAX_ORACLE_STEPS,
    RHS_STREAM,
    IdentityReport,
    MCEstimate,
    gaussian_expectation,
    tilted_gaussian,
    z_score,
)
from .paths import Functional, PathSample, TimeGrid, as_interval, left_square_sum, make_grid, map_paths


def _apply(values, dt, m):
    values = np.asarray(values, dtype=float)
    acc = np.zeros_like(values)
    acc[..., 1:] = np.cumsum(values[..., :-1] * dt, axis=-1)
    return values + m * acc


def _invert(values, dt, m):
    y = np.asarray(values, dtype=float)
    x = np.empty_like(y)
    acc = np.zeros(y.shape[:-1])
    for i in range(y.shape[-1]):
        x[..., i] = y[..., i] - m * acc
        if i < dt.size:
            acc = acc + x[..., i] * dt[i]
    return x


@dataclass(frozen=True, eq=False)
class SubMap:
    m: float
    grid: TimeGrid

    @property
    def matrix(self) -> np.ndarray:
        n1 = self.grid.nodes.size
        lower = np.tril(np.broadcast_to(self.grid.dt, (n1, n1 - 1)), k=-1)
        s = np.eye(n1)
        s[:, :-1] += self.m * lower
        return s

    def apply(self, values):
        return _apply(values, self.grid.dt, self.m)

    def invert(self, values):
        return _invert(values, self.grid.dt, self.m)


def _out_kind(kind):
    return "free" if kind == "bridge" else kind


def apply_sub(x: PathSample, m: float) -> PathSample:
    return PathSample(x.grid, _apply(x.values, x.grid.dt, m), _out_kind(x.kind))


def invert_sub(y: PathSample, m: float) -> PathSample:
    """Exact inverse of :func:`apply_sub` by forward substitution."""
    return PathSample(y.grid, _invert(y.values, y.grid.dt, m), _out_kind(y.kind))


def continuum_inverse(y, m: float, t, a: float = 0.0) -> np.ndarray:
    """x(t) = y(t) - m int_a^t exp(-m (t - s)) y(s) ds for a callable y, by adaptive quadrature."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    for k, tk in enumerate(t):
        tail, _ = integrate.quad(lambda s: math.exp(-m * (tk - s)) * y(s), a, tk, epsabs=1e-13, epsrel=1e-13, limit=200)
        out[k] = y(tk) - m * tail
    return out


def wiener_covariance(grid: TimeGrid) -> np.ndarray:
    """min(t_i, t_j) - a over nodes 1..n (node 0 is pinned to 0)."""
    s = grid.nodes[1:] - grid.interval.a
    return np.minimum.outer(s, s)


def pushforward_covariance(grid: TimeGrid, m: float) -> np.ndarray:
    """Covariance S C S^T of the substituted Wiener path on nodes 1..n."""
    if grid.n > MAX_ORACLE_STEPS:
        raise InvalidParameter(f"dense covariance limited to {MAX_ORACLE_STEPS} steps")
    s = SubMap(m, grid).matrix[1:, 1:]
    cov = s @ wiener_covariance(grid) @ s.T
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularMatrix("pushforward covariance is not positive definite") from None
    return cov


def write_matrix_csv(fh, matrix) -> None:
    np.savetxt(fh, np.asarray(matrix), delimiter=",", fmt="%.17g")


def _reweighting(functional, grid, m, n_paths, seed, threads):
    """Girsanov-type form of the substitution, reported but not asserted.

    For Wiener x, exp(-m^2/2 sum_{i<n} x_i^2 dt_i - m x_n^2 / 2 + c) is
    normalized when c = 1/2 log det(I + C M'); c tends to m (b - a)/2, the
    Itô correction from int x dx = x(b)^2/2 - (b - a)/2.  The reweighted law
    approximates that of invert_sub(Wiener) to O(dt).
    """
    cov = wiener_covariance(grid)
    dt = grid.dt
    weight = np.zeros((grid.n, grid.n))
    weight[np.arange(grid.n - 1), np.arange(grid.n - 1)] = m * m * dt[1:]
    weight[-1, -1] += m
    log_norm, tilted = tilted_gaussian(cov, weight)
    correction = -log_norm

    def values(x):
        logw = -0.5 * (m * m * left_square_sum(x, dt) + m * x[:, -1] ** 2) + correction
        return functional(x, grid) * np.exp(logw)

    mc = MCEstimate.from_values(map_paths(values, grid, seed, n_paths, kind="wiener", stream=RHS_STREAM, threads=threads))
    s_inv = np.linalg.inv(SubMap(m, grid).matrix[1:, 1:])
    return {
        "status": "derived",
        "mc": mc.to_dict(),
        "exact_tilted": gaussian_expectation(functional, tilted, grid),
        "exact_inverse_law": gaussian_expectation(functional, s_inv @ cov @ s_inv.T, grid),
        "correction": float(correction),
        "correction_continuum": 0.5 * m * grid.interval.length,
    }


def verify_sub_identity(
    functional: Functional,
    m: float,
    *,
    n_paths: int,
    grid_n: int,
    seed: int,
    interval=(0.0, 1.0),
    threads: int = 1,
    reweighting: bool = True,
) -> IdentityReport:
    """Compare E[F(S x)] over Wiener x by Monte Carlo (lhs) with its exact Gaussian value (rhs).

    The exact value is carried as an estimate with zero error, so the z score
    measures sampling error alone.  ``extra["reweighting"]`` holds the
    Girsanov-type form (see :func:`_reweighting`).
    """
    grid = make_grid(as_interval(interval), grid_n)
    lhs = MCEstimate.from_values(
        map_paths(
            lambda x: functional(_apply(x, grid.dt, m), grid),
            grid,
            seed,
            n_paths,
            kind="wiener",
            stream=LHS_STREAM,
            threads=threads,
        )
    )
    exact = gaussian_expectation(functional, pushforward_covariance(grid, m), grid)
    rhs = MCEstimate.exact(exact)
    extra = {}
    if reweighting and m >= 0:
        extra["reweighting"] = _reweighting(functional, grid, m, n_paths, seed, threads)
    return IdentityReport(lhs, rhs, 1.0, z_score(lhs, rhs), exact, exact, extra)
