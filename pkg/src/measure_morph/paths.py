"""Time grids, sampled Brownian bridges and Wiener paths, Itô sums and the path transform.

Random streams are counter based: paths are produced in fixed blocks of
``BLOCK_SIZE`` and every block draws from a generator keyed by
``(seed, stream, block)``.  A path is therefore a pure function of
``(grid, seed, stream, path_index)``, whatever order or worker count is used.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .diffeo import Diffeo, Interval
from .errors import GridMismatch, InvalidParameter

BLOCK_SIZE = 1024
MAX_STEPS = 2**20

KINDS = ("bridge", "wiener", "free")


def as_interval(interval) -> Interval:
    if isinstance(interval, Interval):
        return interval
    a, b = interval
    return Interval(float(a), float(b))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray
    interval: Interval
    diffeo: Optional[Diffeo] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise InvalidParameter("grid needs at least 2 steps")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidParameter("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def provenance(self) -> str:
        return "uniform" if self.diffeo is None else "pulled_back"

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def uniform(self) -> "TimeGrid":
        """The uniform grid with the same interval and step count."""
        return make_grid(self.interval, self.n)


def _uniform_nodes(iv: Interval, n: int) -> np.ndarray:
    nodes = iv.a + iv.length * (np.arange(n + 1) / n)
    nodes[-1] = iv.b
    return nodes


def make_grid(interval, n: int, diffeo: Optional[Diffeo] = None) -> TimeGrid:
    """Uniform grid on ``interval``, or its pull-back ``t_i = g^{-1}(tau_i)`` under ``diffeo``."""
    iv = as_interval(interval)
    if int(n) != n or not 2 <= n <= MAX_STEPS:
        raise InvalidParameter(f"grid steps must be an integer in [2, {MAX_STEPS}], got {n}")
    n = int(n)
    tau = _uniform_nodes(iv, n)
    if diffeo is None:
        return TimeGrid(tau, iv)
    if not diffeo.maps_interval_onto_itself(iv):
        raise InvalidParameter(f"{diffeo.family} does not map [{iv.a}, {iv.b}] onto itself")
    nodes = np.asarray(diffeo.inverse(tau), dtype=float)
    nodes[0], nodes[-1] = iv.a, iv.b
    return TimeGrid(nodes, iv, diffeo)


@dataclass(frozen=True, eq=False)
class PathSample:
    grid: TimeGrid
    values: np.ndarray
    kind: str = "bridge"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown path kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise GridMismatch(f"{values.size} values for {self.grid.nodes.size} nodes")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("path values must be finite")
        if self.kind == "bridge" and (values[0] != 0.0 or values[-1] != 0.0):
            raise InvalidParameter("bridge paths must vanish at both ends")
        object.__setattr__(self, "values", values)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


# ---------------------------------------------------------------------------
# sampling


def _rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def bridge_block(grid: TimeGrid, seed: int, block: int, stream: int = 0) -> np.ndarray:
    """``BLOCK_SIZE`` bridges pinned to 0 at both ends, shape ``(BLOCK_SIZE, n + 1)``.

    Each step draws x_{i+1} | x_i from the exact conditional law
    N(x_i r_{i+1}/r_i, dt_i r_{i+1}/r_i), with r_i = b - t_i.  Written as
    x_i = r_i w_i this is a random walk in w with variance dt_i/(r_i r_{i+1}),
    which is what is accumulated below.
    """
    t = grid.nodes
    r = grid.interval.b - t
    z = _rng(seed, stream, block).standard_normal((BLOCK_SIZE, grid.n - 1))
    scale = np.sqrt(np.diff(t)[:-1] / (r[:-2] * r[1:-1]))
    x = np.zeros((BLOCK_SIZE, grid.n + 1))
    x[:, 1:-1] = np.cumsum(z * scale, axis=1) * r[1:-1]
    return x


def wiener_block(grid: TimeGrid, seed: int, block: int, stream: int = 0) -> np.ndarray:
    """``BLOCK_SIZE`` Wiener paths started at 0, shape ``(BLOCK_SIZE, n + 1)``."""
    z = _rng(seed, stream, block).standard_normal((BLOCK_SIZE, grid.n))
    x = np.zeros((BLOCK_SIZE, grid.n + 1))
    x[:, 1:] = np.cumsum(z * np.sqrt(grid.dt), axis=1)
    return x


_SAMPLERS = {"bridge": bridge_block, "wiener": wiener_block}


def _check_run(seed: int, n_paths: int) -> None:
    if not 0 <= int(seed) < 2**64:
        raise InvalidParameter(f"seed must be a 64-bit unsigned integer, got {seed}")
    if n_paths < 1:
        raise InvalidParameter("need at least one path")


def _sample_one(kind, grid, seed, path_index, stream):
    _check_run(seed, 1)
    if path_index < 0:
        raise InvalidParameter("path_index must be >= 0")
    block, row = divmod(int(path_index), BLOCK_SIZE)
    values = _SAMPLERS[kind](grid, seed, block, stream)[row].copy()
    return PathSample(grid, values, kind)


def sample_bridge(grid: TimeGrid, seed: int, path_index: int, stream: int = 0) -> PathSample:
    return _sample_one("bridge", grid, seed, path_index, stream)


def sample_wiener(grid: TimeGrid, seed: int, path_index: int, stream: int = 0) -> PathSample:
    return _sample_one("wiener", grid, seed, path_index, stream)


def map_paths(
    fn: Callable[[np.ndarray], np.ndarray],
    grid: TimeGrid,
    seed: int,
    n_paths: int,
    *,
    kind: str = "bridge",
    stream: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Apply ``fn`` to blocks of sampled paths and return its outputs in path order.

    ``fn`` maps an array of shape ``(k, n + 1)`` to an array whose first axis
    has length ``k``.  Only one block per worker is alive at a time.
    """
    _check_run(seed, n_paths)
    sampler = _SAMPLERS[kind]
    n_blocks = math.ceil(n_paths / BLOCK_SIZE)

    def work(block):
        count = min(BLOCK_SIZE, n_paths - block * BLOCK_SIZE)
        return np.asarray(fn(sampler(grid, seed, block, stream)[:count]))

    if threads <= 1 or n_blocks == 1:
        parts = [work(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    return np.concatenate(parts)


def sample_paths(grid: TimeGrid, seed: int, n_paths: int, *, kind="bridge", stream=0, threads=1) -> np.ndarray:
    """All ``n_paths`` paths as one ``(n_paths, n + 1)`` array."""
    return map_paths(lambda v: v, grid, seed, n_paths, kind=kind, stream=stream, threads=threads)


# ---------------------------------------------------------------------------
# functionals and integrals


@dataclass(frozen=True)
class Functional:
    """Path functional F[y] evaluated on a discretized path.

    kinds: ``constant`` (1), ``point-square`` (y(t0)^2), ``exp-quadratic``
    (exp(-lam y(t0)^2)) and ``integrated-square`` (left-rectangle sum of
    y^2 dt).  y(t0) is linearly interpolated when t0 is not a node.
    """

    kind: str
    t0: Optional[float] = None
    lam: float = 0.0

    KINDS = ("constant", "point-square", "exp-quadratic", "integrated-square")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameter(f"unknown functional {self.kind!r}")
        if self.kind in ("point-square", "exp-quadratic"):
            if self.t0 is None or not math.isfinite(self.t0):
                raise InvalidParameter(f"{self.kind} needs a finite t0")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidParameter(f"lam must be >= 0, got {self.lam}")

    @classmethod
    def constant(cls):
        return cls("constant")

    @classmethod
    def point_square(cls, t0):
        return cls("point-square", t0=float(t0))

    @classmethod
    def exp_quadratic(cls, lam, t0):
        return cls("exp-quadratic", t0=float(t0), lam=float(lam))

    @classmethod
    def integrated_square(cls):
        return cls("integrated-square")

    @property
    def uses_point(self) -> bool:
        return self.kind in ("point-square", "exp-quadratic")

    def point_weights(self, grid: TimeGrid) -> np.ndarray:
        """Weights w with y(t0) = w . y on ``grid``."""
        nodes = grid.nodes
        if not nodes[0] < self.t0 < nodes[-1]:
            raise InvalidParameter(f"t0={self.t0} must be strictly inside [{nodes[0]}, {nodes[-1]}]")
        i = int(np.searchsorted(nodes, self.t0, side="right")) - 1
        frac = (self.t0 - nodes[i]) / (nodes[i + 1] - nodes[i])
        w = np.zeros(nodes.size)
        w[i] = 1.0 - frac
        w[i + 1] += frac
        return w

    def __call__(self, values, grid: TimeGrid):
        values = np.asarray(values, dtype=float)
        if self.kind == "constant":
            return np.ones(values.shape[:-1])
        if self.kind == "integrated-square":
            return left_square_sum(values, grid.dt)
        y0 = values @ self.point_weights(grid)
        if self.kind == "point-square":
            return y0 * y0
        return np.exp(-self.lam * y0 * y0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.uses_point:
            d["t0"] = self.t0
        if self.kind == "exp-quadratic":
            d["lam"] = self.lam
        return d


def left_square_sum(values, dt):
    """sum_{i<n} x_i^2 dt_i along the last axis."""
    values = np.asarray(values, dtype=float)
    return (values[..., :-1] ** 2) @ dt


def ito_integral(x: PathSample, f: Optional[Callable] = None) -> float:
    """Left-point sum  sum_i x_i f(t_i) (x_{i+1} - x_i)  (the Itô convention)."""
    v = x.values
    weight = v[:-1] if f is None else v[:-1] * np.asarray(f(x.t[:-1]), dtype=float)
    return float(weight @ np.diff(v))


def quad_potential(x: PathSample, m: float) -> float:
    """m^2 sum_{i<n} x_i^2 dt_i."""
    return float(m * m * left_square_sum(x.values, x.grid.dt))


def _transform_factor(grid: TimeGrid, g: Diffeo) -> np.ndarray:
    if grid.diffeo is None or grid.diffeo != g:
        raise GridMismatch("path was not sampled on the pull-back grid of this diffeomorphism")
    return np.sqrt(g.derivs(grid.nodes).g1)


def transform_values(values, grid: TimeGrid, g: Diffeo) -> np.ndarray:
    """Batch form of :func:`transform_path` on an array of bridge values."""
    return np.asarray(values) * _transform_factor(grid, g)


def transform_path(x: PathSample, g: Diffeo) -> PathSample:
    """Image y(tau_i) = x(t_i) sqrt(g'(t_i)) on the uniform tau grid."""
    if x.kind != "bridge":
        raise InvalidParameter("transform_path is defined for bridge paths")
    y = transform_values(x.values, x.grid, g)
    return PathSample(x.grid.uniform(), y, "bridge")


def write_paths_csv(fh, grid: TimeGrid, values: Iterable, first_id: int = 0) -> None:
    """Write paths in long format with columns ``path_id,t,x``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_id", "t", "x"])
    for k, row in enumerate(values):
        for t, x in zip(grid.nodes, row):
            w.writerow([first_id + k, repr(float(t)), repr(float(x))])
