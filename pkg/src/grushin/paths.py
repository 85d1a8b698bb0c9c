"""Time grids, exact Brownian-bridge sampling, linear reference paths, and
the path norms (sup, Cameron-Martin energy, Besov-type double-integral norm).

All paths are stored by their node values on a time grid and interpreted as
piecewise linear between nodes. Bridge samples are exact in distribution at
the nodes: a Brownian path is built from Gaussian increments and pinned by
``w(t) - (t/T) w(T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BRIDGE = "bridge-sample"
LINEAR = "linear"
CAMERON_MARTIN = "cameron-martin"

#: default Besov-norm parameters used throughout the asymptotics experiments
DEFAULT_P = 12.0
DEFAULT_THETA = 0.25

#: Hoelder constant 96 paired with exponent 1/6 at (p, theta) = (12, 1/4)
GARSIA_CONSTANT = 96.0
GARSIA_EXPONENT = 1.0 / 6.0


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing grid 0 = t_0 < ... < t_n = T."""

    T: float
    n: int
    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if t.shape != (self.n + 1,):
            raise ValueError("times must have n + 1 entries")
        if t[0] != 0.0 or t[-1] != self.T:
            raise ValueError("times must start at 0 and end at T exactly")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class DiscretePath:
    """Node values of a path on a time grid, piecewise linear in between.

    ``values`` has shape ``(n + 1, d)``. Bridge samples and Cameron-Martin
    paths are pinned to zero at both ends; the linear path carries the
    endpoints.
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    kind: str

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] == 1 and self.grid.n + 1 != 1:
            v = v.T
        if v.shape[0] != self.grid.n + 1:
            raise ValueError(
                f"values has {v.shape[0]} nodes, grid has {self.grid.n + 1}"
            )
        if self.kind not in (BRIDGE, LINEAR, CAMERON_MARTIN):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.kind in (BRIDGE, CAMERON_MARTIN):
            if np.any(v[0] != 0.0) or np.any(v[-1] != 0.0):
                raise ValueError(f"{self.kind} paths must vanish at both endpoints")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: (seed, stream_index) fully determines the
    sample sequence, independent of worker count or call interleaving."""

    seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed).jumped(self.stream_index))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_index + offset)


def make_uniform_grid(T: float, n: int) -> TimeGrid:
    """Uniform grid with n subintervals on [0, T]."""
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    times = np.linspace(0.0, T, n + 1)
    times[0] = 0.0
    times[-1] = T
    return TimeGrid(T=float(T), n=int(n), times=times)


def sample_bridge_values(grid: TimeGrid, d: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Exact node values of `count` independent d-dimensional bridges on the
    grid, shape (count, n + 1, d). Each coordinate has covariance
    s ^ t - s t / T; coordinates are independent."""
    dt = grid.dt
    inc = rng.normal(0.0, 1.0, size=(count, grid.n, d)) * np.sqrt(dt)[None, :, None]
    w = np.empty((count, grid.n + 1, d))
    w[:, 0, :] = 0.0
    np.cumsum(inc, axis=1, out=w[:, 1:, :])
    w -= (grid.times / grid.T)[None, :, None] * w[:, -1:, :]
    w[:, 0, :] = 0.0
    w[:, -1, :] = 0.0
    return w


def sample_bridge(grid: TimeGrid, d: int, rng: RngStream | np.random.Generator) -> DiscretePath:
    """One exact d-dimensional Brownian bridge pinned at 0 at both ends."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    values = sample_bridge_values(grid, d, gen, 1)[0]
    return DiscretePath(grid=grid, values=values, kind=BRIDGE)


def linear_path(T: float, x, xi, grid: TimeGrid) -> DiscretePath:
    """The straight line from x at time 0 to xi at time T, sampled on the grid."""
    if grid.T != T:
        raise ValueError(f"grid horizon {grid.T} does not match T = {T}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if x.shape != xi.shape:
        raise ValueError("x and xi must have the same dimension")
    frac = (grid.times / T)[:, None]
    return DiscretePath(grid=grid, values=x[None, :] + frac * (xi - x)[None, :], kind=LINEAR)


def linear_values(T: float, x, xi, grid: TimeGrid) -> np.ndarray:
    return linear_path(T, x, xi, grid).values


def _besov_uniform(values: np.ndarray, T: float, p: float, theta: float) -> np.ndarray:
    """p-th power of the Besov norm for a batch of paths on a uniform grid.

    ``values``: shape (batch, n + 1, d). Off-diagonal segment-pair cells are
    integrated by the midpoint rule; diagonal cells, where the integrand is
    |slope|^p |u - v|^{p(1-theta)-1} for a linear segment, in closed form.
    Naive quadrature would diverge on the diagonal.
    """
    batch, n1, _ = values.shape
    n = n1 - 1
    dt = T / n
    mids = 0.5 * (values[:, 1:, :] + values[:, :-1, :])
    tm = (np.arange(n) + 0.5) * dt
    dist = np.abs(tm[:, None] - tm[None, :])
    np.fill_diagonal(dist, 1.0)
    kern = dist ** (-(1.0 + p * theta))
    np.fill_diagonal(kern, 0.0)

    diff = mids[:, :, None, :] - mids[:, None, :, :]
    jump = np.sqrt(np.einsum("bijd,bijd->bij", diff, diff))
    off = np.einsum("bij,ij->b", jump**p, kern) * dt * dt

    q = p * (1.0 - theta) - 1.0
    slopes = np.linalg.norm(values[:, 1:, :] - values[:, :-1, :], axis=2) / dt
    diag = np.sum(slopes**p, axis=1) * 2.0 * dt ** (q + 2.0) / ((q + 1.0) * (q + 2.0))
    return off + diag


def besov_norm(path: DiscretePath, p: float = DEFAULT_P, theta: float = DEFAULT_THETA) -> float:
    """Quadrature approximation of the double-integral oscillation norm
    ( iint |psi(u)-psi(v)|^p / |u-v|^{1+p theta} du dv )^{1/p} for the
    piecewise-linear interpolant of the path."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not 0 < theta < 0.5:
        raise ValueError(f"theta must lie in (0, 1/2), got {theta}")
    if p * theta <= 1:
        raise ValueError(f"p * theta must exceed 1 (got {p * theta}); the integral may diverge")
    return float(_besov_uniform(path.values[None], path.grid.T, p, theta)[0]) ** (1.0 / p)


def besov_norm_batch(
    values: np.ndarray,
    T: float,
    p: float = DEFAULT_P,
    theta: float = DEFAULT_THETA,
    block: int = 256,
) -> np.ndarray:
    """Besov norms of an ensemble of paths, shape (count, n + 1, d)."""
    if p * theta <= 1:
        raise ValueError(f"p * theta must exceed 1 (got {p * theta})")
    out = np.empty(values.shape[0])
    for lo in range(0, values.shape[0], block):
        hi = min(lo + block, values.shape[0])
        out[lo:hi] = _besov_uniform(values[lo:hi], T, p, theta) ** (1.0 / p)
    return out


def cm_norm(h: DiscretePath) -> float:
    """Energy norm sqrt( int |h'|^2 ), exact for piecewise-linear h."""
    if h.kind != CAMERON_MARTIN:
        raise ValueError(f"cm_norm requires a cameron-martin path, got kind {h.kind!r}")
    dh = np.diff(h.values, axis=0)
    return float(np.sqrt(np.sum(np.sum(dh * dh, axis=1) / h.grid.dt)))


def sup_norm(path: DiscretePath) -> float:
    """Node-max of the Euclidean norm along the path.

    For sampled bridges this is the max over grid nodes, not over continuous
    time; the gap is an O(sqrt(T/n)) discretization effect.
    """
    return float(np.max(np.linalg.norm(path.values, axis=1)))
