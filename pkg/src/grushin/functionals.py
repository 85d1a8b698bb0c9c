"""Path functionals shared by the density and rate-function machinery:
the time integral of |path + line|^(2 gamma) and the running maximum.

One implementation, parameterized by horizon, serves the horizon-T, the
unit-horizon, and the deterministic variational form of the integral, so the
scaling identities between them stay testable rather than definitional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from grushin.paths import DiscretePath, TimeGrid, linear_values


@dataclass(frozen=True)
class GrushinParams:
    """Operator data: x-dimension d, y-dimension d_prime, degeneracy exponent gamma."""

    d: int
    d_prime: int
    gamma: float

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        if self.d_prime < 1 or int(self.d_prime) != self.d_prime:
            raise ValueError(f"d_prime must be an integer >= 1, got {self.d_prime}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    grid_n: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("functional value must be nonnegative")


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.zeros(grid.n + 1)
    dt = grid.dt
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def v_values(
    paths: np.ndarray, grid: TimeGrid, x, xi, gamma: float, weights: np.ndarray | None = None
) -> np.ndarray:
    """Trapezoidal quadrature of |path(t) + line(t)|^(2 gamma) for an
    ensemble of paths with shape (count, n + 1, d)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    line = linear_values(grid.T, x, xi, grid)
    if paths.shape[2] != line.shape[1]:
        raise ValueError(
            f"path dimension {paths.shape[2]} does not match endpoint dimension {line.shape[1]}"
        )
    if weights is None:
        weights = trapezoid_weights(grid)
    total = paths + line[None, :, :]
    sq = np.einsum("knd,knd->kn", total, total)
    return sq**gamma @ weights


def v_functional(path: DiscretePath, T: float, x, xi, gamma: float) -> FunctionalValue:
    """int_0^T |path(t) + line(t)|^(2 gamma) dt by the trapezoid rule."""
    if path.grid.T != T:
        raise ValueError(f"path horizon {path.grid.T} does not match T = {T}")
    val = float(v_values(path.values[None], path.grid, x, xi, gamma)[0])
    return FunctionalValue(value=val, grid_n=path.grid.n)


def running_max(path: DiscretePath, T: float, zeta) -> float:
    """Node-max of |path(t) + line from 0 to zeta|."""
    if path.grid.T != T:
        raise ValueError(f"path horizon {path.grid.T} does not match T = {T}")
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if zeta.shape[0] != path.d:
        raise ValueError(f"zeta dimension {zeta.shape[0]} does not match path dimension {path.d}")
    line = linear_values(T, np.zeros_like(zeta), zeta, path.grid)
    return float(np.max(np.linalg.norm(path.values + line, axis=1)))


def staircase_witness(grid_n: int, n: int, d: int = 1) -> DiscretePath:
    """Plateau path: ramp 0 -> 1 on [0, 1/n], hold 1, ramp back to 0 on
    [1 - 1/n, 1]. Witnesses that bounding the integral by the running max
    to the 2 gamma is sharp: the ratio is >= 1 - 2/n.

    grid_n must be a multiple of n so the kinks fall on grid nodes.
    """
    if grid_n % n != 0:
        raise ValueError("grid_n must be a multiple of n")
    from grushin.paths import CAMERON_MARTIN, make_uniform_grid

    grid = make_uniform_grid(1.0, grid_n)
    t = grid.times
    first = np.clip(n * t, 0.0, 1.0)
    vals = np.minimum(first, np.clip(n * (1.0 - t), 0.0, 1.0))
    values = np.zeros((grid_n + 1, d))
    values[:, 0] = vals
    return DiscretePath(grid=grid, values=values, kind=CAMERON_MARTIN)
