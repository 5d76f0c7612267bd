"""Dyadic periodic grids on [-L, L] and their momentum sets.

Level-m grids have spacing h = L * 2**-m and 2**(m+1) points
{-L, -L+h, ..., L-h}; the right endpoint L is identified with -L.
Grid coordinates are always recomputed from integer indices so that
refining a grid reproduces the coarse points bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError

DEFAULT_MAX_DIM = 2048


@dataclass(frozen=True)
class Grid:
    """Periodic dyadic lattice at refinement level `level`."""

    level: int
    half_width: float
    points: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.points is None:
            pts = self.half_width * (np.arange(self.size) * 2.0 ** -self.level - 1.0)
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return 2 ** (self.level + 1)

    @property
    def spacing(self) -> float:
        return self.half_width * 2.0 ** -self.level

    def point(self, j: int) -> float:
        """Coordinate of index j (wraps modulo the grid size)."""
        j = j % self.size
        return self.half_width * (j * 2.0 ** -self.level - 1.0)


@dataclass(frozen=True)
class MomentumSet:
    """Momenta diagonalizing translation-invariant stencils on a grid.

    Holds the N = 2**(m+1) values {pi*k/L : k = -N/2, ..., N/2 - 1},
    spaced by pi/L, so the discrete transform below is invertible.
    """

    momenta: np.ndarray
    spacing: float


def build_grid(m: int, L: float, max_dim: int = DEFAULT_MAX_DIM) -> Grid:
    """Construct the level-m grid on [-L, L].

    Raises ResourceLimitError when 2**(m+1) would exceed `max_dim`.
    """
    if m < 0 or m != int(m):
        raise ValueError(f"level must be a nonnegative integer, got {m}")
    if L <= 0:
        raise ValueError(f"half-width must be positive, got {L}")
    n = 2 ** (int(m) + 1)
    if n > max_dim:
        raise ResourceLimitError(
            f"grid at level {m} has {n} points, exceeding the guard {max_dim}")
    return Grid(level=int(m), half_width=float(L))


def periodic_distance(x, y, L: float):
    """Distance on the circle of circumference 2L: min_n |x - y - 2Ln|.

    Accepts scalars or arrays; the result lies in [0, L].
    """
    d = np.abs(np.remainder(np.asarray(x) - np.asarray(y), 2.0 * L))
    return np.minimum(d, 2.0 * L - d)


def momentum_set(grid: Grid) -> MomentumSet:
    """Momentum set of a grid, one momentum per grid point."""
    n = grid.size
    k = np.arange(-(n // 2), n // 2)
    momenta = np.pi * k / grid.half_width
    momenta.setflags(write=False)
    return MomentumSet(momenta=momenta, spacing=np.pi / grid.half_width)


def forward_transform(grid: Grid, f: np.ndarray) -> np.ndarray:
    """f(x) -> h * sum_x f(x) exp(-i p x) over the grid's momentum set."""
    f = np.asarray(f)
    if f.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {f.shape[-1]}")
    p = momentum_set(grid).momenta
    phase = np.exp(-1j * np.outer(p, grid.points))
    return grid.spacing * (f @ phase.T)


def inverse_transform(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    """Inverse of forward_transform: (1/2L) sum_p fhat(p) exp(i p x)."""
    fhat = np.asarray(fhat)
    if fhat.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} coefficients, got {fhat.shape[-1]}")
    p = momentum_set(grid).momenta
    phase = np.exp(1j * np.outer(grid.points, p))
    return (fhat @ phase.T) / (2.0 * grid.half_width)
