"""Central-difference stencils and the periodic tridiagonal generator.

The generator of the semidiscrete scheme couples each grid point to its
two cyclic neighbours:

    up[j]   = vol2(x_j)/(2h^2) + drift(x_j)/(2h)    (to j+1 mod N)
    down[j] = vol2(x_j)/(2h^2) - drift(x_j)/(2h)    (to j-1 mod N)
    diag[j] = -vol2(x_j)/h^2

Rows sum to zero, and above the admissible level both off-diagonal bands
are strictly positive, making the operator a Markov generator.  Storage
is banded-cyclic; dense matrices are materialized only by the propagator.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, m_zero
from .lattice import Grid

_ROWSUM_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicTridiagonalOperator:
    """Cyclic tridiagonal operator in banded form."""

    diag: np.ndarray
    up: np.ndarray
    down: np.ndarray
    spacing: float
    level: int

    def __post_init__(self):
        n = len(self.diag)
        if not (len(self.up) == len(self.down) == n):
            raise ValueError("band length mismatch")
        for a in (self.diag, self.up, self.down):
            a.setflags(write=False)

    def row_sum_residual(self) -> float:
        """Largest |diag + up + down| entry; zero for a conservative
        generator (the adjoint of a variable-coefficient generator is
        conservative in its columns instead)."""
        return float(np.abs(self.diag + self.up + self.down).max())

    @property
    def dimension(self) -> int:
        return len(self.diag)

    @property
    def is_markov(self) -> bool:
        """True when both off-diagonal bands are strictly positive."""
        return bool(np.all(self.up > 0.0) and np.all(self.down > 0.0))

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Apply the operator along the last axis of f (periodic wrap)."""
        f = np.asarray(f)
        if f.shape[-1] != self.dimension:
            raise ValueError(f"expected {self.dimension} samples, got {f.shape[-1]}")
        return (self.diag * f
                + self.up * np.roll(f, -1, axis=-1)
                + self.down * np.roll(f, 1, axis=-1))


def apply_nabla(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Central first difference (f(x+h) - f(x-h)) / 2h with periodic wrap."""
    f = np.asarray(f)
    if f.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {f.shape[-1]}")
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * grid.spacing)


def apply_delta(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second difference (f(x+h) + f(x-h) - 2f(x)) / h^2 with periodic wrap."""
    f = np.asarray(f)
    if f.shape[-1] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {f.shape[-1]}")
    return (np.roll(f, -1, axis=-1) + np.roll(f, 1, axis=-1) - 2.0 * f) \
        / grid.spacing ** 2


def build_generator(field: CoefficientField, grid: Grid,
                    check_level: bool = True) -> PeriodicTridiagonalOperator:
    """Assemble the generator of `field` on `grid`.

    Below the admissible level the operator is still built but a warning
    flags it as non-Markov (negative jump rates); campaign code refuses
    such levels.
    """
    h = grid.spacing
    s2 = np.asarray(field.vol_squared(grid.points), dtype=float)
    mu = np.asarray(field.drift(grid.points), dtype=float)
    up = s2 / (2.0 * h * h) + mu / (2.0 * h)
    down = s2 / (2.0 * h * h) - mu / (2.0 * h)
    diag = -(up + down)   # equals -s2/h^2; summed form keeps rows exactly zero
    op = PeriodicTridiagonalOperator(diag=diag, up=up, down=down,
                                     spacing=h, level=grid.level)
    scale = max(np.abs(diag).max(), 1.0)
    if op.row_sum_residual() > _ROWSUM_TOL * scale:
        raise ValueError(
            f"generator rows must sum to zero; residual {op.row_sum_residual():.3e}")
    if check_level and not op.is_markov:
        warnings.warn(
            f"level {grid.level} is below the admissible threshold "
            f"{m_zero(field, grid.half_width)} for {field.label}: "
            "off-diagonal rates are not all positive", stacklevel=2)
    return op


def adjoint(op: PeriodicTridiagonalOperator) -> PeriodicTridiagonalOperator:
    """Transpose in banded form: up'[j] = down[j+1], down'[j] = up[j-1]."""
    return PeriodicTridiagonalOperator(
        diag=op.diag.copy(),
        up=np.roll(op.down, -1),
        down=np.roll(op.up, 1),
        spacing=op.spacing,
        level=op.level,
    )
