"""Constant-coefficient oracle kernels built from the stencil symbol.

For constant coefficients the generator is diagonal in the discrete
Fourier basis with eigenvalue

    symbol(p) = -i*mu*sin(h p)/h + sigma^2 (cos(h p) - 1)/h^2,

so the kernel is an explicit momentum sum. These routines are direct
O(N^2) summations in a fixed ascending momentum order; no FFT, so the
result is bit-reproducible regardless of environment.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConsistencyError, StabilityError
from .lattice import Grid, momentum_set
from .propagator import KernelMatrix

IMAG_RESIDUE_TOL = 1e-11


def symbol(p, h: float, sigma: float, mu: float):
    """Stencil eigenvalue at momentum p (scalar or array)."""
    p = np.asarray(p, dtype=float)
    return (-1j * mu * np.sin(h * p) / h
            + sigma * sigma * (np.cos(h * p) - 1.0) / (h * h))


def continuum_symbol(p, sigma: float, mu: float):
    """Generator eigenvalue of the limiting diffusion, -i*mu*p - sigma^2 p^2/2."""
    p = np.asarray(p, dtype=float)
    return -1j * mu * p - 0.5 * sigma * sigma * p * p


def _kernel_from_weights(grid: Grid, weights: np.ndarray,
                         what: str) -> np.ndarray:
    """Assemble K[x, y] = (1/2L) sum_p w(p) exp(i p (y - x)).

    The sum depends only on the index offset (y - x) mod N because every
    momentum satisfies exp(i p 2L) = 1, so one row determines the matrix.
    """
    n = grid.size
    p = momentum_set(grid).momenta
    h = grid.spacing
    offsets = np.arange(n) * h
    row = (weights[None, :] * np.exp(1j * np.outer(offsets, p))).sum(axis=1) \
        / (2.0 * grid.half_width)
    residue = np.abs(row.imag).max()
    if residue > IMAG_RESIDUE_TOL:
        raise ConsistencyError(
            f"{what}: imaginary residue {residue:.3e} (> {IMAG_RESIDUE_TOL:g})")
    values = np.empty((n, n))
    real_row = row.real
    for ix in range(n):
        values[ix] = np.roll(real_row, ix)
    return values


def fourier_kernel(sigma: float, mu: float, grid: Grid, t: float) -> KernelMatrix:
    """Semidiscrete kernel for constant coefficients via the momentum sum."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    p = momentum_set(grid).momenta
    weights = np.exp(t * symbol(p, grid.spacing, sigma, mu))
    values = _kernel_from_weights(grid, weights, "fourier kernel")
    return KernelMatrix(level=grid.level, half_width=grid.half_width,
                        t=float(t), values=values, scheme="semidiscrete")


def fourier_kernel_discrete(sigma: float, mu: float, grid: Grid, t: float,
                            delta_t: float) -> KernelMatrix:
    """Euler kernel for constant coefficients: weights (1 + dt*symbol)^(t/dt)."""
    if delta_t <= 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    ratio = t / delta_t
    n_steps = round(ratio)
    if abs(ratio - n_steps) > 1e-9 * max(ratio, 1.0) or n_steps < 1:
        raise ValueError(f"t/delta_t = {ratio!r} is not a positive integer")
    h = grid.spacing
    if delta_t > h * h / (sigma * sigma) * (1.0 + 1e-12):
        raise StabilityError(
            f"dt = {delta_t:.6g} exceeds the stability bound h^2/sigma^2 = "
            f"{h * h / (sigma * sigma):.6g}")
    p = momentum_set(grid).momenta
    weights = (1.0 + delta_t * symbol(p, h, sigma, mu)) ** n_steps
    values = _kernel_from_weights(grid, weights, "discrete-time fourier kernel")
    return KernelMatrix(level=grid.level, half_width=grid.half_width,
                        t=float(t), values=values, scheme="euler",
                        delta_t=float(delta_t), n_steps=int(n_steps))


def kernel_space_derivatives(sigma: float, mu: float, grid: Grid, t: float):
    """First and second discrete derivatives of the kernel in the
    departure coordinate, via the stencil eigenvalues of exp(-i p x):
    the first-difference multiplier -i sin(p h)/h and the
    second-difference multiplier 2(cos(p h) - 1)/h^2."""
    p = momentum_set(grid).momenta
    h = grid.spacing
    base = np.exp(t * symbol(p, h, sigma, mu))
    mult1 = -1j * np.sin(p * h) / h
    mult2 = 2.0 * (np.cos(p * h) - 1.0) / (h * h)
    first = _kernel_from_weights(grid, base * mult1, "kernel first derivative")
    second = _kernel_from_weights(grid, base * mult2, "kernel second derivative")
    return first, second


def continuum_kernel(sigma: float, mu: float, grid: Grid, t: float,
                     tail_tol: float = 1e-13) -> np.ndarray:
    """Reference kernel of the limiting diffusion truncated at the grid's
    momentum cutoff pi/h; useful for absolute-error diagnostics.

    Raises ConsistencyError when the Gaussian tail beyond the cutoff is
    not below `tail_tol` at this t (refine the grid or increase t).
    """
    p = momentum_set(grid).momenta
    cutoff = np.pi / grid.spacing
    # tail of (1/2L) sum_{|p|>cutoff} exp(-t sigma^2 p^2 / 2), crude bound
    decay = np.exp(-0.5 * t * sigma * sigma * cutoff * cutoff)
    tail = decay / max(0.5 * t * sigma * sigma * cutoff * momentum_set(grid).spacing, 1e-300)
    if tail > tail_tol:
        raise ConsistencyError(
            f"momentum cutoff tail estimate {tail:.3e} exceeds {tail_tol:g}")
    weights = np.exp(t * continuum_symbol(p, sigma, mu))
    return _kernel_from_weights(grid, weights, "continuum kernel")


# ---------------------------------------------------------------------------
# numerical verification of the sharp trigonometric bounds

@dataclass(frozen=True)
class InequalityCheck:
    name: str
    samples: int
    violations: int
    worst_margin: float   # most negative slack seen; >= 0 means all hold


@dataclass(frozen=True)
class TrigInequalityReport:
    checks: tuple

    @property
    def total_violations(self) -> int:
        return sum(c.violations for c in self.checks)


_EPS = np.finfo(float).eps


def _tally(name, margin, scale):
    # rounding floor: the compared expressions are evaluated with relative
    # error ~eps, amplified by the 1/h^2 factors collected in `scale`
    tol = 64.0 * _EPS * scale
    bad = margin < -tol
    return InequalityCheck(name=name, samples=int(margin.size),
                           violations=int(bad.sum()),
                           worst_margin=float(margin.min()))


def trig_inequality_suite(h_max: float, p_grid: Optional[np.ndarray] = None,
                          n_random: int = 10000, seed: int = 0) -> TrigInequalityReport:
    """Sample the four sharp bounds comparing stencil symbols at spacing
    h and 2h, each on its own validity domain, and report violations.

    Domains: the two difference bounds are checked for 0 <= p <= sqrt(2)/h
    (they are odd in p), the coarse-vs-exact curvature bound for all p,
    and the quarter-curvature bound for |p| <= sqrt(2/3)/h.
    """
    rng = np.random.default_rng(seed)
    hs = rng.uniform(1e-3, h_max, n_random)
    u = rng.uniform(0.0, 1.0, n_random)
    if p_grid is not None:
        extra_h = np.full(len(p_grid), min(h_max, 0.5))
        hs = np.concatenate([hs, extra_h])
        u = np.concatenate([u, np.clip(np.abs(p_grid) * extra_h / np.sqrt(2.0), 0, 1)])

    checks = []

    # first differences at spacing h vs 2h
    p = u * np.sqrt(2.0) / hs
    th = hs * p
    lhs = np.sin(th) / hs - np.sin(2.0 * th) / (2.0 * hs)
    lower = 0.5 * hs ** 2 * p ** 3 - 0.125 * hs ** 4 * p ** 5
    upper = 0.5 * hs ** 2 * p ** 3
    scale = (1.0 + np.abs(p)) / hs
    checks.append(_tally("sin-difference", np.minimum(lhs - lower, upper - lhs), scale))

    # second differences at spacing h vs 2h
    lhs = (np.cos(th) - 1.0) / hs ** 2 - (np.cos(2.0 * th) - 1.0) / (4.0 * hs ** 2)
    lower = -hs ** 2 * p ** 4 / 8.0
    upper = -hs ** 2 * p ** 4 / 8.0 + hs ** 4 * p ** 6 / 48.0
    scale = 1.0 / hs ** 2 + p ** 2
    checks.append(_tally("cos-difference", np.minimum(lhs - lower, upper - lhs), scale))

    # curvature vs exact parabola, all p
    p3 = rng.uniform(-1.0, 1.0, n_random) * 4.0 / hs[:n_random]
    th3 = hs[:n_random] * p3
    lhs = (np.cos(th3) - 1.0) / hs[:n_random] ** 2
    lower = -0.5 * p3 ** 2
    upper = -0.5 * p3 ** 2 + hs[:n_random] ** 2 * p3 ** 4 / 24.0
    scale = 1.0 / hs[:n_random] ** 2 + p3 ** 2
    checks.append(_tally("curvature-envelope", np.minimum(lhs - lower, upper - lhs), scale))

    # quarter-parabola domination on |p| <= sqrt(2/3)/h
    p4 = rng.uniform(-1.0, 1.0, n_random) * np.sqrt(2.0 / 3.0) / hs[:n_random]
    th4 = hs[:n_random] * p4
    margin = -0.25 * p4 ** 2 - (np.cos(th4) - 1.0) / hs[:n_random] ** 2
    scale = 1.0 / hs[:n_random] ** 2 + p4 ** 2
    checks.append(_tally("quarter-parabola", margin, scale))

    return TrigInequalityReport(checks=tuple(checks))
