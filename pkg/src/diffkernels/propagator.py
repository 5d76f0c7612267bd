"""Transition kernels of the semidiscrete and explicit Euler schemes.

The semidiscrete kernel is h^-1 exp(t*G) for the banded generator G,
computed dense via scaling-and-squaring; the Euler kernel is
h^-1 (I + dt*G)^(t/dt) by binary powering.  Row x of a KernelMatrix is
the density over arrival points y, so h * (row sum) = 1.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConsistencyError, ResourceLimitError, StabilityError
from .generator import PeriodicTridiagonalOperator, adjoint

MASS_TOL = 1e-10
NEGATIVITY_TOL = -1e-12
DERIVATIVE_MATCH_TOL = 1e-9
EULER_IDENTITY_TOL = 1e-10
MAX_DENSE_DIM = 4096


@dataclass(frozen=True)
class KernelMatrix:
    """Dense kernel values at one level and time, with provenance."""

    level: int
    half_width: float
    t: float
    values: np.ndarray
    scheme: str                      # "semidiscrete" or "euler"
    delta_t: Optional[float] = None  # Euler only
    n_steps: Optional[int] = None    # Euler only

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def spacing(self) -> float:
        return self.half_width * 2.0 ** -self.level

    @property
    def dimension(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EulerStep:
    """Time step of the explicit scheme; n_steps * delta_t equals the
    target time exactly (the time is chosen as an integer multiple)."""

    delta_t: float
    n_steps: int

    @classmethod
    def for_time(cls, op: PeriodicTridiagonalOperator, t: float,
                 safety: float = 0.9) -> "EulerStep":
        """Largest stable step, shrunk so the step count is an integer."""
        dt_max = max_stable_dt(op, safety=safety)
        n = max(1, math.ceil(t / dt_max - 1e-12))
        return cls(delta_t=t / n, n_steps=n)


def dense_matrix(op: PeriodicTridiagonalOperator) -> np.ndarray:
    """Materialize the banded operator as a dense matrix."""
    n = op.dimension
    if n > MAX_DENSE_DIM:
        raise ResourceLimitError(f"dense matrix of size {n} exceeds {MAX_DENSE_DIM}")
    a = np.zeros((n, n))
    i = np.arange(n)
    a[i, i] = op.diag
    a[i, (i + 1) % n] = op.up
    a[i, (i - 1) % n] = op.down
    return a


def _validate_kernel(values: np.ndarray, h: float, markov: bool, what: str):
    mass = np.abs(h * values.sum(axis=1) - 1.0).max()
    if mass > MASS_TOL:
        raise ConsistencyError(f"{what}: row mass off by {mass:.3e} (> {MASS_TOL:g})")
    if markov:
        low = values.min()
        if low < NEGATIVITY_TOL:
            raise ConsistencyError(
                f"{what}: negative entry {low:.3e} below {NEGATIVITY_TOL:g}")


def expm_kernel(op: PeriodicTridiagonalOperator, t: float) -> KernelMatrix:
    """Semidiscrete kernel h^-1 exp(t*G); t = 0 gives the discrete delta."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    h = op.spacing
    n = op.dimension
    if t == 0.0:
        values = np.eye(n) / h
    else:
        values = expm(t * dense_matrix(op)) / h
        if not np.all(np.isfinite(values)):
            raise ConsistencyError("matrix exponential produced non-finite entries")
    _validate_kernel(values, h, op.is_markov, "semidiscrete kernel")
    ker = KernelMatrix(level=op.level, half_width=h * 2.0 ** op.level, t=float(t),
                       values=values, scheme="semidiscrete")
    return ker


def time_derivative(op: PeriodicTridiagonalOperator,
                    kernel: KernelMatrix) -> np.ndarray:
    """Time derivative of the kernel, computed two ways and cross-checked.

    Applying the generator in the departure index (down the columns) and
    its adjoint in the arrival index (along the rows) must agree; the
    arrival-side product is returned.  The 1e-9 agreement tolerance
    carries a rounding floor proportional to the generator magnitude:
    the two products amplify the rounding of the exponential by the
    generator norm, which crosses 1e-9 in double precision once
    max|diag| exceeds ~1e5 (level 9 at unit volatility).
    """
    if kernel.dimension != op.dimension:
        raise ValueError("kernel and operator dimensions differ")
    u = kernel.values
    forward = adjoint(op).apply(u)        # rows: u @ G
    backward = op.apply(u.T).T            # columns: G @ u
    gap = np.abs(forward - backward).max()
    tol = max(DERIVATIVE_MATCH_TOL,
              32.0 * np.finfo(float).eps * np.abs(op.diag).max())
    if gap > tol:
        raise ConsistencyError(
            f"departure/arrival derivative mismatch {gap:.3e} (> {tol:g})")
    return forward


def max_stable_dt(op: PeriodicTridiagonalOperator, safety: float = 0.9) -> float:
    """Largest dt keeping 1 + dt*diag positive, times the safety factor."""
    return safety / np.abs(op.diag).max()


def _matrix_power(m: np.ndarray, n: int) -> np.ndarray:
    """m**n by binary powering (deterministic multiplication order)."""
    result = np.eye(m.shape[0])
    base = m
    e = n
    while e:
        if e & 1:
            result = result @ base
        e >>= 1
        if e:
            base = base @ base
    return result


def _check_step(op: PeriodicTridiagonalOperator, t: float, step: EulerStep):
    if step.n_steps < 1:
        raise ValueError("n_steps must be positive")
    if abs(step.n_steps * step.delta_t - t) > 1e-12 * max(abs(t), 1.0):
        raise ValueError(
            f"n_steps * delta_t = {step.n_steps * step.delta_t!r} does not equal t = {t!r}")
    floor = 1.0 + step.delta_t * op.diag.min()
    if floor <= 0.0:
        raise StabilityError(
            f"dt = {step.delta_t:.6g} is unstable: min(1 + dt*diag) = {floor:.3e} <= 0")


def euler_kernel(op: PeriodicTridiagonalOperator, t: float,
                 step: EulerStep) -> KernelMatrix:
    """Explicit Euler kernel h^-1 (I + dt*G)^n with n*dt = t."""
    _check_step(op, t, step)
    h = op.spacing
    m = np.eye(op.dimension) + step.delta_t * dense_matrix(op)
    values = _matrix_power(m, step.n_steps) / h
    _validate_kernel(values, h, op.is_markov, "euler kernel")
    return KernelMatrix(level=op.level, half_width=h * 2.0 ** op.level, t=float(t),
                        values=values, scheme="euler",
                        delta_t=step.delta_t, n_steps=step.n_steps)


def euler_time_derivative(op: PeriodicTridiagonalOperator, t: float,
                          step: EulerStep) -> np.ndarray:
    """Forward difference (u(t+dt) - u(t))/dt of the Euler kernel.

    Algebraically this equals the kernel right-multiplied by the
    generator; the identity is verified at the transition-matrix scale
    (entries of (I+dt*G)^n lie in [0,1]) before the product is returned.
    """
    _check_step(op, t, step)
    h = op.spacing
    a = dense_matrix(op)
    m = np.eye(op.dimension) + step.delta_t * a
    p = _matrix_power(m, step.n_steps)
    derivative = adjoint(op).apply(p) / h         # p @ G, rows
    residual = np.abs((p @ m - p) - step.delta_t * h * derivative).max()
    if residual > EULER_IDENTITY_TOL:
        raise ConsistencyError(
            f"euler forward-difference identity residual {residual:.3e} "
            f"(> {EULER_IDENTITY_TOL:g} at transition-matrix scale)")
    return derivative


# ---------------------------------------------------------------------------
# kernel dump format: CSV x_index,y_index,value plus a JSON sidecar

def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_kernel(kernel: KernelMatrix, csv_path) -> None:
    """Write `<path>` as CSV and `<path minus .csv>.json` as sidecar.

    Values carry 17 significant digits so parsing them back reproduces
    the doubles exactly.
    """
    csv_path = str(csv_path)
    n = kernel.dimension
    with open(csv_path, "w") as fh:
        fh.write("x_index,y_index,value\n")
        for i in range(n):
            row = kernel.values[i]
            for j in range(n):
                fh.write(f"{i},{j},{_fmt(row[j])}\n")
    sidecar = {
        "m": kernel.level,
        "L": kernel.half_width,
        "t": kernel.t,
        "scheme": kernel.scheme,
        "delta_t": kernel.delta_t,
        "n_steps": kernel.n_steps,
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(csv_path: str) -> str:
    return (csv_path[:-4] if csv_path.endswith(".csv") else csv_path) + ".json"


def read_kernel(csv_path) -> KernelMatrix:
    """Parse a kernel dump written by write_kernel (exact round-trip)."""
    csv_path = str(csv_path)
    with open(_sidecar_path(csv_path)) as fh:
        meta = json.load(fh)
    n = 2 ** (int(meta["m"]) + 1)
    values = np.empty((n, n))
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "x_index,y_index,value":
            raise ValueError(f"unexpected kernel CSV header: {header!r}")
        for line in fh:
            xi, yi, val = line.rstrip("\n").split(",")
            values[int(xi), int(yi)] = float(val)
    return KernelMatrix(
        level=int(meta["m"]), half_width=float(meta["L"]), t=float(meta["t"]),
        values=values, scheme=meta["scheme"],
        delta_t=None if meta.get("delta_t") is None else float(meta["delta_t"]),
        n_steps=None if meta.get("n_steps") is None else int(meta["n_steps"]),
    )
