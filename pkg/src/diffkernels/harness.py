"""Multi-level convergence campaigns: kernel and derivative differences
between consecutive dyadic levels in the sup norm, empirical rate fits,
and a serializable report.

Comparisons always restrict the finer kernel to the coarse grid by exact
index nesting (coarse index j maps to fine index j * 2**(level gap));
nothing is interpolated.
"""

import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .coefficients import CoefficientField, m_zero
from .errors import DiffkernelsError
from .generator import PeriodicTridiagonalOperator, build_generator
from .lattice import DEFAULT_MAX_DIM, build_grid
from .propagator import (EulerStep, KernelMatrix, euler_kernel,
                         euler_time_derivative, expm_kernel, time_derivative)
from . import spectral

ROUNDOFF_FLOOR_FACTOR = 1e3 * np.finfo(float).eps


def _restriction_indices(coarse: KernelMatrix, fine: KernelMatrix) -> np.ndarray:
    if fine.level <= coarse.level:
        raise ValueError(
            f"need fine level > coarse level, got {fine.level} <= {coarse.level}")
    if fine.half_width != coarse.half_width:
        raise ValueError("kernels live on different intervals")
    if fine.t != coarse.t:
        raise ValueError(f"kernels at different times: {coarse.t} vs {fine.t}")
    ratio = 2 ** (fine.level - coarse.level)
    return np.arange(coarse.dimension) * ratio


def sup_diff(coarse: KernelMatrix, fine: KernelMatrix) -> float:
    """Max over coarse-grid pairs (x, y) of the kernel difference, the
    fine kernel being read at the exactly nested points."""
    idx = _restriction_indices(coarse, fine)
    return float(np.abs(coarse.values - fine.values[np.ix_(idx, idx)]).max())


def derivative_sup_diff(op_coarse: PeriodicTridiagonalOperator,
                        coarse: KernelMatrix,
                        op_fine: PeriodicTridiagonalOperator,
                        fine: KernelMatrix) -> float:
    """sup_diff applied to the time derivatives of the two kernels."""
    idx = _restriction_indices(coarse, fine)
    dc = time_derivative(op_coarse, coarse)
    df = time_derivative(op_fine, fine)
    return float(np.abs(dc - df[np.ix_(idx, idx)]).max())


def fit_rate(h_values: Sequence[float], diffs: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of log(diff) against log(h).

    Returns (gamma_hat, residual) with the residual the max absolute
    deviation of the fit in log space.  Needs at least 3 points and all
    differences positive (a vanished difference means the sequence hit
    the roundoff floor; the caller should drop that level).
    """
    h_values = np.asarray(h_values, dtype=float)
    diffs = np.asarray(diffs, dtype=float)
    if len(h_values) != len(diffs):
        raise ValueError("h_values and diffs must have equal length")
    if len(diffs) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(diffs)}")
    if np.any(diffs <= 0.0):
        raise ValueError("rate fit needs positive differences")
    logh = np.log(h_values)
    logd = np.log(diffs)
    coeffs = np.polyfit(logh, logd, 1)
    residual = float(np.abs(np.polyval(coeffs, logh) - logd).max())
    return float(coeffs[0]), residual


# ---------------------------------------------------------------------------
# campaign report

@dataclass(frozen=True)
class LevelResult:
    level: int
    h: float
    status: str                                  # "ok" or an error message
    euler_delta_t: Optional[float] = None
    euler_n_steps: Optional[int] = None
    euler_gap: Optional[float] = None            # sup |semidiscrete - euler|
    euler_derivative_gap: Optional[float] = None
    oracle_gap: Optional[float] = None           # constant fields only


@dataclass(frozen=True)
class PairDiff:
    coarse: int
    fine: int
    h_coarse: float
    kernel: float
    derivative: float


@dataclass(frozen=True)
class RateFit:
    gamma_hat: float
    residual: float
    n_points: int
    dropped_levels: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ConvergenceReport:
    field_label: str
    half_width: float
    t: float
    schemes: Tuple[str, ...]
    levels: Tuple[LevelResult, ...]
    pairs: Tuple[PairDiff, ...]
    kernel_fit: Optional[RateFit]
    derivative_fit: Optional[RateFit]
    euler_fit: Optional[RateFit]
    euler_derivative_fit: Optional[RateFit]
    theoretical_gamma: Optional[float]
    modulus_name: Optional[str]
    modulus_ratios: Optional[Tuple[float, ...]]   # pair diff / rho(h_coarse)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        raw = json.loads(text)

        def tup(xs, ctor=None):
            if xs is None:
                return None
            return tuple(ctor(**x) if ctor else x for x in xs)

        def fit(x):
            if x is None:
                return None
            x = dict(x)
            x["dropped_levels"] = tuple(x.get("dropped_levels", ()))
            return RateFit(**x)

        return cls(
            field_label=raw["field_label"],
            half_width=raw["half_width"],
            t=raw["t"],
            schemes=tuple(raw["schemes"]),
            levels=tup(raw["levels"], LevelResult),
            pairs=tup(raw["pairs"], PairDiff),
            kernel_fit=fit(raw["kernel_fit"]),
            derivative_fit=fit(raw["derivative_fit"]),
            euler_fit=fit(raw["euler_fit"]),
            euler_derivative_fit=fit(raw["euler_derivative_fit"]),
            theoretical_gamma=raw["theoretical_gamma"],
            modulus_name=raw["modulus_name"],
            modulus_ratios=None if raw["modulus_ratios"] is None
            else tuple(raw["modulus_ratios"]),
        )

    def to_csv(self) -> str:
        """Flat per-level table: level, h, pairwise diffs keyed by the
        coarse level, the Euler gap, and the fitted kernel rate."""
        def fmt(v):
            return "" if v is None else format(v, ".17g")

        pair_by_coarse = {p.coarse: p for p in self.pairs}
        gamma = self.kernel_fit.gamma_hat if self.kernel_fit else None
        out = io.StringIO()
        out.write("level,h,sup_diff_kernel,sup_diff_derivative,euler_diff,gamma_hat\n")
        for lv in self.levels:
            pair = pair_by_coarse.get(lv.level)
            out.write(",".join([
                str(lv.level), fmt(lv.h),
                fmt(pair.kernel if pair else None),
                fmt(pair.derivative if pair else None),
                fmt(lv.euler_gap), fmt(gamma),
            ]) + "\n")
        return out.getvalue()


def _fit_or_none(levels, hs, diffs, floor_scale):
    """Rate fit after dropping the levels whose difference sits at the
    roundoff floor; None when fewer than 3 points survive."""
    floor = ROUNDOFF_FLOOR_FACTOR * floor_scale
    kept = [(lv, h, d) for lv, h, d in zip(levels, hs, diffs) if d > floor]
    dropped = tuple(lv for lv, h, d in zip(levels, hs, diffs) if d <= floor)
    if len(kept) < 3:
        return None
    gamma, residual = fit_rate([h for _, h, _ in kept], [d for _, _, d in kept])
    return RateFit(gamma_hat=gamma, residual=residual,
                   n_points=len(kept), dropped_levels=dropped)


def default_time(field: CoefficientField, L: float) -> float:
    """Diffusive time scale 0.25 * L^2 / sigma0^2, keeping kernels away
    from both the near-delta and the near-equilibrium regimes."""
    grid = build_grid(6, L)
    s2 = np.asarray(field.vol_squared(grid.points), dtype=float)
    return 0.25 * L * L / float(s2.min())


def run_campaign(field: CoefficientField, L: float, t: float,
                 m_range: Sequence[int], schemes: Sequence[str] = ("semidiscrete",),
                 max_dim: int = DEFAULT_MAX_DIM,
                 euler_safety: float = 0.9) -> ConvergenceReport:
    """Compute kernels on every level of m_range, all consecutive-level
    sup differences for the kernel and its time derivative, per-level
    Euler gaps when requested, and the rate fits.

    Levels below the admissible threshold are refused; a level failing
    mid-campaign is recorded in its status and skipped by the fits.
    """
    m_list = sorted(int(m) for m in m_range)
    if len(m_list) < 2:
        raise ValueError("a campaign needs at least two levels")
    if len(set(m_list)) != len(m_list):
        raise ValueError("duplicate levels in m_range")
    threshold = m_zero(field, L)
    if m_list[0] < threshold:
        raise ValueError(
            f"level {m_list[0]} is below the admissible threshold {threshold} "
            f"for {field.label}")
    schemes = tuple(schemes)
    for s in schemes:
        if s not in ("semidiscrete", "euler", "spectral-oracle"):
            raise ValueError(f"unknown scheme {s!r}")

    use_euler = "euler" in schemes
    use_oracle = "spectral-oracle" in schemes
    is_constant = field.label.startswith("constant")
    if use_oracle and not is_constant:
        raise ValueError("the spectral oracle applies to constant coefficients only")

    levels = []
    computed = {}      # level -> (op, kernel)
    for m in m_list:
        try:
            grid = build_grid(m, L, max_dim=max_dim)
            op = build_generator(field, grid)
            kernel = expm_kernel(op, t)
            extra = {}
            if use_euler:
                step = EulerStep.for_time(op, t, safety=euler_safety)
                ek = euler_kernel(op, t, step)
                extra["euler_delta_t"] = step.delta_t
                extra["euler_n_steps"] = step.n_steps
                extra["euler_gap"] = float(np.abs(kernel.values - ek.values).max())
                dsem = time_derivative(op, kernel)
                deul = euler_time_derivative(op, t, step)
                extra["euler_derivative_gap"] = float(np.abs(dsem - deul).max())
            if use_oracle:
                sigma = math.sqrt(float(field.vol_squared(np.zeros(1))[0]))
                mu = float(field.drift(np.zeros(1))[0])
                fk = spectral.fourier_kernel(sigma, mu, grid, t)
                extra["oracle_gap"] = float(np.abs(kernel.values - fk.values).max())
            computed[m] = (op, kernel)
            levels.append(LevelResult(level=m, h=grid.spacing, status="ok", **extra))
        except DiffkernelsError as exc:
            levels.append(LevelResult(level=m, h=L * 2.0 ** -m,
                                      status=f"{type(exc).__name__}: {exc}"))

    pairs = []
    for ma, mb in zip(m_list, m_list[1:]):
        if ma in computed and mb in computed:
            op_a, ker_a = computed[ma]
            op_b, ker_b = computed[mb]
            pairs.append(PairDiff(
                coarse=ma, fine=mb, h_coarse=ker_a.spacing,
                kernel=sup_diff(ker_a, ker_b),
                derivative=derivative_sup_diff(op_a, ker_a, op_b, ker_b)))

    kernel_scale = max((k.values.max() for _, k in computed.values()), default=1.0)
    modulus = field.modulus()
    kernel_fit = derivative_fit = None
    modulus_ratios = None
    if modulus is None and pairs:
        kernel_fit = _fit_or_none([p.coarse for p in pairs],
                                  [p.h_coarse for p in pairs],
                                  [p.kernel for p in pairs], kernel_scale)
        derivative_fit = _fit_or_none([p.coarse for p in pairs],
                                      [p.h_coarse for p in pairs],
                                      [p.derivative for p in pairs], kernel_scale)
    elif modulus is not None:
        modulus_ratios = tuple(
            float(p.kernel / modulus.rho(p.h_coarse)) for p in pairs)

    euler_fit = euler_derivative_fit = None
    if use_euler:
        ok = [lv for lv in levels if lv.status == "ok" and lv.euler_gap is not None]
        euler_fit = _fit_or_none([lv.level for lv in ok], [lv.h for lv in ok],
                                 [lv.euler_gap for lv in ok], kernel_scale)
        euler_derivative_fit = _fit_or_none(
            [lv.level for lv in ok], [lv.h for lv in ok],
            [lv.euler_derivative_gap for lv in ok], kernel_scale)

    return ConvergenceReport(
        field_label=field.label, half_width=float(L), t=float(t),
        schemes=schemes, levels=tuple(levels), pairs=tuple(pairs),
        kernel_fit=kernel_fit, derivative_fit=derivative_fit,
        euler_fit=euler_fit, euler_derivative_fit=euler_derivative_fit,
        theoretical_gamma=field.theoretical_gamma(),
        modulus_name=None if modulus is None else modulus.name,
        modulus_ratios=modulus_ratios,
    )
