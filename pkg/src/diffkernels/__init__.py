"""Periodic one-dimensional diffusion kernels by explicit schemes.

Dyadic grids on [-L, L], coefficient families with declared smoothness,
the central-difference Markov generator, semidiscrete and explicit Euler
kernels, constant-coefficient spectral oracles, a jump-path expansion of
the kernel, and multi-level convergence campaigns with rate fits.
"""

from .coefficients import (CoefficientField, FieldStats, Hoelder, Modulus,
                           Smooth, family_names, m_zero, make_family, stats)
from .errors import (ConsistencyError, DiffkernelsError, EllipticityError,
                     ResourceLimitError, StabilityError)
from .generator import (PeriodicTridiagonalOperator, adjoint, apply_delta,
                        apply_nabla, build_generator)
from .harness import (ConvergenceReport, default_time, derivative_sup_diff,
                      fit_rate, run_campaign, sup_diff)
from .lattice import (Grid, MomentumSet, build_grid, momentum_set,
                      periodic_distance)
from .propagator import (EulerStep, KernelMatrix, euler_kernel,
                         euler_time_derivative, expm_kernel, max_stable_dt,
                         read_kernel, time_derivative, write_kernel)
from .spectral import (fourier_kernel, fourier_kernel_discrete,
                       kernel_space_derivatives, symbol,
                       trig_inequality_suite)
from .dyson import (PathWeight, SymbolicPath, conv_power, count_paths,
                    discrete_taylor_check, lbar_decomposition_check,
                    path_weight, q_max, resum_kernel)

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "FieldStats", "Smooth", "Hoelder", "Modulus",
    "make_family", "family_names", "stats", "m_zero",
    "DiffkernelsError", "EllipticityError", "ResourceLimitError",
    "StabilityError", "ConsistencyError",
    "Grid", "MomentumSet", "build_grid", "periodic_distance", "momentum_set",
    "PeriodicTridiagonalOperator", "build_generator", "adjoint",
    "apply_nabla", "apply_delta",
    "KernelMatrix", "EulerStep", "expm_kernel", "euler_kernel",
    "euler_time_derivative", "time_derivative", "max_stable_dt",
    "write_kernel", "read_kernel",
    "symbol", "fourier_kernel", "fourier_kernel_discrete",
    "kernel_space_derivatives", "trig_inequality_suite",
    "SymbolicPath", "PathWeight", "count_paths", "path_weight",
    "conv_power", "q_max", "resum_kernel", "lbar_decomposition_check",
    "discrete_taylor_check",
    "ConvergenceReport", "run_campaign", "sup_diff", "derivative_sup_diff",
    "fit_rate", "default_time",
    "__version__",
]
