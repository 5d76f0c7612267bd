"""Jump-path expansion of the semidiscrete kernel, made executable.

The kernel admits an expansion over nearest-neighbour jump sequences:
a path visiting sites g_0, ..., g_q contributes the product of its jump
factors times the convolution of exponential holding densities at the
visited sites.  This module evaluates single-path weights in closed
form, the Erlang-type envelope that dominates every weight, the cutoff
beyond which whole jump counts are negligible, and a truncated
resummation that reconstructs the kernel entry by entry on small grids.
It also houses two exact stencil identities: the three-site generator
window decomposed by powers of the spacing, and the two-point discrete
Taylor identity.

Closed-form weights use a shifted Taylor series for the convolution of
exponentials (factor the slowest decay out, expand the rest); partial
fractions over the distinct rates are exact on paper but cancel
catastrophically once rates repeat along a long path, so they are not
used.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .coefficients import CoefficientField, FieldStats
from .errors import ResourceLimitError
from .generator import (PeriodicTridiagonalOperator, apply_delta, apply_nabla,
                        build_generator)
from .lattice import Grid

RATE_GROUP_RTOL = 1e-9
RESUM_PATH_GUARD = 10 ** 7
RESUM_MAX_SITES = 16


@dataclass(frozen=True)
class SymbolicPath:
    """Nearest-neighbour jump sequence; sites are grid indices."""

    sites: Tuple[int, ...]

    def __post_init__(self):
        if len(self.sites) < 1:
            raise ValueError("a path needs at least one site")
        for a, b in zip(self.sites, self.sites[1:]):
            if a == b:
                raise ValueError("consecutive path sites must differ")

    @property
    def jumps(self) -> int:
        return len(self.sites) - 1


@dataclass(frozen=True)
class PathWeight:
    value: float
    quadrature_error: Optional[float] = None   # relative, when cross-checked


# ---------------------------------------------------------------------------
# convolution of exponential holding densities

def conv_exponentials(rates, t):
    """(e^{-r_0 u} * e^{-r_1 u} * ... * e^{-r_q u})(t) for rates r_j > 0.

    Evaluated as e^{-r_min t} t^q sum_k (-1)^k h_k(r - r_min) t^k/(q+k)!
    where h_k is the complete homogeneous symmetric polynomial.  All
    h_k are nonnegative, so the only cancellation is the alternating
    sum, bounded by exp(max(r - r_min) * t); accuracy degrades gracefully
    and a hard guard rejects spreads beyond exp(45).

    `t` may be a scalar or an array; a matching float or array returns.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or len(rates) == 0:
        raise ValueError("rates must be a nonempty 1-d sequence")
    scalar = np.isscalar(t) or np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0.0):
        raise ValueError("times must be nonnegative")
    q = len(rates) - 1
    rmin = rates.min()
    delta = rates - rmin
    dmax = float(delta.max())
    tmax = float(t.max())
    if dmax * tmax > 45.0:
        raise ValueError(
            f"rate spread times t = {dmax * tmax:.3g} too large for the series")
    n_terms = 20
    while (dmax * tmax) ** n_terms > math.factorial(n_terms) * 1e-20 and n_terms < 400:
        n_terms += 10
    h = np.zeros(n_terms + 1)
    h[0] = 1.0
    for d in delta:
        if d != 0.0:
            for k in range(1, n_terms + 1):
                h[k] += d * h[k - 1]
    acc = np.zeros_like(t)
    tk = np.ones_like(t)
    sign = 1.0
    for k in range(n_terms + 1):
        acc += sign * h[k] * tk / math.factorial(q + k)
        tk = tk * t
        sign = -sign
    out = np.exp(-rmin * t) * t ** q * acc
    return float(out[0]) if scalar else out


def conv_exponentials_quadrature(rates, t: float, n: int = 4096) -> float:
    """Same convolution by iterated trapezoid rule on an n-interval grid;
    the independent check for the closed form."""
    s = np.linspace(0.0, float(t), n + 1)
    dt = float(t) / n
    f = np.exp(-rates[0] * s)
    for lam in rates[1:]:
        g = np.exp(-lam * s)
        full = np.convolve(f, g)[: n + 1]
        f = dt * (full - 0.5 * (f[0] * g + f * g[0]))
    return float(f[-1])


# ---------------------------------------------------------------------------
# combinatorics and envelopes

def count_paths(q: int, k) -> int:
    """Number of q-jump nearest-neighbour walks on the integer line whose
    endpoint sits 2k sites from the start: binom(q, q/2 + k).

    Zero when q/2 + k is not an integer in [0, q] (an odd jump count
    cannot produce the even displacement 2k).
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    r = 0.5 * q + k
    r_int = round(r)
    if abs(r - r_int) > 1e-12 or not 0 <= r_int <= q:
        return 0
    return math.comb(q, int(r_int))


def conv_power(q: int, t, stats: FieldStats, h: float):
    """q-fold self-convolution of the envelope density
    phi(u) = (sigma1^2/2h^2) exp(-sigma0^2 u / 2h^2) on u >= 0:

        (sigma1^2/2h^2)^q * t^(q-1)/(q-1)! * exp(-sigma0^2 t/2h^2)

    `t` may be scalar or array.
    """
    if q < 1:
        raise ValueError("q must be positive")
    scalar = np.isscalar(t) or np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c = stats.sigma1 ** 2 / (2.0 * h * h)
    lam = stats.sigma0 ** 2 / (2.0 * h * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.where(t > 0.0, np.log(np.maximum(t, 1e-300)), -np.inf)
        logv = q * math.log(c) + (q - 1) * logt - math.lgamma(q) - lam * t
        out = np.exp(logv)
    out = np.where(t == 0.0, c if q == 1 else 0.0, out)
    return float(out[0]) if scalar else out


def conv_power_tail_bound(q: int, t, stats: FieldStats, h: float):
    """Stirling bound dominating conv_power once q >= q_max:
    sqrt(q/2pi) * (1/t) * exp(-sigma0^2 t/2h^2 - q)."""
    t = np.asarray(t, dtype=float)
    lam = stats.sigma0 ** 2 / (2.0 * h * h)
    return np.sqrt(q / (2.0 * np.pi)) / t * np.exp(-lam * t - q)


def q_max(stats: FieldStats, t: float, h: float) -> int:
    """Jump-count cutoff ceil(e^2 sigma1^2 t / 2h^2) beyond which the
    envelope decays superexponentially."""
    return int(math.ceil(math.e ** 2 * stats.sigma1 ** 2 * t / (2.0 * h * h)))


# ---------------------------------------------------------------------------
# single-path weights

def _jump_factor(op: PeriodicTridiagonalOperator, a: int, b: int) -> float:
    """Twice the generator entry for the jump a -> b (cyclic neighbours)."""
    n = op.dimension
    step = (b - a) % n
    if step == 1:
        return 2.0 * op.up[a]
    if step == n - 1:
        return 2.0 * op.down[a]
    raise ValueError(f"sites {a} -> {b} are not cyclic nearest neighbours")


def _path_factors(op: PeriodicTridiagonalOperator, path: SymbolicPath):
    if op.dimension < 3:
        raise ValueError("paths need at least 3 sites to orient jumps")
    rates = []
    aprod = 1.0
    for a, b in zip(path.sites, path.sites[1:]):
        factor = _jump_factor(op, a % op.dimension, b % op.dimension)
        if factor <= 0.0:
            raise ValueError(
                f"jump rate at site {a} is not positive; the level is below "
                "the admissible threshold for this field")
        aprod *= factor
        rates.append(-op.diag[a % op.dimension])
    rates.append(-op.diag[path.sites[-1] % op.dimension])
    return aprod, rates


def path_weight(op: PeriodicTridiagonalOperator, path: SymbolicPath, t: float,
                check_quadrature: bool = False) -> PathWeight:
    """Weight of one path: the product of doubled jump entries times the
    time-ordered integral of the exponential holdings at the visited
    sites.  The kernel normalization 1/h and the 2^-q compensating the
    doubled entries are applied once, at resummation.

    Raises ValueError below the admissible level (a jump rate is not
    positive) and on paths that are not nearest-neighbour sequences.
    """
    aprod, rates = _path_factors(op, path)
    value = aprod * conv_exponentials(rates, float(t))
    quad_error = None
    if check_quadrature:
        quad = aprod * conv_exponentials_quadrature(rates, float(t))
        quad_error = abs(value - quad) / max(abs(value), 1e-300)
    return PathWeight(value=float(value), quadrature_error=quad_error)


def path_weight_profile(op: PeriodicTridiagonalOperator, path: SymbolicPath,
                        ts) -> np.ndarray:
    """path_weight evaluated on a whole time grid at once."""
    aprod, rates = _path_factors(op, path)
    return aprod * conv_exponentials(rates, np.asarray(ts, dtype=float))


def enumerate_weight_profiles(op: PeriodicTridiagonalOperator, start: int,
                              q_cap: int, ts):
    """Yield (sites, weights) for every path from `start` with 1..q_cap
    jumps, weights evaluated on the time grid `ts`.

    Exhaustive: 2**(q_cap+1) - 2 paths.  Used by the bound checks and by
    the per-level weight-table dumps.
    """
    n = op.dimension
    if n < 3:
        raise ValueError("paths need at least 3 sites to orient jumps")
    total = 2 ** (q_cap + 1) - 2
    if total > RESUM_PATH_GUARD:
        raise ResourceLimitError(
            f"q_cap {q_cap} would enumerate {total} paths (> {RESUM_PATH_GUARD})")
    ts = np.asarray(ts, dtype=float)
    holding = tuple(-op.diag)
    up2 = tuple(2.0 * op.up)
    down2 = tuple(2.0 * op.down)
    stack = [((start % n,), 1.0)]
    while stack:
        sites, aprod = stack.pop()
        site = sites[-1]
        q = len(sites) - 1
        if q > 0:
            rates = [holding[s] for s in sites]
            yield sites, aprod * conv_exponentials(rates, ts)
        if q < q_cap:
            stack.append((sites + ((site + 1) % n,), aprod * up2[site]))
            stack.append((sites + ((site - 1) % n,), aprod * down2[site]))


# ---------------------------------------------------------------------------
# truncated resummation

@dataclass(frozen=True)
class ResumDiagnostic:
    q_cap: int
    n_paths: int
    per_q: Tuple[float, ...]      # contribution of each jump count
    tail_estimate: float          # upper bound on the truncated remainder


def resum_kernel(op: PeriodicTridiagonalOperator, x: int, y: int, t: float,
                 q_cap: int):
    """Kernel entry (x, y) reconstructed from paths with at most q_cap
    jumps:

        (1/h) sum_q 2^-q sum_{paths x->y, q jumps} weight(path, q, t)

    plus, when x == y, the zero-jump waiting term exp(t*diag(x))/h that
    the q >= 1 sum cannot produce.  Returns (value, ResumDiagnostic).
    Desk-scale oracle: grids larger than 16 sites or path counts beyond
    10^7 are rejected.
    """
    n = op.dimension
    if n > RESUM_MAX_SITES:
        raise ValueError(f"resummation is a small-grid oracle (N <= {RESUM_MAX_SITES})")
    if n < 3:
        raise ValueError("resummation needs at least 3 sites")
    total_paths = 2 ** (q_cap + 1) - 2
    if total_paths > RESUM_PATH_GUARD:
        raise ResourceLimitError(
            f"q_cap {q_cap} would enumerate {total_paths} paths (> {RESUM_PATH_GUARD})")
    x, y = x % n, y % n
    if np.any(op.up <= 0.0) or np.any(op.down <= 0.0):
        raise ValueError("resummation requires positive jump rates")

    holding = tuple(-op.diag)
    up2 = tuple(2.0 * op.up)
    down2 = tuple(2.0 * op.down)
    contributions = [0.0] * (q_cap + 1)
    memo = {}
    rates = []
    counted = 0

    def visit(site, q, aprod):
        nonlocal counted
        rates.append(holding[site])
        if q > 0:
            counted += 1
            if site == y:
                key = tuple(sorted(rates))
                got = memo.get(key)
                if got is None:
                    got = conv_exponentials(key, t)
                    memo[key] = got
                contributions[q] += 2.0 ** -q * aprod * got
        if q < q_cap:
            visit((site + 1) % n, q + 1, aprod * up2[site])
            visit((site - 1) % n, q + 1, aprod * down2[site])
        rates.pop()

    visit(x, 0, 1.0)
    value = sum(contributions) / op.spacing
    if x == y:
        value += math.exp(t * op.diag[x]) / op.spacing

    # remainder bound: per path 2^-q W <= (a_max/2)^q t^q/q! e^{-r_min t};
    # the exact number of q-jump cyclic paths x -> y sums the line walk
    # counts over displacements congruent to y - x modulo the grid size
    a_half = max(max(up2), max(down2)) / 2.0
    r_min = min(holding)
    disp = (y - x) % n
    tail = 0.0
    if t > 0.0:
        term_base = math.exp(-r_min * t)
        for q in range(q_cap + 1, q_cap + 400):
            n_paths = sum(math.comb(q, (q + w) // 2)
                          for w in range(-q, q + 1)
                          if (q + w) % 2 == 0 and w % n == disp)
            term = (n_paths
                    * math.exp(q * math.log(a_half * t) - math.lgamma(q + 1))
                    * term_base)
            tail += term
            if term < 1e-18 * max(abs(value), 1e-300) and q > q_cap + 5:
                break
    tail /= op.spacing

    return value, ResumDiagnostic(q_cap=q_cap, n_paths=counted,
                                  per_q=tuple(contributions),
                                  tail_estimate=tail)


# ---------------------------------------------------------------------------
# exact stencil identities

def lbar_decomposition_check(field: CoefficientField, grid: Grid, x_index: int) -> float:
    """Assemble the 3-site generator window at a point two ways and
    return the relative residual (max abs difference over max abs entry).

    One side reads the generator rows at x-h, x, x+h; the other stacks
    four matrices built from the coefficient values and their discrete
    first and second differences at x, weighted by h^-2, h^-1, 1, h.
    The identity is exact (no remainder in h), so the residual stays at
    rounding level for every spacing.
    """
    op = build_generator(field, grid, check_level=False)
    n = grid.size
    j = x_index % n
    jm, jp = (j - 1) % n, (j + 1) % n

    window = np.array([
        [op.diag[jp], op.down[jp], 0.0],
        [op.up[j], op.diag[j], op.down[j]],
        [0.0, op.up[jm], op.diag[jm]],
    ])

    v = np.asarray(field.vol_squared(grid.points), dtype=float)
    mu = np.asarray(field.drift(grid.points), dtype=float)
    vx, mx = v[j], mu[j]
    dv, dm = apply_nabla(grid, v)[j], apply_nabla(grid, mu)[j]
    ddv, ddm = apply_delta(grid, v)[j], apply_delta(grid, mu)[j]

    l0 = np.array([[-vx, vx / 2, 0.0],
                   [vx / 2, -vx, vx / 2],
                   [0.0, vx / 2, -vx]])
    l1 = np.array([[-dv, dv / 2 - mx / 2, 0.0],
                   [mx / 2, 0.0, -mx / 2],
                   [0.0, -dv / 2 + mx / 2, dv]])
    l2 = np.array([[-ddv / 2, ddv / 4 - dm / 2, 0.0],
                   [0.0, 0.0, 0.0],
                   [0.0, ddv / 4 - dm / 2, -ddv / 2]])
    l3 = np.array([[0.0, -ddm / 4, 0.0],
                   [0.0, 0.0, 0.0],
                   [0.0, ddm / 4, 0.0]])

    h = grid.spacing
    stacked = l0 / (h * h) + l1 / h + l2 + h * l3
    return float(np.abs(window - stacked).max() / np.abs(window).max())


def discrete_taylor_check(f: np.ndarray, grid: Grid) -> float:
    """Relative residual of the exact two-point identities
    f(x +- h) = f(x) +- h * nabla f(x) + (h^2/2) * delta f(x).

    Accepts real or complex grid functions.
    """
    f = np.asarray(f)
    nab = apply_nabla(grid, f)
    lap = apply_delta(grid, f)
    h = grid.spacing
    plus = np.roll(f, -1) - (f + h * nab + 0.5 * h * h * lap)
    minus = np.roll(f, 1) - (f - h * nab + 0.5 * h * h * lap)
    scale = max(np.abs(f).max(), 1e-300)
    return float(max(np.abs(plus).max(), np.abs(minus).max()) / scale)
