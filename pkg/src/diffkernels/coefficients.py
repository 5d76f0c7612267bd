"""Coefficient fields: squared volatility and drift with a declared
smoothness class, plus the built-in families used by the test campaigns.

Families:
  constant      both coefficients constant
  trig-smooth   finite trigonometric polynomials (infinitely smooth)
  hoelder-bump  a + b*d(x,0)**alpha and its periodic antiderivatives,
                realizing the class "k derivatives, k-th one alpha-Hoelder"
  log-modulus   a + b/max(1, -ln(d(x,0)/2L)), uniformly continuous with
                modulus 1/|ln d| near the single point 0, not Hoelder
  log-lacunary  a + b*sum_n cos(2^n pi x/L + phase_n)/(n(n+1)), whose
                modulus of continuity is of order 1/|ln d| at every point

All fields are pure functions of position, periodic with period 2L, and
vectorized over numpy arrays.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import EllipticityError
from .lattice import Grid, periodic_distance

GOLDEN = 0.6180339887498949


# ---------------------------------------------------------------------------
# smoothness descriptors

@dataclass(frozen=True)
class Smooth:
    """At least two bounded derivatives; contributes the capped exponent 2."""

    def rate_exponent(self) -> float:
        return 2.0


@dataclass(frozen=True)
class Hoelder:
    """k continuous derivatives, the k-th with Hoelder exponent alpha."""

    k: int
    alpha: float

    def rate_exponent(self) -> float:
        return self.k + self.alpha


@dataclass(frozen=True)
class Modulus:
    """Uniform continuity with a named modulus rho(d), no power-law rate."""

    name: str
    rho: Callable[[float], float]

    def rate_exponent(self):
        return None


SmoothnessClass = Union[Smooth, Hoelder, Modulus]


@dataclass(frozen=True)
class CoefficientField:
    """Squared volatility and drift on [-L, L] with smoothness metadata."""

    vol_squared: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    vol_smoothness: SmoothnessClass
    drift_smoothness: SmoothnessClass
    half_width: float
    label: str
    params: tuple = ()

    def theoretical_gamma(self) -> Optional[float]:
        """min(2, exponents) when both classes have a power exponent,
        None when either coefficient is only modulus-continuous."""
        ev = self.vol_smoothness.rate_exponent()
        ed = self.drift_smoothness.rate_exponent()
        if ev is None or ed is None:
            return None
        return min(2.0, ev, ed)

    def modulus(self) -> Optional[Modulus]:
        for s in (self.vol_smoothness, self.drift_smoothness):
            if isinstance(s, Modulus):
                return s
        return None


@dataclass(frozen=True)
class FieldStats:
    """Volatility and drift bounds taken over the points of one grid."""

    sigma0: float   # inf over grid of sqrt(vol_squared)
    sigma1: float   # sup over grid of sqrt(vol_squared + h*|drift|)
    big_m: float    # sup over grid of |drift|


# ---------------------------------------------------------------------------
# family constructors

def _principal(x, L):
    """Map x to the representative in [-L, L)."""
    return np.remainder(np.asarray(x, dtype=float) + L, 2.0 * L) - L


def _check_positive_on_fine_grid(fn, L, label, samples=2 ** 15):
    x = np.linspace(-L, L, samples, endpoint=False)
    vals = fn(x)
    j = int(np.argmin(vals))
    if vals[j] <= 0.0:
        raise EllipticityError(
            f"{label}: vol_squared({x[j]:.6g}) = {vals[j]:.6g} is not positive",
            x=float(x[j]))


def _constant(sigma2=1.0, mu=0.0, L=1.0):
    if sigma2 <= 0:
        raise EllipticityError(f"constant field needs sigma2 > 0, got {sigma2}")
    return CoefficientField(
        vol_squared=lambda x, v=float(sigma2): np.full_like(np.asarray(x, dtype=float), v),
        drift=lambda x, v=float(mu): np.full_like(np.asarray(x, dtype=float), v),
        vol_smoothness=Smooth(),
        drift_smoothness=Smooth(),
        half_width=float(L),
        label=f"constant(sigma2={sigma2:g}, mu={mu:g})",
        params=(("sigma2", float(sigma2)), ("mu", float(mu))),
    )


def _trig_poly(const, terms, L):
    terms = tuple((int(n), float(ac), float(asn)) for n, ac, asn in terms)

    def fn(x, c0=float(const), tt=terms, L=L):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, c0)
        for n, ac, asn in tt:
            w = n * np.pi * x / L
            out += ac * np.cos(w) + asn * np.sin(w)
        return out

    return fn


def _trig_smooth(sigma2_const=1.5, sigma2_terms=((1, 0.0, 0.5),),
                 mu_const=0.0, mu_terms=((1, 1.0, 0.0),), L=1.0):
    vol = _trig_poly(sigma2_const, sigma2_terms, L)
    drift = _trig_poly(mu_const, mu_terms, L)
    label = "trig-smooth"
    _check_positive_on_fine_grid(vol, L, label)
    return CoefficientField(
        vol_squared=vol, drift=drift,
        vol_smoothness=Smooth(), drift_smoothness=Smooth(),
        half_width=float(L), label=label,
        params=(("sigma2_const", float(sigma2_const)),
                ("sigma2_terms", tuple(map(tuple, sigma2_terms))),
                ("mu_const", float(mu_const)),
                ("mu_terms", tuple(map(tuple, mu_terms)))),
    )


def _hoelder_bump(a=1.0, b=0.5, alpha=0.5, k=0, L=1.0):
    """Bump a + b*|x|^alpha (periodized), integrated k times.

    Each antiderivative subtracts the mean of its integrand first, so the
    result stays 2L-periodic; the k-th derivative of the result is the
    zero-mean bump, whose Hoelder-alpha quotient is exactly |b|.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if k not in (0, 1, 2):
        raise ValueError(f"k in (0, 1, 2) supported, got {k}; the rate caps at 2 anyway")
    if k == 0 and a <= abs(b) * L ** alpha:
        raise EllipticityError(
            f"hoelder-bump needs a > |b|*L**alpha = {abs(b) * L ** alpha:.6g}, got a = {a}")

    mean0 = L ** alpha / (alpha + 1.0)   # mean of |x|^alpha over the period

    def fn(x, a=float(a), b=float(b), al=float(alpha), k=int(k), L=float(L)):
        s = _principal(x, L)
        d = np.abs(s)
        if k == 0:
            return a + b * d ** al
        if k == 1:
            f1 = np.sign(s) * d ** (al + 1.0) / (al + 1.0)
            return a + b * (f1 - mean0 * s)
        f2 = d ** (al + 2.0) / ((al + 1.0) * (al + 2.0))
        u2 = f2 - mean0 * s * s / 2.0
        m2 = (L ** (al + 2.0) / ((al + 1.0) * (al + 2.0) * (al + 3.0))
              - mean0 * L * L / 6.0)
        return a + b * (u2 - m2)

    label = f"hoelder-bump(alpha={alpha:g}, k={k})"
    _check_positive_on_fine_grid(fn, L, label)
    return CoefficientField(
        vol_squared=fn,
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        vol_smoothness=Hoelder(k=int(k), alpha=float(alpha)),
        drift_smoothness=Smooth(),
        half_width=float(L), label=label,
        params=(("a", float(a)), ("b", float(b)),
                ("alpha", float(alpha)), ("k", int(k))),
    )


def _log_rho(L):
    def rho(d, L=float(L)):
        d = np.asarray(d, dtype=float)
        with np.errstate(divide="ignore"):
            val = 1.0 / np.maximum(1.0, -np.log(d / (2.0 * L)))
        return np.where(d == 0.0, 0.0, val)
    return rho


def _log_modulus(a=1.0, b=0.5, L=1.0):
    if a <= abs(b):
        raise EllipticityError(f"log-modulus needs a > |b|, got a={a}, b={b}")
    rho = _log_rho(L)

    def fn(x, a=float(a), b=float(b), L=float(L)):
        d = periodic_distance(x, 0.0, L)
        return a + b * rho(d)

    return CoefficientField(
        vol_squared=fn,
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        vol_smoothness=Modulus(name="log", rho=rho),
        drift_smoothness=Smooth(),
        half_width=float(L),
        label=f"log-modulus(a={a:g}, b={b:g})",
        params=(("a", float(a)), ("b", float(b))),
    )


def _log_lacunary(a=1.0, b=0.5, n_terms=24, L=1.0):
    """Lacunary cosine series with coefficients 1/(n(n+1)).

    The tail beyond frequency 2**n sums to 1/(n+1), so the modulus of
    continuity is of order 1/|ln d| down to scale 2**-n_terms, and the
    roughness is spread over the whole interval rather than concentrated
    at one point.  (The finite truncation is formally smooth below that
    scale; pick n_terms comfortably above the deepest grid level used.)
    """
    if a <= abs(b):
        raise EllipticityError(f"log-lacunary needs a > |b|, got a={a}, b={b}")
    if n_terms < 1:
        raise ValueError("n_terms must be at least 1")
    rho = _log_rho(L)
    freqs = [(2.0 ** n * np.pi / L, 2.0 * np.pi * ((n * GOLDEN) % 1.0),
              1.0 / (n * (n + 1.0))) for n in range(1, int(n_terms) + 1)]

    def fn(x, a=float(a), b=float(b), freqs=tuple(freqs)):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for w, phase, c in freqs:
            acc += c * np.cos(w * x + phase)
        return a + b * acc

    return CoefficientField(
        vol_squared=fn,
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        vol_smoothness=Modulus(name="log", rho=rho),
        drift_smoothness=Smooth(),
        half_width=float(L),
        label=f"log-lacunary(a={a:g}, b={b:g}, n_terms={n_terms})",
        params=(("a", float(a)), ("b", float(b)), ("n_terms", int(n_terms))),
    )


_FAMILIES = {
    "constant": _constant,
    "trig-smooth": _trig_smooth,
    "hoelder-bump": _hoelder_bump,
    "log-modulus": _log_modulus,
    "log-lacunary": _log_lacunary,
}


def make_family(kind: str, **params) -> CoefficientField:
    """Build one of the named coefficient families.

    Raises ValueError for an unknown kind and EllipticityError when the
    parameters do not yield a strictly positive squared volatility.
    """
    try:
        ctor = _FAMILIES[kind]
    except KeyError:
        raise ValueError(
            f"unknown family {kind!r}; available: {sorted(_FAMILIES)}") from None
    return ctor(**params)


def family_names():
    return sorted(_FAMILIES)


# ---------------------------------------------------------------------------
# derived quantities

def stats(field: CoefficientField, grid: Grid) -> FieldStats:
    """Exact min/max bounds of the coefficients over the grid points."""
    s2 = np.asarray(field.vol_squared(grid.points), dtype=float)
    mu = np.asarray(field.drift(grid.points), dtype=float)
    j = int(np.argmin(s2))
    if s2[j] <= 0.0:
        raise EllipticityError(
            f"vol_squared({grid.points[j]:.6g}) = {s2[j]:.6g} is not positive",
            x=float(grid.points[j]))
    return FieldStats(
        sigma0=float(np.sqrt(s2.min())),
        sigma1=float(np.sqrt((s2 + grid.spacing * np.abs(mu)).max())),
        big_m=float(np.abs(mu).max()),
    )


def m_zero(field: CoefficientField, L: float, max_level: int = 24) -> int:
    """Least level m at which the stencil rates stay positive.

    The condition vol_squared(x)/(2h^2) > |drift(x)|/(2h), i.e.
    vol_squared(x) > h*|drift(x)| strictly, is checked on the candidate
    level's grid refined 16-fold, since dyadic coarse grids subsample
    finer ones.
    """
    for m in range(max_level + 1):
        n = 2 ** (m + 5)   # 16x oversampling of the 2**(m+1)-point grid
        x = L * (np.arange(n) * 2.0 ** -(m + 4) - 1.0)
        s2 = np.asarray(field.vol_squared(x), dtype=float)
        mu = np.asarray(field.drift(x), dtype=float)
        h = L * 2.0 ** -m
        if np.all(s2 > h * np.abs(mu)):
            return m
    raise EllipticityError(
        f"no admissible level up to {max_level}; the field is too close to degenerate")
