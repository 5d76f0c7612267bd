import itertools
import math

import numpy as np
import pytest

from diffkernels.coefficients import make_family, stats
from diffkernels.dyson import (SymbolicPath, conv_exponentials,
                               conv_exponentials_quadrature, conv_power,
                               conv_power_tail_bound, count_paths,
                               discrete_taylor_check,
                               enumerate_weight_profiles,
                               lbar_decomposition_check, path_weight,
                               path_weight_profile, q_max, resum_kernel)
from diffkernels.errors import ResourceLimitError
from diffkernels.generator import build_generator
from diffkernels.lattice import build_grid
from diffkernels.propagator import expm_kernel


def line_walk_count(q, displacement):
    """Brute force: q-step +-1 walks on the integers ending at displacement."""
    return sum(1 for steps in itertools.product((1, -1), repeat=q)
               if sum(steps) == displacement)


def test_count_paths_examples():
    assert count_paths(2, 0) == 2
    assert count_paths(3, 1) == 0      # parity mismatch: q/2 + k not integral
    assert count_paths(4, 0) == 6


def test_count_paths_matches_enumeration():
    for q in range(1, 13):
        for two_k in range(-q, q + 1):
            assert count_paths(q, two_k / 2) == line_walk_count(q, two_k), \
                f"q={q}, displacement={two_k}"


def test_count_paths_out_of_range():
    assert count_paths(4, 3) == 0
    assert count_paths(4, -3) == 0


# ---------------------------------------------------------------------------
# exponential convolutions

def test_conv_single_exponential():
    assert conv_exponentials([2.0], 0.3) == pytest.approx(math.exp(-0.6), rel=1e-14)


def test_conv_equal_rates_is_erlang_shape():
    # q+1 equal rates: t^q exp(-lam t)/q!
    lam, t = 3.0, 0.4
    for q in (1, 2, 5):
        got = conv_exponentials([lam] * (q + 1), t)
        assert got == pytest.approx(t ** q * math.exp(-lam * t) / math.factorial(q),
                                    rel=1e-13)


def test_conv_two_distinct_rates_partial_fractions():
    a, b, t = 2.0, 5.0, 0.3
    exact = (math.exp(-a * t) - math.exp(-b * t)) / (b - a)
    assert conv_exponentials([a, b], t) == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("rates,t,n", [
    ([3.0, 5.0], 0.2, 4096),
    ([4.0, 4.0, 9.0], 0.055, 4096),
    ([6.0, 6.0, 6.0], 0.3, 4096),           # two equal-rate steps: exact grid sums
    ([2.0, 5.0, 5.0, 9.0], 0.11, 16384),    # longer mixed chain needs finer grid
])
def test_conv_vs_quadrature(rates, t, n):
    closed = conv_exponentials(rates, t)
    quad = conv_exponentials_quadrature(rates, t, n=n)
    assert abs(closed - quad) / closed < 1e-8


def test_conv_repeated_clustered_rates_stay_positive():
    # the regime where textbook partial fractions lose all digits
    rates = [4.0] * 5 + [6.0] * 5 + [8.0] * 5
    ts = np.linspace(0.05, 1.0, 7)
    vals = conv_exponentials(rates, ts)
    assert np.all(vals > 0)
    # cross-check one point against fine quadrature
    mid = conv_exponentials_quadrature(rates, 0.5, n=32768)
    got = float(conv_exponentials(rates, 0.5))
    assert abs(got - mid) / got < 1e-6


def test_conv_rejects_bad_input():
    with pytest.raises(ValueError):
        conv_exponentials([], 0.1)
    with pytest.raises(ValueError):
        conv_exponentials([1.0], -0.1)
    with pytest.raises(ValueError):
        conv_exponentials([1.0, 5000.0], 1.0)   # spread beyond the series range


# ---------------------------------------------------------------------------
# path weights

@pytest.fixture(scope="module")
def small_const():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    g = build_grid(1, 1.0)   # 4 sites, h = 0.5
    return build_generator(f, g), g


def test_path_weight_single_jump_closed_form(small_const):
    op, g = small_const
    # equal holding rates lam = sigma^2/h^2; one jump x -> y:
    # W = 2 L(x,y) * t * exp(-lam t)
    lam = 1.0 / g.spacing ** 2
    t = 0.1
    w = path_weight(op, SymbolicPath((0, 1)), t)
    expected = 2.0 * op.up[0] * t * math.exp(-lam * t)
    assert w.value == pytest.approx(expected, rel=1e-12)


def test_path_weight_nonnegative_random_paths(small_const):
    op, g = small_const
    rng = np.random.default_rng(5)
    n = op.dimension
    for _ in range(50):
        q = int(rng.integers(1, 10))
        sites = [int(rng.integers(0, n))]
        for _ in range(q):
            sites.append((sites[-1] + rng.choice([-1, 1])) % n)
        w = path_weight(op, SymbolicPath(tuple(sites)), float(rng.uniform(0, 1)))
        assert w.value >= 0.0


def test_path_weight_quadrature_cross_check():
    # the trapezoid side of the check is second order in the grid, so on
    # the default 2^12 grid the 1e-8 agreement holds for short paths with
    # moderate rate*t (and for any equal-rate path)
    f = make_family("trig-smooth")
    g = build_grid(2, 1.0)
    op = build_generator(f, g)
    st = stats(f, g)
    t = 0.5 * g.spacing ** 2 / st.sigma1 ** 2
    for sites in ((0, 1), (0, 1, 2), (3, 2, 1)):
        w = path_weight(op, SymbolicPath(sites), t, check_quadrature=True)
        assert w.quadrature_error is not None
        assert w.quadrature_error < 1e-8


def test_path_weight_quadrature_equal_rates_two_jumps():
    # holding integrands up to linear order: the 2^12 trapezoid is exact
    f = make_family("constant", sigma2=1.0, mu=0.0)
    op = build_generator(f, build_grid(1, 1.0))
    w = path_weight(op, SymbolicPath((0, 1, 2)), 0.3, check_quadrature=True)
    assert w.quadrature_error < 1e-12


def test_path_weight_rejects_below_threshold():
    f = make_family("constant", sigma2=1.0, mu=10.0)   # admissible from m = 4
    with pytest.warns(UserWarning):
        op = build_generator(f, build_grid(1, 1.0))
    with pytest.raises(ValueError, match="not positive"):
        path_weight(op, SymbolicPath((0, 3)), 0.1)


def test_path_weight_rejects_non_neighbours(small_const):
    op, _ = small_const
    with pytest.raises(ValueError, match="nearest neighbours"):
        path_weight(op, SymbolicPath((0, 2)), 0.1)


def test_symbolic_path_validation():
    with pytest.raises(ValueError):
        SymbolicPath((0, 0, 1))
    assert SymbolicPath((0, 1, 0)).jumps == 2


# ---------------------------------------------------------------------------
# envelope

def test_conv_power_q1_is_envelope_density():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    g = build_grid(1, 1.0)
    st = stats(f, g)
    h = g.spacing
    t = 0.3
    expected = st.sigma1 ** 2 / (2 * h * h) * math.exp(
        -st.sigma0 ** 2 * t / (2 * h * h))
    assert conv_power(1, t, st, h) == pytest.approx(expected, rel=1e-13)


def test_conv_power_q2_vs_numerical_self_convolution():
    # sigma0 = sigma1 = 1, h = 1, t = 1
    f = make_family("constant", sigma2=1.0, mu=0.0)
    st = stats(f, build_grid(0, 1.0))
    lam = 0.5
    closed = conv_power(2, 1.0, st, 1.0)
    quad = 0.25 * conv_exponentials_quadrature([lam, lam], 1.0)
    assert abs(closed - quad) / closed < 1e-8


def test_conv_power_maximizer():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    g = build_grid(1, 1.0)
    st = stats(f, g)
    h = g.spacing
    for q in (3, 5, 9):
        ts = np.linspace(1e-4, 8.0, 200001)
        vals = conv_power(q, ts, st, h)
        t_star = ts[int(np.argmax(vals))]
        assert t_star == pytest.approx((q - 1) * 2 * h * h / st.sigma0 ** 2,
                                       rel=1e-3)


def test_q_max_values():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    g = build_grid(1, 1.0)   # h = 0.5
    st = stats(f, g)
    # formula value exactly 1 (evaluated a hair below to dodge the
    # float roundoff of e^2 * (2h^2/e^2))
    t_unit = 2 * g.spacing ** 2 / math.e ** 2
    assert q_max(st, t_unit * (1 - 1e-12), g.spacing) == 1
    assert q_max(st, 0.5, g.spacing) == 8          # ceil(e^2)
    q1 = q_max(st, 0.3, g.spacing)
    q2 = q_max(st, 0.6, g.spacing)
    assert q2 <= 2 * q1   # doubling t at most doubles the cutoff


def test_tail_bound_dominates_envelope_beyond_cutoff():
    f = make_family("trig-smooth")
    g = build_grid(2, 1.0)
    st = stats(f, g)
    h = g.spacing
    for t in (0.05, 0.2, 0.8):
        qc = q_max(st, t, h)
        for q in range(qc, qc + 10):
            assert conv_power(q, t, st, h) <= conv_power_tail_bound(q, t, st, h) \
                * (1 + 1e-12)


def test_weight_bound_smoke_n4():
    # 2^-q W(path) <= conv_power(q) for every path, small q smoke
    f = make_family("trig-smooth")
    g = build_grid(1, 1.0)
    op = build_generator(f, g)
    st = stats(f, g)
    ts = np.linspace(0.0, 1.0, 17)[1:]
    envelopes = {q: conv_power(q, ts, st, g.spacing) for q in range(1, 9)}
    worst = -np.inf
    for start in range(g.size):
        for sites, w in enumerate_weight_profiles(op, start, 8, ts):
            q = len(sites) - 1
            worst = max(worst, float((2.0 ** -q * w / envelopes[q]).max()))
    assert worst <= 1.0


# ---------------------------------------------------------------------------
# resummation

def test_resum_vanishes_at_tiny_time(small_const):
    # off-diagonal entries vanish linearly as t -> 0+ (single-jump term)
    op, _ = small_const
    v1, _ = resum_kernel(op, 0, 1, 1e-8, q_cap=6)
    v2, _ = resum_kernel(op, 0, 1, 1e-10, q_cap=6)
    assert 0 <= v2 < v1 < 1e-6
    assert v1 / v2 == pytest.approx(100.0, rel=1e-4)


def test_resum_zero_jump_cap_is_pure_waiting(small_const):
    op, _ = small_const
    t = 0.1
    val, diag = resum_kernel(op, 2, 2, t, q_cap=0)
    assert val == pytest.approx(math.exp(t * op.diag[2]) / op.spacing, rel=1e-14)
    assert diag.n_paths == 0


def test_resum_converges_monotonically(small_const):
    op, _ = small_const
    t = 0.05
    target = expm_kernel(op, t).values[0, 0]
    vals = [resum_kernel(op, 0, 0, t, q_cap=q)[0] for q in (2, 6, 10, 14)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
    assert all(v <= target + 1e-12 for v in vals)
    assert target - vals[-1] < 1e-8


def test_resum_matches_expm(small_const):
    op, _ = small_const
    t = 0.05
    k = expm_kernel(op, t).values
    for x, y in ((0, 0), (0, 1), (0, 2), (1, 3)):
        val, diag = resum_kernel(op, x, y, t, q_cap=16)
        assert abs(val - k[x, y]) < 1e-6
        assert diag.tail_estimate < 1e-6


def test_resum_tail_estimate_covers_truncation(small_const):
    # for constant coefficients the per-path bound is an equality, so the
    # estimate matches the truncation gap up to rounding
    op, _ = small_const
    t = 0.3
    k = expm_kernel(op, t).values
    val, diag = resum_kernel(op, 0, 1, t, q_cap=10)
    gap = abs(val - k[0, 1])
    assert gap <= diag.tail_estimate * 1.05
    assert diag.tail_estimate < 100 * gap   # and it is not wildly loose here


def test_resum_guards(small_const):
    op, _ = small_const
    with pytest.raises(ResourceLimitError):
        resum_kernel(op, 0, 1, 0.1, q_cap=24)
    f = make_family("constant", sigma2=1.0, mu=0.0)
    big = build_generator(f, build_grid(4, 1.0))
    with pytest.raises(ValueError, match="small-grid"):
        resum_kernel(big, 0, 1, 0.1, q_cap=4)


def test_path_weight_profile_matches_pointwise(small_const):
    op, _ = small_const
    ts = np.array([0.05, 0.2, 0.7])
    path = SymbolicPath((0, 1, 2, 1))
    prof = path_weight_profile(op, path, ts)
    for i, t in enumerate(ts):
        assert prof[i] == pytest.approx(path_weight(op, path, float(t)).value,
                                        rel=1e-13)


# ---------------------------------------------------------------------------
# exact identities

def test_lbar_constant_coefficients_exact():
    f = make_family("constant", sigma2=1.3, mu=0.4)
    g = build_grid(4, 1.0)
    assert lbar_decomposition_check(f, g, 5) < 1e-15


def test_lbar_trig_smooth_machine_precision():
    f = make_family("trig-smooth")
    for m in (5, 6):   # halving h keeps the identity exact
        g = build_grid(m, 1.0)
        for j in (0, 3, g.size // 2):
            assert lbar_decomposition_check(f, g, j) < 1e-12


def test_lbar_hoelder_field():
    f = make_family("hoelder-bump", a=1.0, b=0.5, alpha=0.5)
    g = build_grid(5, 1.0)
    assert lbar_decomposition_check(f, g, 1) < 1e-12


def test_discrete_taylor_constant():
    g = build_grid(4, 1.0)
    assert discrete_taylor_check(np.full(g.size, 2.5), g) == 0.0


def test_discrete_taylor_random():
    g = build_grid(5, 1.0)
    rng = np.random.default_rng(9)
    for _ in range(10):
        assert discrete_taylor_check(rng.standard_normal(g.size), g) < 1e-13


def test_discrete_taylor_plane_wave():
    g = build_grid(4, 1.0)
    from diffkernels.lattice import momentum_set
    p = momentum_set(g).momenta[3]
    f = np.exp(1j * p * g.points)
    assert discrete_taylor_check(f, g) < 1e-13
