import numpy as np
import pytest

from diffkernels.coefficients import make_family
from diffkernels.generator import build_generator
from diffkernels.harness import (ConvergenceReport, default_time,
                                 derivative_sup_diff, fit_rate, run_campaign,
                                 sup_diff)
from diffkernels.lattice import build_grid
from diffkernels.propagator import expm_kernel


@pytest.fixture(scope="module")
def const_levels():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    out = {}
    for m in (4, 5, 6):
        g = build_grid(m, 1.0)
        op = build_generator(f, g)
        out[m] = (op, expm_kernel(op, 0.25))
    return out


def test_sup_diff_zero_when_nested_values_match(const_levels):
    # plant the coarse values at the nested fine indices: difference is 0
    from diffkernels.propagator import KernelMatrix
    _, k4 = const_levels[4]
    n = k4.dimension
    planted = np.ones((2 * n, 2 * n))
    planted[np.ix_(2 * np.arange(n), 2 * np.arange(n))] = k4.values
    fake_fine = KernelMatrix(level=5, half_width=1.0, t=k4.t,
                             values=planted, scheme="semidiscrete")
    assert sup_diff(k4, fake_fine) == 0.0


def test_sup_diff_decreases_with_level(const_levels):
    d45 = sup_diff(const_levels[4][1], const_levels[5][1])
    d56 = sup_diff(const_levels[5][1], const_levels[6][1])
    assert d45 > d56 > 0


def test_sup_diff_triangle_inequality(const_levels):
    d46 = sup_diff(const_levels[4][1], const_levels[6][1])
    d45 = sup_diff(const_levels[4][1], const_levels[5][1])
    d56 = sup_diff(const_levels[5][1], const_levels[6][1])
    # the middle-level diff is measured on the finer set of the first pair,
    # restricted again; on the common coarse points the triangle holds
    assert d46 <= d45 + d56 + 1e-15


def test_sup_diff_rejects_non_nested(const_levels):
    op4, k4 = const_levels[4]
    with pytest.raises(ValueError):
        sup_diff(k4, k4)
    f = make_family("constant", sigma2=1.0, mu=0.0)
    g = build_grid(5, 2.0)
    other = expm_kernel(build_generator(f, g), 0.25)
    with pytest.raises(ValueError):
        sup_diff(k4, other)
    t_other = expm_kernel(op4, 0.125)
    k5 = const_levels[5][1]
    with pytest.raises(ValueError):
        sup_diff(t_other, k5)


def test_derivative_sup_diff_positive_and_shrinks(const_levels):
    d45 = derivative_sup_diff(*const_levels[4], *const_levels[5])
    d56 = derivative_sup_diff(*const_levels[5], *const_levels[6])
    assert d45 > d56 > 0
    # smooth field: roughly fourth-fold decay per level
    assert 2.5 < d45 / d56 < 6.0


def test_fit_rate_exact_power_laws():
    h = [0.1, 0.05, 0.025]
    gamma, resid = fit_rate(h, [1e-2, 2.5e-3, 6.25e-4])
    assert gamma == pytest.approx(2.0, abs=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)
    gamma, resid = fit_rate(h, [1e-2, 5e-3, 2.5e-3])
    assert gamma == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_perturbation_sensitivity():
    h = [0.1, 0.05, 0.025, 0.0125]
    d = [1e-2 * (hh / 0.1) ** 2 for hh in h]
    base, _ = fit_rate(h, d)
    for i in range(4):
        bumped = list(d)
        bumped[i] *= 1.1
        gamma, _ = fit_rate(h, bumped)
        assert abs(gamma - base) <= 0.07


def test_fit_rate_input_validation():
    with pytest.raises(ValueError):
        fit_rate([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([0.1, 0.05, 0.025], [1.0, 0.0, 0.1])


def test_default_time_diffusive_scale():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    assert default_time(f, 1.0) == pytest.approx(0.25)
    f4 = make_family("constant", sigma2=4.0, mu=0.0)
    assert default_time(f4, 1.0) == pytest.approx(0.0625)


def test_campaign_constant_field_rate_two():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    report = run_campaign(f, 1.0, 0.25, range(4, 8))
    assert report.kernel_fit is not None
    assert 1.85 <= report.kernel_fit.gamma_hat <= 2.15
    assert report.theoretical_gamma == 2.0
    assert len(report.pairs) == 3
    assert all(lv.status == "ok" for lv in report.levels)


def test_campaign_requires_admissible_levels():
    f = make_family("constant", sigma2=1.0, mu=10.0)   # threshold level 4
    with pytest.raises(ValueError, match="admissible"):
        run_campaign(f, 1.0, 0.25, range(2, 6))


def test_campaign_rejects_bad_ranges():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    with pytest.raises(ValueError):
        run_campaign(f, 1.0, 0.25, [4])
    with pytest.raises(ValueError):
        run_campaign(f, 1.0, 0.25, [4, 4, 5])
    with pytest.raises(ValueError):
        run_campaign(f, 1.0, 0.25, range(4, 8), schemes=("bogus",))


def test_campaign_partial_failure_keeps_going():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    report = run_campaign(f, 1.0, 0.1, range(4, 8), max_dim=128)
    ok = [lv for lv in report.levels if lv.status == "ok"]
    failed = [lv for lv in report.levels if lv.status != "ok"]
    assert [lv.level for lv in ok] == [4, 5, 6]       # 2^(m+1) <= 128
    assert [lv.level for lv in failed] == [7]
    assert all("ResourceLimitError" in lv.status for lv in failed)
    assert len(report.pairs) == 2


def test_campaign_euler_scheme():
    f = make_family("trig-smooth")
    report = run_campaign(f, 1.0, 0.1, range(4, 8),
                          schemes=("semidiscrete", "euler"))
    for lv in report.levels:
        assert lv.euler_gap is not None and lv.euler_gap > 0
        assert lv.euler_n_steps * lv.euler_delta_t == pytest.approx(0.1)
    assert report.euler_fit is not None
    assert report.euler_fit.gamma_hat > 1.5


def test_campaign_spectral_oracle_scheme():
    f = make_family("constant", sigma2=1.0, mu=0.5)
    report = run_campaign(f, 1.0, 0.25, range(4, 8),
                          schemes=("semidiscrete", "spectral-oracle"))
    for lv in report.levels:
        assert lv.oracle_gap is not None
        assert lv.oracle_gap < 1e-10
    bad = make_family("trig-smooth")
    with pytest.raises(ValueError, match="constant"):
        run_campaign(bad, 1.0, 0.25, range(4, 8),
                     schemes=("semidiscrete", "spectral-oracle"))


def test_campaign_modulus_field_reports_ratios():
    f = make_family("log-modulus", a=1.0, b=0.5)
    report = run_campaign(f, 1.0, 0.25, range(4, 7))
    assert report.kernel_fit is None
    assert report.theoretical_gamma is None
    assert report.modulus_name == "log"
    assert len(report.modulus_ratios) == 2
    assert all(r > 0 for r in report.modulus_ratios)


def test_report_json_round_trip():
    f = make_family("trig-smooth")
    report = run_campaign(f, 1.0, 0.1, range(4, 7),
                          schemes=("semidiscrete", "euler"))
    text = report.to_json()
    back = ConvergenceReport.from_json(text)
    assert back == report
    assert back.to_json() == text


def test_report_csv_shape():
    f = make_family("constant", sigma2=1.0, mu=0.0)
    report = run_campaign(f, 1.0, 0.25, range(4, 8))
    lines = report.to_csv().splitlines()
    assert lines[0] == \
        "level,h,sup_diff_kernel,sup_diff_derivative,euler_diff,gamma_hat"
    assert len(lines) == 1 + 4
    # re-parse: every non-empty cell is a float
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 6
        for cell in cells:
            if cell:
                float(cell)
    # the finest level has no outgoing pair
    assert lines[-1].split(",")[2] == ""
