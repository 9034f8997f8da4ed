import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from copreg.errors import DegenerateIntervalError, DomainError
from copreg.special import (Interval, interval_mass, norm_cdf, norm_logcdf, norm_pdf, norm_quantile,
                            trunc_norm_mean, trunc_norm_second_moment, truncnorm_moments)


def _mp_moments(a, b):
    """Extended-precision oracle for the truncated standard normal."""
    mp.mp.dps = 50
    a, b = mp.mpf(a), mp.mpf(b)
    phi = lambda z: mp.npdf(z) if mp.isfinite(z) else mp.mpf(0)
    zphi = lambda z: z * mp.npdf(z) if mp.isfinite(z) else mp.mpf(0)
    mass = mp.ncdf(-a) - mp.ncdf(-b) if a > 0 else mp.ncdf(b) - mp.ncdf(a)
    return float((phi(a) - phi(b)) / mass), float(1 + (zphi(a) - zphi(b)) / mass)


def test_normal_basics():
    z = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(norm_pdf(z), stats.norm.pdf(z), rtol=1e-14)
    np.testing.assert_allclose(norm_cdf(z), stats.norm.cdf(z), rtol=1e-14)
    np.testing.assert_allclose(norm_logcdf(z), stats.norm.logcdf(z), rtol=1e-12)
    assert norm_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        norm_quantile(p)


def test_quantile_roundtrip():
    p = np.array([1e-300, 1e-12, 0.3, 0.5, 0.9, 1 - 1e-12])
    np.testing.assert_allclose(norm_cdf(norm_quantile(p)), p, rtol=1e-9)


def test_interval_mass_upper_tail_has_no_cancellation():
    # Phi(9) - Phi(8) computed naively loses every digit
    oracle = float(mp.ncdf(9) - mp.ncdf(8))
    assert interval_mass(8.0, 9.0) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("a,b", [(-np.inf, 0.0), (0.0, np.inf), (-1.0, 2.0), (-np.inf, np.inf),
                                 (-0.1, 0.1), (3.0, 4.0), (-7.0, -6.5)])
def test_moments_match_scipy(a, b):
    m, s = truncnorm_moments(a, b)
    dist = stats.truncnorm(a, b)
    assert m == pytest.approx(dist.mean(), abs=1e-10)
    assert s == pytest.approx(dist.var() + dist.mean() ** 2, abs=1e-9)


@pytest.mark.parametrize("a,b", [(8.0, 9.0), (30.0, 31.0), (-37.0, -36.0), (35.0, np.inf), (1e-3, 2e-3)])
def test_moments_extreme_tails_match_extended_precision(a, b):
    m, s = truncnorm_moments(a, b)
    m_ref, s_ref = _mp_moments(a, b)
    assert m == pytest.approx(m_ref, rel=1e-8)
    assert s == pytest.approx(s_ref, rel=1e-6)
    assert a <= m <= b


def test_half_line_closed_form():
    # E[Z | Z > 0] = sqrt(2/pi), E[Z^2 | Z > 0] = 1
    assert trunc_norm_mean(Interval(0.0, np.inf)) == pytest.approx(np.sqrt(2 / np.pi), abs=1e-14)
    assert trunc_norm_second_moment(Interval(0.0, np.inf)) == pytest.approx(1.0, abs=1e-14)


def test_degenerate_interval():
    with pytest.raises(DegenerateIntervalError):
        truncnorm_moments(50.0, 60.0)
    with pytest.raises(DomainError):
        Interval(1.0, 1.0)


def test_vectorized_broadcast():
    m, s = truncnorm_moments(np.array([-1.0, 0.0, 1.0]), 2.0)
    assert m.shape == (3,) and s.shape == (3,)
    assert np.all(np.diff(m) > 0)


def test_interval_mass_across_zero_is_exact_and_symmetric():
    mp.mp.dps = 40
    b = 6.103515625e-05
    ref = float(mp.ncdf(b) - mp.mpf(1) / 2)
    assert interval_mass(0.0, b) == pytest.approx(ref, rel=1e-15)
    assert interval_mass(0.0, b) == interval_mass(-b, 0.0)
