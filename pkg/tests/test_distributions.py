import math

import numpy as np
import pytest

from sarisk.distributions import (EsscherDomain, EsscherDomainError, GaussianStd,
                                  NigParams, bessel_k0, bessel_k1, esscher_domain,
                                  gaussian_translation_weight, gaussian_W,
                                  nig_cumulant, nig_cumulant_grad, nig_density,
                                  nig_log_density, sample_gaussian,
                                  sample_inverse_gaussian, sample_nig)
from sarisk.oracle import norm_pdf, quadrature

PAPER_NIG = NigParams(alpha=2.0, beta=0.2, delta=0.8, mu=0.04)


# ---------------------------------------------------------------------------
# Gaussian translation weights
# ---------------------------------------------------------------------------

def test_translation_weight_identity_at_zero():
    assert gaussian_translation_weight(0.0, 0.0) == 1.0
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(20):
        assert gaussian_translation_weight(x, 0.0) == pytest.approx(1.0, abs=0.0)


def test_translation_weight_closed_form_and_density_ratio():
    # direct evaluation of exp(-theta x - theta^2/2), cross-checked by
    # dividing two density evaluations
    w = gaussian_translation_weight(1.0, 1.0)
    assert w == pytest.approx(math.exp(-1.5), rel=1e-14)
    g = GaussianStd(1)
    assert w == pytest.approx(g.density(np.array([2.0])) / g.density(np.array([1.0])),
                              rel=1e-12)


@pytest.mark.parametrize("theta", [-1.0, 0.5, 2.0])
def test_translation_weight_change_of_variables(theta):
    # quadrature of f(x + theta) * weight over p equals quadrature of f over p
    # for f = 1{x >= 1}; integrands split at their jumps
    target = quadrature(lambda x: norm_pdf(x), 1.0, 12.0, tol=1e-11)
    lo = 1.0 - theta
    lhs = quadrature(lambda x: gaussian_translation_weight(x, theta) * norm_pdf(x),
                     lo, max(12.0, lo + 10.0), tol=1e-11)
    assert lhs == pytest.approx(target, abs=1e-8)


def test_translation_weight_vector_and_overflow_guard():
    x = np.array([0.3, -0.2, 1.0])
    th = np.array([0.5, 0.0, -1.0])
    expected = math.exp(-np.dot(th, x) - 0.5 * np.dot(th, th))
    assert gaussian_translation_weight(x, th) == pytest.approx(expected, rel=1e-14)
    # enormous opposing shift stays finite
    assert math.isfinite(gaussian_translation_weight(-1e3, 1e3))


def test_gaussian_W_values():
    assert gaussian_W(0.0, 0.0) == 0.0
    assert gaussian_W(1.0, 0.0) == pytest.approx(2.0 * math.e, rel=1e-14)
    assert gaussian_W(1.0, 2.0) == 0.0
    out = gaussian_W(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert out == pytest.approx(math.e * np.array([2.0, -1.0]), rel=1e-14)


# ---------------------------------------------------------------------------
# Bessel K
# ---------------------------------------------------------------------------

def _k1_series_reference(x: float, dps: int) -> float:
    """High-precision ascending-series evaluation (the oracle, written
    independently of the implementation: arbitrary-precision arithmetic,
    no cancellation trouble)."""
    from mpmath import mp, mpf, log as mlog
    mp.dps = dps
    z = mpf(repr(x))
    t = z * z / 4
    # I1 and the harmonic-weighted series
    i1_sum = mpf(1)
    term = mpf(1)
    s = mpf(-2) * mp.euler + 1  # k = 0 term weight
    harm_k = mpf(0)
    harm_k1 = mpf(1)
    for k in range(1, 400):
        term *= t / (k * (k + 1))
        i1_sum += term
        harm_k += mpf(1) / k
        harm_k1 += mpf(1) / (k + 1)
        s += term * (-2 * mp.euler + harm_k + harm_k1)
        if term < mpf(10) ** (-dps - 5) * i1_sum:
            break
    i1 = z / 2 * i1_sum
    return float(mlog(z / 2) * i1 + 1 / z - z / 4 * s)


@pytest.mark.slow
def test_bessel_k1_against_series_oracle():
    xs = np.concatenate([np.linspace(0.02, 2.0, 25), np.linspace(2.05, 30.0, 40),
                         [40.0, 55.0]])
    for x in xs:
        dps = 30 + int(0.9 * x)
        ref = _k1_series_reference(float(x), dps)
        assert bessel_k1(float(x)) == pytest.approx(ref, rel=1e-12), f"x={x}"


def test_bessel_k1_known_value():
    assert bessel_k1(1.0) == pytest.approx(0.6019072302, abs=5e-11)


def test_bessel_k1_against_scipy():
    from scipy.special import k0 as sk0, k1 as sk1
    for x in (0.1, 0.7, 1.9, 2.1, 6.0, 17.0, 80.0):
        assert bessel_k1(x) == pytest.approx(float(sk1(x)), rel=1e-12)
        assert bessel_k0(x) == pytest.approx(float(sk0(x)), rel=1e-12)


def test_bessel_k1_asymptotic_normalization():
    x = 50.0
    val = bessel_k1(x) * math.exp(x) * math.sqrt(2.0 * x / math.pi)
    assert val == pytest.approx(1.0, abs=1e-6 + 3.0 / (8.0 * x))


@pytest.mark.parametrize("x", [0.5, 1.0, 5.0])
def test_bessel_k1_derivative_recurrence(x):
    # K1'(x) = K1(x)/x - K2(x), with K2 from the recurrence K2 = K0 + 2 K1 / x
    h = 1e-6 * max(1.0, x)
    num = (bessel_k1(x + h) - bessel_k1(x - h)) / (2.0 * h)
    k2 = bessel_k0(x) + 2.0 * bessel_k1(x) / x
    assert num == pytest.approx(bessel_k1(x) / x - k2, abs=1e-8)


def test_bessel_domain_errors():
    with pytest.raises(ValueError):
        bessel_k1(0.0)
    with pytest.raises(ValueError):
        bessel_k0(-1.0)


# ---------------------------------------------------------------------------
# NIG density and cumulant
# ---------------------------------------------------------------------------

def test_nig_params_validation():
    with pytest.raises(ValueError):
        NigParams(alpha=1.0, beta=1.5)
    with pytest.raises(ValueError):
        NigParams(delta=-0.1)
    p = PAPER_NIG
    assert p.gamma ** 2 + p.beta ** 2 == pytest.approx(p.alpha ** 2, rel=1e-15)


def test_nig_density_normalizes():
    total = quadrature(lambda x: nig_density(x, PAPER_NIG), -30.0, 30.0, tol=1e-9)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_nig_density_symmetry_and_mode():
    sym = NigParams(alpha=2.0, beta=0.0, delta=0.8, mu=0.0)
    for x in (0.3, 1.7):
        assert nig_density(x, sym) == pytest.approx(nig_density(-x, sym), rel=1e-12)
    p = PAPER_NIG
    assert nig_density(p.mu, p) > nig_density(p.mu + 3 * p.delta, p)
    assert nig_density(p.mu, p) > nig_density(p.mu - 3 * p.delta, p)


def test_nig_log_density_finite_everywhere():
    for x in (-100.0, -5.0, 0.0, 7.0, 120.0):
        v = nig_log_density(x, PAPER_NIG)
        assert math.isfinite(v)
        assert nig_density(0.5, PAPER_NIG) > 0.0


def test_nig_cumulant_zero_and_quadrature():
    assert nig_cumulant(0.0, PAPER_NIG) == 0.0
    mgf = quadrature(lambda x: math.exp(0.5 * x) * nig_density(x, PAPER_NIG),
                     -40.0, 40.0, tol=1e-10)
    assert nig_cumulant(0.5, PAPER_NIG) == pytest.approx(math.log(mgf), abs=1e-6)


@pytest.mark.parametrize("theta", [-0.5, 0.0, 1.0])
def test_nig_cumulant_grad_matches_finite_difference(theta):
    h = 1e-6
    fd = (nig_cumulant(theta + h, PAPER_NIG) - nig_cumulant(theta - h, PAPER_NIG)) / (2 * h)
    assert nig_cumulant_grad(theta, PAPER_NIG) == pytest.approx(fd, abs=1e-6)


def test_esscher_domain_bounds():
    dom = esscher_domain(PAPER_NIG)
    assert dom.lo == pytest.approx(-2.2)
    assert dom.hi == pytest.approx(1.8)
    nig_cumulant(dom.hi - 1e-9, PAPER_NIG)  # finite inside
    nig_cumulant(dom.lo + 1e-9, PAPER_NIG)
    with pytest.raises(EsscherDomainError):
        nig_cumulant(dom.hi, PAPER_NIG)
    with pytest.raises(EsscherDomainError):
        nig_cumulant_grad(dom.lo - 0.1, PAPER_NIG)


def test_esscher_domain_clamps():
    dom = EsscherDomain(-2.2, 1.8)
    v, c = dom.clamp(5.0)
    assert c and v < 1.8
    v, c = dom.clamp_symmetric(-2.0)
    assert c and v >= -1.8
    v, c = dom.clamp_symmetric(0.3)
    assert not c and v == 0.3
    v, c = dom.clamp_symmetric(1.75, margin=0.18)
    assert c and v == pytest.approx(1.8 - 0.18)


@pytest.mark.parametrize("theta", [-0.8, 0.3, 1.0])
def test_esscher_tilted_density_identity(theta):
    # e^{theta x - psi(theta)} p(x) equals the beta-shifted NIG density
    p = PAPER_NIG
    tilted = NigParams(p.alpha, p.beta + theta, p.delta, p.mu)
    psi = nig_cumulant(theta, p)
    for x in np.linspace(-5.0, 5.0, 21):
        lhs = math.exp(theta * x - psi) * nig_density(x, p)
        rhs = nig_density(x, tilted)
        assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("theta", [-1.0, 0.5])
def test_nig_change_of_variables(theta):
    # translation identity for the NIG family: int f(x+t) p(x+t) dx = int f p
    f_lo = 0.5
    target = quadrature(lambda x: nig_density(x, PAPER_NIG), f_lo, 40.0, tol=1e-10)
    lhs = quadrature(lambda x: nig_density(x + theta, PAPER_NIG), f_lo - theta, 40.0,
                     tol=1e-10)
    assert lhs == pytest.approx(target, abs=1e-8)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def test_inverse_gaussian_moments():
    rng = np.random.default_rng(11)
    mean, shape = 0.7, 1.3
    v = sample_inverse_gaussian(mean, shape, rng, size=1_000_000)
    se_mean = v.std() / math.sqrt(v.size)
    assert abs(v.mean() - mean) < 3 * se_mean
    var_true = mean ** 3 / shape
    assert abs(v.var() - var_true) < 0.02 * var_true


@pytest.mark.slow
def test_sample_nig_base_mean():
    rng = np.random.default_rng(12)
    x = sample_nig(PAPER_NIG, 0.0, rng, size=1_000_000)
    target = PAPER_NIG.mean()  # mu + delta beta / gamma, i.e. grad psi at 0
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - target) < 3 * se


@pytest.mark.slow
def test_sample_nig_tilted_mean_matches_cumulant_grad():
    rng = np.random.default_rng(13)
    x = sample_nig(PAPER_NIG, 0.3, rng, size=1_000_000)
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - nig_cumulant_grad(0.3, PAPER_NIG)) < 3 * se


@pytest.mark.slow
def test_sample_nig_kolmogorov_smirnov():
    n = 100_000
    rng = np.random.default_rng(14)
    draws = np.sort(sample_nig(PAPER_NIG, 0.0, rng, size=n))
    # CDF by cumulative quadrature on a dense grid, interpolated
    grid = np.linspace(-16.0, 22.0, 6001)
    pdf = np.array([nig_density(float(g), PAPER_NIG) for g in grid])
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    f_at = np.interp(draws, grid, cdf)
    i = np.arange(1, n + 1)
    d_stat = max(np.max(i / n - f_at), np.max(f_at - (i - 1) / n))
    critical = 1.628 / math.sqrt(n)  # asymptotic 1% point
    assert d_stat < critical


def test_sample_nig_rejects_inadmissible_tilt():
    rng = np.random.default_rng(15)
    with pytest.raises(EsscherDomainError):
        sample_nig(PAPER_NIG, 1.8, rng)
    with pytest.raises(EsscherDomainError):
        sample_nig(PAPER_NIG, -2.3, rng)


@pytest.mark.slow
def test_sample_gaussian_moments_and_independence():
    rng = np.random.default_rng(16)
    draws = rng.standard_normal(1_000_000)
    assert abs(draws.mean()) < 3e-3
    assert abs(draws.var() - 1.0) < 0.01
    y = np.array([sample_gaussian(5, rng) for _ in range(20000)])
    cov = np.cov(y.T)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 0.03


def test_sample_gaussian_determinism_and_validation():
    a = sample_gaussian(3, np.random.default_rng(99))
    b = sample_gaussian(3, np.random.default_rng(99))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_gaussian(0, np.random.default_rng(1))
