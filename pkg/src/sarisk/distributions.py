"""Input-noise distributions for the loss models.

Two families are supported: the standard multivariate Gaussian (used with
importance sampling by mean translation) and the scalar normal inverse
Gaussian, NIG (used with exponential tilting, for which the family is
closed: tilting by theta maps asymmetry beta to beta + theta).

All likelihood ratios are evaluated in log space and exponentiated once,
since the combined importance-sampling weights multiply several ratios and
would overflow otherwise at large shifts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._mathx import exp_clipped

__all__ = [
    "GaussianStd",
    "NigParams",
    "EsscherDomain",
    "EsscherDomainError",
    "gaussian_log_translation_weight",
    "gaussian_translation_weight",
    "gaussian_W",
    "sample_gaussian",
    "bessel_k0",
    "bessel_k1",
    "bessel_k1_log",
    "nig_density",
    "nig_log_density",
    "nig_cumulant",
    "nig_cumulant_grad",
    "esscher_domain",
    "sample_inverse_gaussian",
    "sample_nig",
]

_LOG_2PI = math.log(2.0 * math.pi)
_EULER_GAMMA = 0.57721566490153286061


class EsscherDomainError(ValueError):
    """Raised when a tilt parameter falls outside the cumulant domain."""


# ---------------------------------------------------------------------------
# Gaussian family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianStd:
    """Standard normal noise on R^dim, density (2 pi)^(-d/2) exp(-|x|^2/2)."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return -0.5 * float(np.dot(x.ravel(), x.ravel())) - 0.5 * self.dim * _LOG_2PI

    def density(self, x) -> float:
        return math.exp(self.log_density(x))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)


def gaussian_log_translation_weight(x, theta) -> float:
    """log of p(x + theta) / p(x) = -<theta, x> - |theta|^2 / 2."""
    if np.ndim(x) == 0 and np.ndim(theta) == 0:
        return -theta * x - 0.5 * theta * theta
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return float(-np.dot(theta, x) - 0.5 * np.dot(theta, theta))


def gaussian_translation_weight(x, theta) -> float:
    """Translation likelihood ratio p(x + theta) / p(x), strictly positive."""
    return exp_clipped(gaussian_log_translation_weight(x, theta))


def gaussian_W(theta, x):
    """Gradient weight of the second-moment function for a standard normal.

    W(theta, x) = exp(|theta|^2) * (2 theta - x).  The exponential factor is
    exactly cancelled by the exp(-2 rho |theta|^b) correction (rho = 1/2,
    b = 2) when the corrected weight is assembled.
    """
    if np.ndim(theta) == 0:
        return exp_clipped(float(theta) ** 2) * (2.0 * theta - np.asarray(x, dtype=float))
    theta = np.asarray(theta, dtype=float)
    return exp_clipped(float(np.dot(theta, theta))) * (2.0 * theta - np.asarray(x, dtype=float))


def sample_gaussian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """One draw of a dim-dimensional standard normal vector."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return rng.standard_normal(dim)


# ---------------------------------------------------------------------------
# Modified Bessel functions K0, K1
# ---------------------------------------------------------------------------
# Small arguments (x <= 2) use the ascending series; larger arguments use
# the integral representation K_n(x) = int_0^inf exp(-x cosh t) cosh(n t) dt
# evaluated by the trapezoid rule, whose error decays spectrally for this
# integrand.  The asymptotic expansion cannot reach 1e-12 relative accuracy
# for x just above 2 (its terms bottom out near 1e-2 there), so it is only
# used as a sanity check in the tests, not in the implementation.

_SERIES_KMAX = 30


def _harmonic(k: int) -> float:
    return sum(1.0 / j for j in range(1, k + 1))


def _k0_small(x: float) -> float:
    t = 0.25 * x * x
    i0 = 1.0
    term = 1.0
    s = 0.0
    for k in range(1, _SERIES_KMAX):
        term *= t / (k * k)
        i0 += term
        s += term * _harmonic(k)
        if term < 1e-18 * i0:
            break
    return -(math.log(0.5 * x) + _EULER_GAMMA) * i0 + s


def _k1_small(x: float) -> float:
    t = 0.25 * x * x
    # I1(x) = (x/2) sum t^k / (k! (k+1)!)
    i1_term = 1.0
    i1_sum = 1.0
    # sum [psi(k+1) + psi(k+2)] t^k / (k! (k+1)!) with psi(k+1) = -gamma + H_k
    s_term = 1.0
    s = -2.0 * _EULER_GAMMA + 1.0  # k = 0: H_0 + H_1 - 2 gamma
    for k in range(1, _SERIES_KMAX):
        i1_term *= t / (k * (k + 1))
        i1_sum += i1_term
        s_term = i1_term
        s += s_term * (-2.0 * _EULER_GAMMA + _harmonic(k) + _harmonic(k + 1))
        if i1_term < 1e-18 * i1_sum:
            break
    i1 = 0.5 * x * i1_sum
    return math.log(0.5 * x) * i1 + 1.0 / x - 0.25 * x * s


def _kn_large_scaled(n: int, x: float) -> float:
    """exp(x) * K_n(x) by the trapezoid rule on the cosh integral, x >= 2."""
    # The integrand concentrates on a scale ~ 1/sqrt(x); keep ~3.5 nodes per
    # unit of that scale so the trapezoid error stays spectral.
    h = min(0.125, 0.45 / math.sqrt(x))
    t_max = math.acosh(1.0 + 50.0 / x)
    m = int(t_max / h) + 1
    acc = 0.5  # t = 0 endpoint: integrand exp(0) * cosh(0) = 1, half weight
    for j in range(1, m + 1):
        t = j * h
        ct = math.cosh(t)
        acc += math.exp(-x * (ct - 1.0)) * (ct if n == 1 else 1.0)
    return acc * h


def bessel_k0(x: float) -> float:
    """Modified Bessel function of the second kind, order 0."""
    if x <= 0.0:
        raise ValueError(f"bessel_k0 requires x > 0, got {x}")
    if x <= 2.0:
        return _k0_small(x)
    return math.exp(-x) * _kn_large_scaled(0, x)


def bessel_k1(x: float) -> float:
    """Modified Bessel function of the second kind, order 1."""
    if x <= 0.0:
        raise ValueError(f"bessel_k1 requires x > 0, got {x}")
    if x <= 2.0:
        return _k1_small(x)
    return math.exp(-x) * _kn_large_scaled(1, x)


def bessel_k1_log(x: float) -> float:
    """log K1(x), stable for large x where K1 itself underflows."""
    if x <= 0.0:
        raise ValueError(f"bessel_k1_log requires x > 0, got {x}")
    if x <= 2.0:
        return math.log(_k1_small(x))
    return -x + math.log(_kn_large_scaled(1, x))


# ---------------------------------------------------------------------------
# Normal inverse Gaussian family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NigParams:
    """Parameters of a scalar NIG law: shape alpha, asymmetry beta, scale
    delta, location mu.  gamma = sqrt(alpha^2 - beta^2) is derived."""

    alpha: float = 2.0
    beta: float = 0.2
    delta: float = 0.8
    mu: float = 0.04

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if abs(self.beta) > self.alpha:
            raise ValueError(f"|beta| <= alpha required, got beta={self.beta}, alpha={self.alpha}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")

    @property
    def gamma(self) -> float:
        return math.sqrt(self.alpha * self.alpha - self.beta * self.beta)

    def mean(self) -> float:
        return self.mu + self.delta * self.beta / self.gamma

    def variance(self) -> float:
        g = self.gamma
        return self.delta * self.alpha * self.alpha / (g * g * g)


@dataclass(frozen=True)
class EsscherDomain:
    """Open interval (lo, hi) on which the cumulant is finite.

    For NIG(alpha, beta, ., .): lo = -alpha - beta, hi = alpha - beta.
    The symmetric variant intersects the domain with its negation, which is
    what the tilting recursions need since they consume both +theta and
    -theta draws.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty domain ({self.lo}, {self.hi})")

    def contains(self, theta: float) -> bool:
        return self.lo < theta < self.hi

    @property
    def eps(self) -> float:
        return 1e-6 * (self.hi - self.lo)

    def clamp(self, theta: float) -> tuple[float, bool]:
        """Clamp theta into (lo + eps, hi - eps); returns (value, clamped?)."""
        lo, hi = self.lo + self.eps, self.hi - self.eps
        if theta < lo:
            return lo, True
        if theta > hi:
            return hi, True
        return theta, False

    def clamp_symmetric(self, theta: float, margin: float | None = None) -> tuple[float, bool]:
        """Clamp so that both theta and -theta stay strictly inside.

        margin widens the guard band beyond eps.  Near the domain edge the
        tilted law degenerates (its mean diverges and the reweighting
        underflows in double precision), so recursions that sample under the
        tilt should keep a real margin, not just a numerical one.
        """
        pad = self.eps if margin is None else max(self.eps, margin)
        lo = max(self.lo, -self.hi) + pad
        hi = min(self.hi, -self.lo) - pad
        if theta < lo:
            return lo, True
        if theta > hi:
            return hi, True
        return theta, False


def esscher_domain(params: NigParams) -> EsscherDomain:
    """Open tilt interval where the NIG cumulant is finite."""
    return EsscherDomain(-params.alpha - params.beta, params.alpha - params.beta)


def nig_log_density(x: float, params: NigParams) -> float:
    """log density of NIG(alpha, beta, delta, mu) at x.

    p(x) = alpha delta K1(alpha s) / (pi s) * exp(delta gamma + beta (x - mu))
    with s = sqrt(delta^2 + (x - mu)^2).
    """
    a, b, d, m = params.alpha, params.beta, params.delta, params.mu
    s = math.sqrt(d * d + (x - m) * (x - m))
    return (math.log(a * d) + bessel_k1_log(a * s) - math.log(math.pi) - math.log(s)
            + d * params.gamma + b * (x - m))


def nig_density(x: float, params: NigParams) -> float:
    return math.exp(nig_log_density(x, params))


def nig_cumulant(theta: float, params: NigParams) -> float:
    """Cumulant generating function psi(theta) = log E[exp(theta X)].

    psi(theta) = mu theta + delta (gamma - sqrt(alpha^2 - (beta + theta)^2)),
    finite only for |beta + theta| < alpha.
    """
    a, b = params.alpha, params.beta
    u = b + theta
    if abs(u) >= a:
        raise EsscherDomainError(f"tilt {theta} outside cumulant domain (|beta+theta| >= alpha)")
    return params.mu * theta + params.delta * (params.gamma - math.sqrt(a * a - u * u))


def nig_cumulant_grad(theta: float, params: NigParams) -> float:
    """Derivative of the cumulant: mu + delta (beta + theta) / sqrt(alpha^2 - (beta + theta)^2)."""
    a, b = params.alpha, params.beta
    u = b + theta
    if abs(u) >= a:
        raise EsscherDomainError(f"tilt {theta} outside cumulant domain (|beta+theta| >= alpha)")
    return params.mu + params.delta * u / math.sqrt(a * a - u * u)


def sample_inverse_gaussian(mean: float, shape: float, rng: np.random.Generator, size=None):
    """Draws from the inverse Gaussian IG(mean, shape).

    Uses the Michael-Schucany-Haas transformation: solve the quadratic for
    the root transformation of a chi-square(1) variate, then pick between
    the two roots with the appropriate probability.
    """
    if mean <= 0.0 or shape <= 0.0:
        raise ValueError("inverse Gaussian requires mean > 0 and shape > 0")
    if size is None:
        z = rng.standard_normal()
        nu = z * z
        w = mean * nu
        c = mean / (2.0 * shape)
        x1 = mean + c * (w - math.sqrt(w * (4.0 * shape + w)))
        if rng.random() <= mean / (mean + x1):
            return x1
        return mean * mean / x1
    z = rng.standard_normal(size)
    nu = z * z
    w = mean * nu
    c = mean / (2.0 * shape)
    x1 = mean + c * (w - np.sqrt(w * (4.0 * shape + w)))
    out = np.where(rng.random(size) <= mean / (mean + x1), x1, mean * mean / x1)
    return out


def sample_nig(params: NigParams, tilt: float, rng: np.random.Generator, size=None):
    """Draws from the Esscher-tilted law NIG(alpha, beta + tilt, delta, mu).

    Sampling goes through the inverse-Gaussian variance-mean mixture
    X = mu + (beta + tilt) V + sqrt(V) Z with V ~ IG(delta / gamma_t,
    delta^2); tilting is exact because it only moves the asymmetry
    parameter.  tilt = 0 gives the base law.
    """
    a, b, d, m = params.alpha, params.beta, params.delta, params.mu
    bt = b + tilt
    if abs(bt) >= a:
        raise EsscherDomainError(f"tilt {tilt} outside Esscher domain for alpha={a}, beta={b}")
    gamma_t = math.sqrt(a * a - bt * bt)
    ig_mean = d / gamma_t
    ig_shape = d * d
    if size is None:
        v = sample_inverse_gaussian(ig_mean, ig_shape, rng)
        return m + bt * v + math.sqrt(v) * rng.standard_normal()
    v = sample_inverse_gaussian(ig_mean, ig_shape, rng, size=size)
    return m + bt * v + np.sqrt(v) * rng.standard_normal(size)
