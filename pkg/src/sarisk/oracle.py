"""Independent ground-truth machinery used to validate the estimators.

Everything here is deliberately decoupled from the stochastic-approximation
modules: closed forms where they exist, 1-d adaptive quadrature, sorted
empirical quantiles, and grid minimizers for the second-moment functions of
the importance-sampling shifts.  Nothing in this module depends on the
recursions it is used to check.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from ._mathx import norm_cdf, norm_pdf, norm_ppf
from .distributions import GaussianStd, NigParams, nig_cumulant, nig_density

__all__ = [
    "QuadratureError",
    "quadrature",
    "empirical_quantile",
    "analytic_put_var_cvar",
    "tail_boundary",
    "grid_minimize_q",
    "norm_cdf",
    "norm_pdf",
    "norm_ppf",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, fa, b, fb, m, fm, whole, tol, depth, max_depth):
    lm, flm, left = _simpson(f, a, fa, m, fm)
    rm, frm, right = _simpson(f, m, fm, b, fb)
    err = left + right - whole
    # Extra clauses: the estimate cannot be improved further in double
    # precision (error below representable scale, or the panel collapsed).
    if (abs(err) <= 15.0 * tol
            or abs(err) <= 4e-16 * (abs(left) + abs(right))
            or (b - a) <= 5e-14 * max(1.0, abs(a), abs(b))):
        return left + right + err / 15.0
    if depth >= max_depth:
        raise QuadratureError(
            f"no convergence on [{a}, {b}] after depth {depth} (residual {abs(err):.3e})")
    half = max(0.5 * tol, 1e-24)
    return (_adaptive(f, a, fa, m, fm, lm, flm, left, half, depth + 1, max_depth)
            + _adaptive(f, m, fm, b, fb, rm, frm, right, half, depth + 1, max_depth))


def quadrature(f: Callable[[float], float], lo: float, hi: float,
               tol: float = 1e-10, max_depth: int = 48) -> float:
    """Adaptive-subdivision Simpson estimate of int_lo^hi f, absolute tol.

    Raises QuadratureError if the recursion exhausts max_depth before the
    local error criterion is met.
    """
    if not lo < hi:
        raise ValueError(f"requires lo < hi, got [{lo}, {hi}]")
    # Seed with a few panels so a symmetric integrand cannot fool the first
    # Simpson estimate.
    knots = np.linspace(lo, hi, 9)
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        fa, fb = f(a), f(b)
        m, fm, whole = _simpson(f, a, fa, b, fb)
        total += _adaptive(f, a, fa, b, fb, m, fm, whole, tol / 8.0, 0, max_depth)
    return total


def empirical_quantile(samples: Sequence[float] | np.ndarray, alpha: float) -> float:
    """Order statistic at rank ceil(alpha * N) of the sorted sample."""
    n = len(samples)
    if n == 0:
        raise ValueError("empirical_quantile of an empty sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    s = np.sort(np.asarray(samples, dtype=float))
    rank = max(1, math.ceil(alpha * n))
    return float(s[rank - 1])


def analytic_put_var_cvar(spec, alpha: float, premium: float | None = None,
                          tol: float = 1e-10) -> tuple[float, float]:
    """Reference VaR/CVaR for the short-put portfolio.

    The loss (K - S_T)+ - e^{rT} P0 decreases in the driving normal draw, so
    its alpha-quantile is the loss evaluated at the (1 - alpha)-quantile of
    the driver.  The CVaR integrates the conditional tail by quadrature.
    ``spec`` carries s0, strike, sigma, rate, maturity (see loss_models);
    premium defaults to the Black-Scholes put price of the spec.
    """
    from .loss_models import bs_put_price  # local import keeps module load acyclic

    if premium is None:
        premium = bs_put_price(spec)
    s0, k, sig, r, t = spec.s0, spec.strike, spec.sigma, spec.rate, spec.maturity
    a = (r - 0.5 * sig * sig) * t
    b = sig * math.sqrt(t)
    fwd = math.exp(r * t) * premium

    def loss(x: float) -> float:
        return max(k - s0 * math.exp(a + b * x), 0.0) - fwd

    z = norm_ppf(1.0 - alpha)
    var = loss(z)
    tail = quadrature(lambda x: loss(x) * norm_pdf(x), -14.0, z, tol=tol)
    cvar = tail / (1.0 - alpha)
    return var, cvar


def tail_boundary(loss: Callable[[float], float], xi: float,
                  lo: float = -40.0, hi: float = 40.0) -> tuple[float, bool]:
    """Boundary point of {loss >= xi} for a monotone scalar loss map.

    Returns (x_boundary, increasing).  For an increasing loss the tail is
    [x_boundary, hi]; for a decreasing one it is [lo, x_boundary].
    """
    f_lo, f_hi = loss(lo), loss(hi)
    increasing = f_hi > f_lo
    a, b = lo, hi
    for _ in range(200):
        m = 0.5 * (a + b)
        if (loss(m) >= xi) == increasing:
            b = m
        else:
            a = m
        if b - a < 1e-13 * max(1.0, abs(a)):
            break
    return 0.5 * (a + b), increasing


def _tail_interval(model, xi_star: float) -> tuple[float, float]:
    if isinstance(model.distribution, GaussianStd):
        lo, hi = -14.0, 14.0
    else:
        lo, hi = -40.0, 40.0
    b, increasing = tail_boundary(model.loss, xi_star, lo, hi)
    return (b, hi) if increasing else (lo, b)


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gauss_panels(f, lo: float, hi: float, panels: int = 40) -> float:
    """Composite 16-point Gauss-Legendre rule; near machine precision for
    integrands analytic on [lo, hi] (the Q integrands are, their only kink
    being the interval endpoint)."""
    half = 0.5 * (hi - lo) / panels
    total = 0.0
    for i in range(panels):
        mid = lo + (2 * i + 1) * half
        for u, w in zip(_GAUSS_NODES, _GAUSS_WEIGHTS):
            total += w * f(mid + half * u)
    return total * half


def _golden_section(f, a, b, tol=1e-4):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def grid_minimize_q(model, xi_star: float, which: str = "Q1",
                    grid: Iterable[float] | None = None,
                    tol: float = 1e-9) -> tuple[float, float]:
    """Quadrature-evaluated minimizer of the IS second-moment function.

    For a Gaussian 1-d model this is the mean-translation objective
    Q1(theta) = E[1_tail p(X) / p(X - theta)] (Q2 adds the squared excess
    weight); for a NIG model it is the exponential-tilting analogue
    E[1_tail exp(-theta X + psi(theta))].  The grid minimum is refined by
    golden section to 1e-4.
    """
    if model.dim != 1:
        raise ValueError("grid_minimize_q supports scalar-input models only")
    if which not in ("Q1", "Q2"):
        raise ValueError(f"which must be 'Q1' or 'Q2', got {which!r}")
    lo, hi = _tail_interval(model, xi_star)
    psi_t = model.psi

    def excess2(x: float) -> float:
        d = psi_t(model.loss(x)) - xi_star
        return d * d

    gaussian = isinstance(model.distribution, GaussianStd)
    if gaussian:
        def q_of(theta: float) -> float:
            # p(x)^2 / p(x - theta) = exp(theta^2) p(x + theta): pulling the
            # scale factor out keeps the integrand O(1) across the grid.
            if which == "Q1":
                inner = _gauss_panels(lambda x: norm_pdf(x + theta), lo, hi)
            else:
                inner = _gauss_panels(lambda x: norm_pdf(x + theta) * excess2(x), lo, hi)
            return math.exp(min(theta * theta, 700.0)) * inner
        if grid is None:
            grid = np.linspace(-4.0, 4.0, 33)
    else:
        params: NigParams = model.distribution
        def q_of(theta: float) -> float:
            c = nig_cumulant(theta, params)
            if which == "Q1":
                inner = _gauss_panels(
                    lambda x: math.exp(min(-theta * x, 700.0)) * nig_density(x, params),
                    lo, hi, panels=60)
            else:
                inner = _gauss_panels(
                    lambda x: math.exp(min(-theta * x, 700.0)) * nig_density(x, params)
                    * excess2(x), lo, hi, panels=60)
            return math.exp(min(c, 700.0)) * inner
        if grid is None:
            from .distributions import esscher_domain
            dom = esscher_domain(params)
            g_lo = max(dom.lo, -dom.hi) * 0.9
            g_hi = min(dom.hi, -dom.lo) * 0.9
            grid = np.linspace(g_lo, g_hi, 25)

    grid = np.asarray(list(grid), dtype=float)
    values = np.array([q_of(t) for t in grid])
    i = int(np.argmin(values))
    a = grid[max(0, i - 1)]
    b = grid[min(len(grid) - 1, i + 1)]
    if a == b:
        return float(grid[i]), float(values[i])
    theta_star, q_star = _golden_section(q_of, float(a), float(b), tol=1e-4)
    return theta_star, q_star
