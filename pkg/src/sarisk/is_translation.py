"""Adaptive importance sampling by mean translation (Gaussian inputs).

The quantile and tail-mean recursions are driven through translated draws
reweighted by the translation likelihood ratio, while two companion
recursions steer the shifts toward the minimizers of the second-moment
functions.  The gradient weights are the corrected ones: the raw weight
exp(|theta|^2)(2 theta - x) is rescaled by deterministic functions of theta
so every update has linear growth and the whole system runs unconstrained,
with no projections.

Phase I runs a plain (unweighted) quantile companion at a stepwise moving
confidence level to drag the shifts toward the critical area before the
production phase starts; Phase II keeps adapting them (or freezes them,
matching the frozen-reducer variant).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._mathx import norm_ppf
from .distributions import GaussianStd, gaussian_log_translation_weight, gaussian_W
from .loss_models import GrowthBound, LossModel
from .naive_estimator import (NaiveReport, pilot_estimates, pilot_quantile,
                              sigma_from_moments)
from .sa_engine import (DEFAULT_STEP, ConfidenceSchedule, NumericAbortError,
                        StepSchedule, phase1_confidence_schedule)

__all__ = [
    "TranslationISState",
    "Phase1Result",
    "w_tilde",
    "l1",
    "l2",
    "l3",
    "l4",
    "run_phase1",
    "run_combined",
    "run_two_phase",
]


@dataclass
class TranslationISState:
    """Variance-reducer state: theta steers the indicator functional, mu the
    tail-excess functional."""

    theta: float | np.ndarray
    mu: float | np.ndarray
    rho: float = 0.5
    b: float = 2.0
    clamp_events: int = 0


@dataclass
class Phase1Result:
    xi_hat: float
    theta_hat: float | np.ndarray
    mu_hat: float | np.ndarray
    c_hat: float = 0.0
    max_remainder: float = 0.0
    trace_xi: list = field(default_factory=list)


def _norm(v) -> float:
    if np.ndim(v) == 0:
        return abs(float(v))
    return float(np.sqrt(np.dot(v, v)))


def _require_gaussian(model: LossModel) -> None:
    if not isinstance(model.distribution, GaussianStd):
        raise TypeError("translation importance sampling requires Gaussian input noise")


def w_tilde(theta, x, growth: GrowthBound):
    """Corrected gradient weight exp(-2 rho |theta|^b) W(theta, x) / (1 + G(-theta)^(2c)).

    For the Gaussian constants (rho = 1/2, b = 2) the exponential factors
    cancel exactly against the one inside W.
    """
    nt = _norm(theta)
    log_damp = nt * nt - 2.0 * growth.rho * nt ** growth.b
    denom = 1.0 + growth.g(-np.asarray(theta, dtype=float) if np.ndim(theta) else -theta) ** (2.0 * growth.c)
    core = 2.0 * np.asarray(theta, dtype=float) - np.asarray(x, dtype=float)
    return math.exp(min(log_damp, 700.0)) / denom * core


def l1(xi: float, theta, x, alpha: float, model: LossModel) -> float:
    """Damped, reweighted quantile update evaluated at the shifted point."""
    _require_gaussian(model)
    rho, b = model.growth.rho, model.growth.b
    nt = _norm(theta)
    damp = math.exp(-rho * nt ** b)
    if model.loss(x + theta) >= xi:
        lr = math.exp(min(gaussian_log_translation_weight(x, theta), 700.0))
        return damp * (1.0 - lr / (1.0 - alpha))
    return damp


def l2(xi: float, c: float, mu, x, alpha: float, model: LossModel) -> float:
    """Reweighted tail-mean update evaluated at the mu-shifted point."""
    _require_gaussian(model)
    lx = model.loss(x + mu)
    if lx >= xi:
        lr = math.exp(min(gaussian_log_translation_weight(x, mu), 700.0))
        return c - xi - (model.psi(lx) - xi) * lr / (1.0 - alpha)
    return c - xi


def l3(xi: float, theta, x, model: LossModel):
    """Shift update for the indicator functional; for Gaussian inputs the
    damped weight collapses to 1{phi(x - theta) >= xi} (2 theta - x)."""
    _require_gaussian(model)
    if model.loss(x - theta) < xi:
        return 0.0 * np.asarray(theta, dtype=float) if np.ndim(theta) else 0.0
    rho, b = model.growth.rho, model.growth.b
    nt = _norm(theta)
    scale = math.exp(min(nt * nt - 2.0 * rho * nt ** b, 700.0))
    return scale * (2.0 * np.asarray(theta, dtype=float) - np.asarray(x, dtype=float)) \
        if np.ndim(theta) else scale * (2.0 * theta - x)


def l4(xi: float, mu, x, model: LossModel):
    """Shift update for the tail-excess functional, normalized by the
    growth majorant so the update keeps linear growth in the state."""
    _require_gaussian(model)
    lx = model.loss(x - mu)
    if lx < xi:
        return 0.0 * np.asarray(mu, dtype=float) if np.ndim(mu) else 0.0
    rho, b = model.growth.rho, model.growth.b
    nm = _norm(mu)
    scale = math.exp(min(nm * nm - 2.0 * rho * nm ** b, 700.0))
    excess = model.psi(lx) - xi
    denom = 1.0 + model.growth.g(-mu) ** model.reducer_power + xi * xi
    core = 2.0 * np.asarray(mu, dtype=float) - np.asarray(x, dtype=float) \
        if np.ndim(mu) else 2.0 * mu - x
    return scale * excess * excess / denom * core


def _remainder_ok(ind: bool, ia: float, ia_n: float, alpha: float, a_n: float) -> bool:
    if not ind:
        return True
    return abs(ia - ia_n) <= abs(alpha - a_n) * ia * ia + 1e-9


def _segments(schedule: ConfidenceSchedule, m_steps: int):
    bps = list(schedule.breakpoints)
    out = []
    for i, (start, lvl) in enumerate(bps):
        end = bps[i + 1][0] - 1 if i + 1 < len(bps) else m_steps
        if start > m_steps:
            break
        out.append((lvl, min(end, m_steps) - start + 1))
    return out


def run_phase1(model: LossModel, alpha: float, m_steps: int = 15000,
               schedule: StepSchedule = DEFAULT_STEP,
               alpha_schedule: ConfidenceSchedule | None = None,
               rng: np.random.Generator | int | None = None,
               xi0: float | None = None, theta0=None, mu0=None,
               update_reducers: bool = True, pilot_size: int = 1000,
               warmup_gain: float = 0.1, ratio_cap: float = 25.0,
               theta_depth_cap: float = 1.2, handoff_pilot: int | None = None,
               move_cap: float = 0.25, record_every: int = 0) -> Phase1Result:
    """Warm-up phase: moving-level quantile companion plus shift recursions.

    The companion quantile runs the plain (unweighted) update at the level of
    the current schedule segment; at each segment boundary it is re-anchored
    with a fresh pilot quantile and the companion gain restarts, so the
    companion actually follows the moving level instead of lagging behind the
    quantile jumps.  The moving-level remainder is checked against its bound
    |alpha_n - alpha| / (1 - alpha)^2 at every step.

    The shift recursions are driven by self-normalized, shift-reweighted
    updates: the raw gradient samples fire on {phi(x - shift) >= xi}, an
    event whose probability collapses precisely as the shift improves, which
    freezes the plain recursions long before the optimum at these budgets.
    Substituting x -> y + shift gives updates that fire on the plain tail
    event (kept frequent by the moving level), carry bounded weights, and
    have the same mean field and the same roots; normalizing by the running
    mean weight makes the drift scale O(1) at every level.  Each step still
    consumes a single base draw shared with the companion.

    The quantile shift handed to the production phase is depth-capped
    (|theta| <= theta_depth_cap): the production quantile recursion is damped
    by exp(-|theta|^2 / 2), so an aggressively deep theta slows its transient
    recovery more than the extra asymptotic variance reduction is worth at
    realistic budgets.  The tail-mean shift has no such damping and is left
    at full depth.
    """
    _require_gaussian(model)
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    if alpha_schedule is None:
        alpha_schedule = phase1_confidence_schedule(alpha, m_steps)
    d = model.dim
    scalar = d == 1
    if scalar:
        th = 0.0 if theta0 is None else float(theta0)
        mu = 0.0 if mu0 is None else float(mu0)
    else:
        th = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float).copy()
        mu = np.zeros(d) if mu0 is None else np.array(mu0, dtype=float).copy()
    ia = 1.0 / (1.0 - alpha)
    loss, psi = model.loss, model.psi
    gamma = schedule
    max_rem = 0.0
    trace: list[float] = []
    xi = 0.0
    step_index = 0
    first_segment = True

    for lvl, count in _segments(alpha_schedule, m_steps):
        if first_segment and xi0 is not None:
            xi = float(xi0)
        else:
            xi = pilot_quantile(model, lvl, rng, pilot_size)
        first_segment = False
        ia_n = 1.0 / (1.0 - lvl)
        g_shift = warmup_gain * (1.0 - lvl)
        cap = ratio_cap / (1.0 - lvl)
        m3 = m4 = 0.0
        for j in range(1, count + 1):
            step_index += 1
            y = rng.standard_normal() if scalar else rng.standard_normal(d)
            ly = loss(y)
            ind = ly >= xi
            if ind:
                assert _remainder_ok(True, ia, ia_n, alpha, lvl), \
                    "moving-level remainder exceeded its bound"
                max_rem = max(max_rem, abs(ia_n - ia))
            if update_reducers:
                if ind:
                    if scalar:
                        w3 = math.exp(min(-th * y - 0.5 * th * th, 700.0))
                        e4 = psi(ly) - xi
                        w4 = e4 * e4 * math.exp(min(-mu * y - 0.5 * mu * mu, 700.0))
                    else:
                        w3 = math.exp(min(-float(np.dot(th, y)) - 0.5 * float(np.dot(th, th)),
                                          700.0))
                        e4 = psi(ly) - xi
                        w4 = e4 * e4 * math.exp(min(-float(np.dot(mu, y))
                                                    - 0.5 * float(np.dot(mu, mu)), 700.0))
                else:
                    w3 = w4 = 0.0
                m3 += (w3 - m3) / j
                m4 += (w4 - m4) / j
                # trust region: the normalized ratios are heavy-tailed in
                # high dimension, so cap the move, not just the ratio
                if w3 > 0.0 and m3 > 0.0:
                    d3 = g_shift * min(w3 / m3, cap)
                    n3 = d3 * _norm(th - y)
                    if n3 > move_cap:
                        d3 *= move_cap / n3
                    th -= d3 * (th - y)
                if w4 > 0.0 and m4 > 0.0:
                    d4 = g_shift * min(w4 / m4, cap)
                    n4 = d4 * _norm(mu - y)
                    if n4 > move_cap:
                        d4 *= move_cap / n4
                    mu -= d4 * (mu - y)
            xi -= gamma(j) * ((1.0 - ia_n) if ind else 1.0)
            ok = math.isfinite(xi) and (
                math.isfinite(th) and math.isfinite(mu) if scalar
                else math.isfinite(float(np.dot(th, th)) + float(np.dot(mu, mu))))
            if not ok:
                raise NumericAbortError("non-finite iterate", iteration=step_index,
                                        component="phase1")
            if record_every and step_index % record_every == 0:
                trace.append(xi)

    depth = _norm(th)
    if theta_depth_cap > 0.0 and depth > theta_depth_cap:
        th = th * (theta_depth_cap / depth)
    # The companion's terminal value carries its stationary noise (large at
    # high levels, where its updates are rare); hand the production phase a
    # dedicated pilot quantile instead.  The pseudocode's handoff is marked
    # as arbitrary, and this one is cheaper in variance per draw.
    if handoff_pilot is None:
        handoff_pilot = 8 * pilot_size
    c_hat = 0.0
    if handoff_pilot > 0:
        xi, c_hat = pilot_estimates(model, alpha, rng, handoff_pilot)
    return Phase1Result(xi_hat=xi, theta_hat=th, mu_hat=mu, c_hat=c_hat,
                        max_remainder=max_rem, trace_xi=trace)


def run_combined(model: LossModel, alpha: float, n_steps: int,
                 schedule: StepSchedule = DEFAULT_STEP,
                 rng: np.random.Generator | int | None = None,
                 xi0: float = 0.0, c0: float = 0.0, theta0=None, mu0=None,
                 frozen: bool = False, ci_level: float = 0.95,
                 burn_in: int = 0, record_every: int = 0) -> NaiveReport:
    """Production phase: the four-component recursion with averaging.

    Every iteration consumes one base draw and uses it for all four updates
    (shifted forward for the reweighted estimates, backward for the shift
    gradients).  With frozen=True the shifts stay at their initial values,
    the frozen-reducer variant.  The tail-variance moments accumulate the
    reweighted excess, so the confidence interval reflects the variance of
    the importance-sampled estimator, not the plain one.
    """
    _require_gaussian(model)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    d = model.dim
    scalar = d == 1
    if theta0 is None:
        theta0 = 0.0 if scalar else np.zeros(d)
    if mu0 is None:
        mu0 = 0.0 if scalar else np.zeros(d)
    xi, c = float(xi0), float(c0)
    ia = 1.0 / (1.0 - alpha)
    loss, psi = model.loss, model.psi
    gfun = model.growth.g
    power = model.reducer_power
    gamma = schedule
    xb = cb = 0.0
    m1 = m2 = 0.0
    hits = 0
    n_avg = 0
    trace_xi: list[float] = []
    trace_c: list[float] = []
    t0 = time.perf_counter()

    if scalar:
        th, mu = float(theta0), float(mu0)
        sn = rng.standard_normal
        for k in range(1, n_steps + 1):
            if k > burn_in:
                n_avg += 1
                xb += (xi - xb) / n_avg
                cb += (c - cb) / n_avg
            x = sn()
            g = gamma(k)
            # quantile update, theta-shifted draw
            damp = math.exp(-0.5 * th * th)
            if loss(x + th) >= xi:
                u = -th * x - 0.5 * th * th
                l1v = damp * (1.0 - ia * math.exp(u if u < 700.0 else 700.0))
            else:
                l1v = damp
            # tail-mean update, mu-shifted draw
            lm = loss(x + mu)
            if lm >= xi:
                hits += 1
                u = -mu * x - 0.5 * mu * mu
                y = (psi(lm) - xi) * math.exp(u if u < 700.0 else 700.0)
                l2v = c - xi - ia * y
            else:
                y = 0.0
                l2v = c - xi
            if k > burn_in:
                m1 += (y - m1) / n_avg
                m2 += (y * y - m2) / n_avg
            xi_prev = xi
            xi -= g * l1v
            c -= g * l2v
            if not frozen:
                l3v = (2.0 * th - x) if loss(x - th) >= xi_prev else 0.0
                lmm = loss(x - mu)
                if lmm >= xi_prev:
                    e4 = psi(lmm) - xi_prev
                    l4v = e4 * e4 * (2.0 * mu - x) / (1.0 + gfun(-mu) ** power
                                                      + xi_prev * xi_prev)
                else:
                    l4v = 0.0
                th -= g * l3v
                mu -= g * l4v
            if not (math.isfinite(xi) and math.isfinite(c)
                    and math.isfinite(th) and math.isfinite(mu)):
                comp = "xi" if not math.isfinite(xi) else \
                    ("c" if not math.isfinite(c) else "reducer")
                raise NumericAbortError("non-finite iterate", iteration=k, component=comp)
            if record_every and k % record_every == 0:
                trace_xi.append(xi)
                trace_c.append(c)
        theta_norm, mu_norm = abs(th), abs(mu)
    else:
        th = np.array(theta0, dtype=float).copy()
        mu = np.array(mu0, dtype=float).copy()
        for k in range(1, n_steps + 1):
            if k > burn_in:
                n_avg += 1
                xb += (xi - xb) / n_avg
                cb += (c - cb) / n_avg
            x = rng.standard_normal(d)
            g = gamma(k)
            th2 = float(np.dot(th, th))
            mu2 = float(np.dot(mu, mu))
            damp = math.exp(-0.5 * th2)
            if loss(x + th) >= xi:
                u = -float(np.dot(th, x)) - 0.5 * th2
                l1v = damp * (1.0 - ia * math.exp(u if u < 700.0 else 700.0))
            else:
                l1v = damp
            lm = loss(x + mu)
            if lm >= xi:
                hits += 1
                u = -float(np.dot(mu, x)) - 0.5 * mu2
                y = (psi(lm) - xi) * math.exp(u if u < 700.0 else 700.0)
                l2v = c - xi - ia * y
            else:
                y = 0.0
                l2v = c - xi
            if k > burn_in:
                m1 += (y - m1) / n_avg
                m2 += (y * y - m2) / n_avg
            xi_prev = xi
            xi -= g * l1v
            c -= g * l2v
            if not frozen:
                if loss(x - th) >= xi_prev:
                    th -= g * (2.0 * th - x)
                lmm = loss(x - mu)
                if lmm >= xi_prev:
                    e4 = psi(lmm) - xi_prev
                    mu -= g * (e4 * e4 / (1.0 + gfun(-mu) ** power
                                          + xi_prev * xi_prev)) * (2.0 * mu - x)
                th2 = float(np.dot(th, th))
                mu2 = float(np.dot(mu, mu))
            if not (math.isfinite(xi) and math.isfinite(c)
                    and math.isfinite(th2) and math.isfinite(mu2)):
                comp = "xi" if not math.isfinite(xi) else \
                    ("c" if not math.isfinite(c) else "reducer")
                raise NumericAbortError("non-finite iterate", iteration=k, component=comp)
            if record_every and k % record_every == 0:
                trace_xi.append(xi)
                trace_c.append(c)
        theta_norm, mu_norm = _norm(th), _norm(mu)

    wall_ms = (time.perf_counter() - t0) * 1e3
    n_eff = max(n_avg, 1)
    sigma = sigma_from_moments(m1, m2, alpha)
    z = norm_ppf(0.5 + 0.5 * ci_level)
    half = z * sigma / math.sqrt(n_eff)
    return NaiveReport(
        var_hat=xb, cvar_hat=cb, sigma_n=sigma,
        ci_low=cb - half, ci_high=cb + half,
        n_steps=n_steps, n_tail_hits=hits, ci_level=ci_level,
        wall_time_ms=wall_ms, xi_final=xi, c_final=c,
        theta_norm=theta_norm, mu_norm=mu_norm,
        trace_xi=trace_xi, trace_c=trace_c)


def run_two_phase(model: LossModel, alpha: float, n_steps: int,
                  phase1_steps: int = 15000,
                  schedule: StepSchedule = DEFAULT_STEP,
                  alpha_schedule: ConfidenceSchedule | None = None,
                  rng: np.random.Generator | int | None = None,
                  frozen: bool = False, ci_level: float = 0.95,
                  burn_in: int = 0, warmup_gain: float = 0.1,
                  theta_depth_cap: float = 1.2) -> NaiveReport:
    """Warm-up then production: the complete two-phase procedure."""
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    p1 = run_phase1(model, alpha, m_steps=phase1_steps, schedule=schedule,
                    alpha_schedule=alpha_schedule, rng=rng,
                    warmup_gain=warmup_gain, theta_depth_cap=theta_depth_cap)
    return run_combined(model, alpha, n_steps, schedule=schedule, rng=rng,
                        xi0=p1.xi_hat, c0=p1.c_hat, theta0=p1.theta_hat,
                        mu0=p1.mu_hat, frozen=frozen, ci_level=ci_level,
                        burn_in=burn_in)
