"""Adaptive importance sampling by exponential tilting (NIG inputs).

The tilted family is sampled exactly (tilting a NIG law by theta moves its
asymmetry parameter), the quantile and tail-mean recursions consume draws
tilted by the current shifts, and the shift recursions consume draws tilted
the opposite way, mirroring the gradient representation of the tilted
second-moment functions.  Each iteration therefore uses up to four
coordinated draws, generated from independent substreams spawned off the
caller's generator.

Tilt iterates are clamped into the symmetric admissible interval (both the
tilt and its negation must keep the cumulant finite); every clamp is
counted and reported.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._mathx import norm_ppf
from .distributions import (EsscherDomain, NigParams, esscher_domain,
                            nig_cumulant, nig_cumulant_grad, sample_nig)
from .loss_models import LossModel
from .naive_estimator import (NaiveReport, pilot_estimates, pilot_quantile,
                              sigma_from_moments)
from .sa_engine import (DEFAULT_STEP, ConfidenceSchedule, NumericAbortError,
                        StepSchedule, phase1_confidence_schedule)

__all__ = [
    "EsscherISState",
    "EsscherPhase1Result",
    "l1_es",
    "l2_es",
    "l3_es",
    "l4_es",
    "run_phase1_esscher",
    "run_combined_esscher",
    "run_two_phase_esscher",
]


@dataclass
class EsscherISState:
    """Scalar tilts for the quantile (theta) and tail-mean (mu) functionals."""

    theta: float
    mu: float
    domain: EsscherDomain
    lam: float
    clamp_events: int = 0


@dataclass
class EsscherPhase1Result:
    xi_hat: float
    theta_hat: float
    mu_hat: float
    c_hat: float = 0.0
    clamp_events: int = 0
    max_remainder: float = 0.0
    trace_xi: list = field(default_factory=list)


def _require_nig(model: LossModel) -> NigParams:
    if not isinstance(model.distribution, NigParams):
        raise TypeError("Esscher importance sampling requires NIG input noise")
    return model.distribution


def l1_es(xi: float, theta: float, x_tilted: float, alpha: float,
          params: NigParams, loss) -> float:
    """Quantile update from a draw tilted by theta, reweighted back to the
    base law and damped by exp(-(psi(theta) + psi(-theta)) / 2)."""
    ps_t = nig_cumulant(theta, params)
    ps_mt = nig_cumulant(-theta, params)
    damp = math.exp(-0.5 * (ps_t + ps_mt))
    if loss(x_tilted) > xi:
        lr = math.exp(min(ps_t - theta * x_tilted, 700.0))
        return damp * (1.0 - lr / (1.0 - alpha))
    return damp


def l2_es(xi: float, c: float, mu: float, x_tilted: float, alpha: float,
          params: NigParams, loss, psi=None) -> float:
    """Tail-mean update from a draw tilted by mu: c - wbar, with
    wbar = Psi(xi) + (Psi(phi(x)) - Psi(xi)) 1{phi(x) > xi} e^{psi(mu) - mu x} / (1 - alpha)."""
    if psi is None:
        psi = lambda v: v
    lx = loss(x_tilted)
    if lx > xi:
        lr = math.exp(min(nig_cumulant(mu, params) - mu * x_tilted, 700.0))
        return c - psi(xi) - (psi(lx) - psi(xi)) * lr / (1.0 - alpha)
    return c - psi(xi)


def l3_es(xi: float, theta: float, x_neg: float, params: NigParams, loss) -> float:
    """Tilt update for the indicator functional from a draw tilted by -theta."""
    if loss(x_neg) > xi:
        return nig_cumulant_grad(theta, params) - x_neg
    return 0.0


def l4_es(xi: float, mu: float, x_neg: float, params: NigParams, loss,
          psi=None, lam: float = 4.0, dim: int = 1) -> float:
    """Tilt update for the tail-excess functional from a draw tilted by -mu,
    damped by exp(-(lam/2) sqrt(d) |psi'(-mu)|) / (1 + xi^2)."""
    if psi is None:
        psi = lambda v: v
    lx = loss(x_neg)
    if lx > xi:
        damp = math.exp(-0.5 * lam * math.sqrt(dim) * abs(nig_cumulant_grad(-mu, params)))
        e = psi(lx) - xi
        return damp / (1.0 + xi * xi) * e * e * (nig_cumulant_grad(mu, params) - x_neg)
    return 0.0


def _segments(schedule: ConfidenceSchedule, m_steps: int):
    bps = list(schedule.breakpoints)
    out = []
    for i, (start, lvl) in enumerate(bps):
        end = bps[i + 1][0] - 1 if i + 1 < len(bps) else m_steps
        if start > m_steps:
            break
        out.append((lvl, min(end, m_steps) - start + 1))
    return out


def run_phase1_esscher(model: LossModel, alpha: float, m_steps: int = 15000,
                       schedule: StepSchedule = DEFAULT_STEP,
                       alpha_schedule: ConfidenceSchedule | None = None,
                       rng: np.random.Generator | int | None = None,
                       xi0: float | None = None, theta0: float = 0.0,
                       mu0: float = 0.0, pilot_size: int = 1000,
                       warmup_gain: float = 0.1, ratio_cap: float = 25.0,
                       handoff_pilot: int | None = None, tilt_margin: float = 0.05,
                       move_cap: float = 0.25, record_every: int = 0) -> EsscherPhase1Result:
    """Warm-up for the tilting procedure.

    Mirrors the translation warm-up: a moving-level quantile companion on
    base draws, re-anchored by a pilot quantile at each level segment, and
    self-normalized tilt recursions reweighted back to the base law.  The raw
    tilt updates fire on {phi(X tilted by -shift) > xi}, which becomes a
    vanishing-probability event exactly as the tilt improves; rewritten
    against base draws with the (bounded, on the relevant tail) weight
    exp(-shift * y - psi(-shift)), the same mean field is sampled at the
    moving level's event frequency, and normalizing by the running mean
    weight keeps the drift O(1) at every level.  Phase 1 therefore consumes
    one base draw per step; tilted draws appear only in the production phase.

    Tilts are clamped into the symmetric admissible interval at every step
    (the recursions evaluate the cumulant at both the tilt and its negation).
    """
    params = _require_nig(model)
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    if alpha_schedule is None:
        alpha_schedule = phase1_confidence_schedule(alpha, m_steps)
    dom = esscher_domain(params)
    pad = tilt_margin * (dom.hi - dom.lo)
    g_base = rng.spawn(4)[0]
    th, mu = float(theta0), float(mu0)
    loss, psi = model.loss, model.psi
    ia = 1.0 / (1.0 - alpha)
    gamma = schedule
    clamps = 0
    max_rem = 0.0
    trace: list[float] = []
    xi = 0.0
    step_index = 0
    first_segment = True

    for lvl, count in _segments(alpha_schedule, m_steps):
        if first_segment and xi0 is not None:
            xi = float(xi0)
        else:
            xi = pilot_quantile(model, lvl, g_base, pilot_size)
        first_segment = False
        ia_n = 1.0 / (1.0 - lvl)
        g_shift = warmup_gain * (1.0 - lvl)
        cap = ratio_cap / (1.0 - lvl)
        m3 = m4 = 0.0
        for j in range(1, count + 1):
            step_index += 1
            th, cl1 = dom.clamp_symmetric(th, pad)
            mu, cl2 = dom.clamp_symmetric(mu, pad)
            clamps += int(cl1) + int(cl2)
            y = sample_nig(params, 0.0, g_base)
            ly = loss(y)
            ind = ly >= xi
            if ind:
                assert abs(ia_n - ia) <= abs(alpha - lvl) * ia * ia + 1e-9, \
                    "moving-level remainder exceeded its bound"
                max_rem = max(max_rem, abs(ia_n - ia))
                w3 = math.exp(min(-th * y - nig_cumulant(-th, params), 700.0))
                e4 = psi(ly) - xi
                w4 = e4 * e4 * math.exp(min(-mu * y - nig_cumulant(-mu, params), 700.0))
            else:
                w3 = w4 = 0.0
            m3 += (w3 - m3) / j
            m4 += (w4 - m4) / j
            if w3 > 0.0 and m3 > 0.0:
                d3 = g_shift * min(w3 / m3, cap) * (nig_cumulant_grad(th, params) - y)
                th -= max(-move_cap, min(move_cap, d3))
            if w4 > 0.0 and m4 > 0.0:
                d4 = g_shift * min(w4 / m4, cap) * (nig_cumulant_grad(mu, params) - y)
                mu -= max(-move_cap, min(move_cap, d4))
            xi -= gamma(j) * ((1.0 - ia_n) if ind else 1.0)
            if not (math.isfinite(xi) and math.isfinite(th) and math.isfinite(mu)):
                raise NumericAbortError("non-finite iterate", iteration=step_index,
                                        component="phase1")
            if record_every and step_index % record_every == 0:
                trace.append(xi)

    th, cl1 = dom.clamp_symmetric(th, pad)
    mu, cl2 = dom.clamp_symmetric(mu, pad)
    clamps += int(cl1) + int(cl2)
    # Hand off a dedicated pilot quantile (see the translation warm-up).
    # The default is larger here: the loss density at high quantiles of the
    # heavy-tailed law is tiny, so the production recursion erases
    # initialization error very slowly, while batch draws cost almost
    # nothing.
    if handoff_pilot is None:
        handoff_pilot = 64 * pilot_size
    c_hat = 0.0
    if handoff_pilot > 0:
        xi, c_hat = pilot_estimates(model, alpha, g_base, handoff_pilot)
    return EsscherPhase1Result(xi_hat=xi, theta_hat=th, mu_hat=mu, c_hat=c_hat,
                               clamp_events=clamps, max_remainder=max_rem,
                               trace_xi=trace)


def run_combined_esscher(model: LossModel, alpha: float, n_steps: int,
                         schedule: StepSchedule = DEFAULT_STEP,
                         rng: np.random.Generator | int | None = None,
                         xi0: float = 0.0, c0: float = 0.0,
                         theta0: float = 0.0, mu0: float = 0.0,
                         frozen: bool = False, ci_level: float = 0.95,
                         burn_in: int = 0, tilt_margin: float = 0.05,
                         record_every: int = 0) -> NaiveReport:
    """Production phase of the tilting procedure.

    Adaptive mode consumes four draws per iteration (tilts theta, mu,
    -theta, -mu) from independent substreams.  Frozen mode updates only the
    quantile and tail-mean iterates; when additionally the two frozen tilts
    coincide, the single tilted law is sampled once per iteration and shared
    by both updates, which makes the zero-tilt run match the plain recursion
    path by path.
    """
    params = _require_nig(model)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    dom = esscher_domain(params)
    pad = tilt_margin * (dom.hi - dom.lo)
    lam = model.esscher_lambda if model.esscher_lambda is not None else 4.0
    g1, g2, g3, g4 = rng.spawn(4)
    xi, c = float(xi0), float(c0)
    th, mu = float(theta0), float(mu0)
    ia = 1.0 / (1.0 - alpha)
    loss, psi = model.loss, model.psi
    gamma = schedule
    xb = cb = 0.0
    m1 = m2 = 0.0
    hits = 0
    clamps = 0
    n_avg = 0
    share_draw = frozen and th == mu
    trace_xi: list[float] = []
    trace_c: list[float] = []
    t0 = time.perf_counter()
    for k in range(1, n_steps + 1):
        if not frozen:
            th, cl1 = dom.clamp_symmetric(th, pad)
            mu, cl2 = dom.clamp_symmetric(mu, pad)
            clamps += int(cl1) + int(cl2)
        if k > burn_in:
            n_avg += 1
            xb += (xi - xb) / n_avg
            cb += (c - cb) / n_avg
        g = gamma(k)
        ps_t = nig_cumulant(th, params)
        ps_mt = nig_cumulant(-th, params)
        ps_m = nig_cumulant(mu, params)
        # quantile update, draw tilted by theta
        x1 = sample_nig(params, th, g1)
        damp = math.exp(-0.5 * (ps_t + ps_mt))
        if loss(x1) > xi:
            lr = math.exp(min(ps_t - th * x1, 700.0))
            l1v = damp * (1.0 - ia * lr)
        else:
            l1v = damp
        # tail-mean update, draw tilted by mu
        x2 = x1 if share_draw else sample_nig(params, mu, g2)
        lx2 = loss(x2)
        pxi = psi(xi)
        if lx2 > xi:
            hits += 1
            y = (psi(lx2) - pxi) * math.exp(min(ps_m - mu * x2, 700.0))
            l2v = c - pxi - ia * y
        else:
            y = 0.0
            l2v = c - pxi
        if k > burn_in:
            m1 += (y - m1) / n_avg
            m2 += (y * y - m2) / n_avg
        xi_prev = xi
        xi -= g * l1v
        c -= g * l2v
        if not frozen:
            x3 = sample_nig(params, -th, g3)
            if loss(x3) > xi_prev:
                th -= g * (nig_cumulant_grad(th, params) - x3)
            x4 = sample_nig(params, -mu, g4)
            lx4 = loss(x4)
            if lx4 > xi_prev:
                e4 = psi(lx4) - xi_prev
                damp4 = math.exp(-0.5 * lam * abs(nig_cumulant_grad(-mu, params)))
                mu -= g * (damp4 / (1.0 + xi_prev * xi_prev) * e4 * e4
                           * (nig_cumulant_grad(mu, params) - x4))
        if not (math.isfinite(xi) and math.isfinite(c)
                and math.isfinite(th) and math.isfinite(mu)):
            comp = "xi" if not math.isfinite(xi) else \
                ("c" if not math.isfinite(c) else "tilt")
            raise NumericAbortError("non-finite iterate", iteration=k, component=comp)
        if record_every and k % record_every == 0:
            trace_xi.append(xi)
            trace_c.append(c)
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
        theta_norm=abs(th), mu_norm=abs(mu), clamp_events=clamps,
        trace_xi=trace_xi, trace_c=trace_c)


def run_two_phase_esscher(model: LossModel, alpha: float, n_steps: int,
                          phase1_steps: int = 15000,
                          schedule: StepSchedule = DEFAULT_STEP,
                          alpha_schedule: ConfidenceSchedule | None = None,
                          rng: np.random.Generator | int | None = None,
                          frozen: bool = False, ci_level: float = 0.95,
                          burn_in: int = 0, warmup_gain: float = 0.1,
                          tilt_margin: float = 0.05) -> NaiveReport:
    """Warm-up then production for the tilting procedure."""
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(rng)
    p1 = run_phase1_esscher(model, alpha, m_steps=phase1_steps, schedule=schedule,
                            alpha_schedule=alpha_schedule, rng=rng,
                            warmup_gain=warmup_gain, tilt_margin=tilt_margin)
    rep = run_combined_esscher(model, alpha, n_steps, schedule=schedule, rng=rng,
                               xi0=p1.xi_hat, c0=p1.c_hat, theta0=p1.theta_hat,
                               mu0=p1.mu_hat, frozen=frozen, ci_level=ci_level,
                               burn_in=burn_in, tilt_margin=tilt_margin)
    rep.clamp_events += p1.clamp_events
    return rep
