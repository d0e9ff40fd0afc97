"""Generic Robbins-Monro machinery.

Gain schedules satisfying the usual step condition (divergent sum, square
summable), the extended stochastic-approximation update with a remainder
term, running Cesaro averages, and the stepwise moving confidence level
used to warm up the importance-sampling shifts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "NumericAbortError",
    "StepSchedule",
    "ConfidenceSchedule",
    "RiskState",
    "DEFAULT_STEP",
    "step",
    "rm_update",
    "cesaro_update",
    "alpha_at",
    "phase1_confidence_schedule",
    "constant_confidence_schedule",
]


class NumericAbortError(RuntimeError):
    """A recursion iterate became NaN or infinite; fail fast with context."""

    def __init__(self, message: str, iteration: int | None = None,
                 component: str | None = None):
        self.iteration = iteration
        self.component = component
        detail = []
        if iteration is not None:
            detail.append(f"iteration {iteration}")
        if component is not None:
            detail.append(f"component {component!r}")
        suffix = f" ({', '.join(detail)})" if detail else ""
        super().__init__(message + suffix)


@dataclass(frozen=True)
class StepSchedule:
    """Deterministic gain sequence gamma_n = gamma1 / (n^exponent + offset).

    exponent in (1/2, 1] guarantees a divergent step sum with square-summable
    steps; the default (1, 3/4, 100) damps the first iterations.
    """

    gamma1: float = 1.0
    exponent: float = 0.75
    offset: float = 100.0

    def __post_init__(self):
        if self.gamma1 <= 0.0:
            raise ValueError(f"gamma1 must be > 0, got {self.gamma1}")
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError(f"exponent must lie in (1/2, 1], got {self.exponent}")
        if self.offset < 0.0:
            raise ValueError(f"offset must be >= 0, got {self.offset}")

    def __call__(self, n: int) -> float:
        return self.gamma1 / (n ** self.exponent + self.offset)


DEFAULT_STEP = StepSchedule()


def step(n: int, schedule: StepSchedule = DEFAULT_STEP) -> float:
    """Gain at iteration n >= 1."""
    if n < 1:
        raise ValueError(f"iteration must be >= 1, got {n}")
    return schedule(n)


@dataclass(frozen=True)
class ConfidenceSchedule:
    """Stepwise-constant confidence level increasing to the target.

    breakpoints is an ordered tuple of (first_iteration, level); the level
    active at n is the one of the last breakpoint with first_iteration <= n,
    and the final level equals the target, so the remainder term vanishes
    after a finite number of iterations.
    """

    target: float
    breakpoints: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not 0.0 < self.target < 1.0:
            raise ValueError(f"target must be in (0, 1), got {self.target}")
        if not self.breakpoints:
            raise ValueError("at least one breakpoint is required")
        prev_it, prev_lvl = 0, 0.0
        for it, lvl in self.breakpoints:
            if it <= prev_it:
                raise ValueError("breakpoint iterations must be strictly increasing")
            if not 0.0 < lvl < 1.0:
                raise ValueError(f"levels must be in (0, 1), got {lvl}")
            if lvl < prev_lvl:
                raise ValueError("levels must be non-decreasing")
            prev_it, prev_lvl = it, lvl
        if self.breakpoints[0][0] != 1:
            raise ValueError("first breakpoint must start at iteration 1")
        if self.breakpoints[-1][1] != self.target:
            raise ValueError("final level must equal the target")

    def level(self, n: int) -> float:
        if n < 1:
            raise ValueError(f"iteration must be >= 1, got {n}")
        current = self.breakpoints[0][1]
        for it, lvl in self.breakpoints:
            if n >= it:
                current = lvl
            else:
                break
        return current


def alpha_at(n: int, schedule: ConfidenceSchedule) -> float:
    """Stepwise level active at iteration n."""
    return schedule.level(n)


def phase1_confidence_schedule(alpha: float, m_steps: int) -> ConfidenceSchedule:
    """Default warm-up schedule: 50%, then 80%, then alpha over thirds."""
    if m_steps < 3:
        return ConfidenceSchedule(alpha, ((1, alpha),))
    m1 = m_steps // 3
    raw = [(1, min(0.5, alpha)), (m1 + 1, min(0.8, alpha)), (2 * m1 + 1, alpha)]
    bps: list[tuple[int, float]] = []
    for it, lvl in raw:
        if bps and bps[-1][1] == lvl:
            continue
        bps.append((it, lvl))
    return ConfidenceSchedule(alpha, tuple(bps))


def constant_confidence_schedule(alpha: float) -> ConfidenceSchedule:
    return ConfidenceSchedule(alpha, ((1, alpha),))


@dataclass
class RiskState:
    """Full recursion state: quantile and tail-mean iterates, the two
    variance reducers, Cesaro means and the moment accumulators feeding the
    tail-variance estimate."""

    xi: float = 0.0
    c: float = 0.0
    theta: float | np.ndarray = 0.0
    mu: float | np.ndarray = 0.0
    n: int = 0
    xi_bar: float = 0.0
    c_bar: float = 0.0
    m1: float = 0.0
    m2: float = 0.0
    tail_hits: int = 0
    clamp_events: int = 0


def _component_finite(v) -> bool:
    if isinstance(v, np.ndarray):
        return bool(np.isfinite(v).all())
    return math.isfinite(v)


def rm_update(z, gamma: float, h_sample, remainder=0.0, iteration: int | None = None):
    """One extended Robbins-Monro step: z - gamma * h_sample + gamma * remainder.

    Accepts scalars or ndarrays.  NaN or infinite results abort the run with
    a structured diagnostic rather than silently diverging.
    """
    out = z - gamma * h_sample + gamma * remainder
    if not _component_finite(out):
        raise NumericAbortError("non-finite iterate after update", iteration=iteration,
                                component="rm_update")
    return out


def cesaro_update(bar, value, n: int):
    """Running-mean update: the mean of n values, fed one more value."""
    return bar + (value - bar) / (n + 1)
