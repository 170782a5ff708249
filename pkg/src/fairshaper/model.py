"""Closed-form model of the on-off (fixed cycle traffic light) shaper.

A shaper with cycle ``tau`` slots transmits in the first ``g`` slots of every
cycle (real packet if one is buffered, dummy otherwise) and stays silent for
the remaining ``tau - g`` slots. Arrivals are Bernoulli(p) per slot.

Two parametrisations are exposed:

* integer mode, ``(p, g, tau)``, using the FCTL waiting-time formula with
  Miller's estimate of the end-of-green queue;
* relaxed mode, ``(p, c)`` with real duty cycle ``c = g / tau`` (on-time of one
  slot per cycle), which is what the allocator optimises over. The same
  quantity written in terms of the dummy rate ``d = c - p`` is
  :func:`waiting_time_pd`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._validation import (
    check_count,
    check_cycle,
    check_duty_cycle,
    check_positive,
    check_probability,
    check_stable,
)
from .exceptions import DomainError, StabilityError

__all__ = [
    "ShaperParams",
    "ShaperDerived",
    "miller_queue_estimate",
    "relaxed_queue_estimate",
    "mean_waiting_time",
    "mean_waiting_time_relaxed",
    "waiting_time_pd",
    "dummy_rate",
    "stability_check",
    "quantize_schedule",
    "derive",
]


@dataclass(frozen=True)
class ShaperParams:
    """Per-flow shaping configuration.

    ``g`` is an integer slot count unless the instance was built with
    :meth:`from_duty_cycle`, in which case it is the real value ``c * tau``.
    """

    p: float
    g: float
    tau: int
    slot_duration: float = 0.01
    relaxed: bool = field(default=False, compare=False)

    def __post_init__(self):
        check_probability(self.p)
        check_cycle(self.g, self.tau, relaxed=self.relaxed)
        check_positive(self.slot_duration, "slot_duration")

    @classmethod
    def from_duty_cycle(cls, p, c, tau=1, slot_duration=0.01):
        if not 0 < c <= 1:
            raise DomainError(f"duty cycle must lie in (0, 1], got {c}")
        tau = check_count(tau, "tau")
        return cls(p, c * tau, tau, slot_duration, relaxed=True)

    @property
    def c(self):
        return self.g / self.tau

    @property
    def r(self):
        """Off (red) slots per cycle."""
        return self.tau - self.g

    @property
    def stable(self):
        return stability_check(self.p, self.g, self.tau)


@dataclass(frozen=True)
class ShaperDerived:
    expected_queue: float
    mean_wait: float
    dummy_rate: float
    queue_clamped: bool


def _miller(p, g, tau):
    num = (2.0 * p * tau - g) * (1.0 - p)
    if num <= 0.0:
        return 0.0, True
    return num / (2.0 * (g - p * tau)), False


def miller_queue_estimate(p, g, tau, *, return_branch=False):
    """Miller's estimate of the expected queue length at the end of green.

    ``max{(2 p tau - g)(1 - p) / (2 (g - p tau)), 0}``. With
    ``return_branch=True`` a ``(value, clamped)`` pair is returned, where
    ``clamped`` is true on the region ``2 p tau <= g`` where the estimate is
    identically zero.
    """
    p = check_probability(p)
    g, tau = check_cycle(g, tau, relaxed=not float(g).is_integer())
    check_stable(p, g, tau)
    value, clamped = _miller(p, g, tau)
    return (value, clamped) if return_branch else value


def relaxed_queue_estimate(p, c, *, return_branch=False):
    """End-of-green queue estimate for on-time one slot and duty cycle ``c``."""
    p = check_probability(p)
    c = check_duty_cycle(p, c)
    value, clamped = _miller(p, c, 1.0)
    return (value, clamped) if return_branch else value


def mean_waiting_time(p, g, tau):
    """Mean per-packet wait in slots, integer mode.

    ``(tau - g) / ((1 - p) tau) * (E(q_x) / p + (tau - g + 1) / 2)``
    """
    p = check_probability(p, allow_zero=False)
    eq = miller_queue_estimate(p, g, tau)
    r = tau - g
    return r / ((1.0 - p) * tau) * (eq / p + (r + 1) / 2.0)


def mean_waiting_time_relaxed(p, c):
    """Mean per-packet wait in slots for real duty cycle ``c`` in ``(p, 1]``."""
    p = check_probability(p, allow_zero=False)
    c = check_duty_cycle(p, c)
    eq, _ = _miller(p, c, 1.0)
    return (1.0 - c) / (1.0 - p) * (eq / p + 1.0 / (2.0 * c))


def waiting_time_pd(p, d):
    """Mean wait written in arrival rate ``p`` and dummy rate ``d`` (``c = p + d``)."""
    p = check_probability(p, allow_zero=False)
    if not math.isfinite(d):
        raise DomainError(f"dummy rate must be finite, got {d!r}")
    if d <= 0.0:
        raise StabilityError(f"dummy rate d={d} <= 0 leaves duty cycle c = p (unstable)")
    c = p + d
    if c > 1.0 + 1e-12:
        raise DomainError(f"p + d = {c} exceeds 1")
    overflow = max((p - d) * (1.0 - p) / (p * d), 0.0)
    return (1.0 - c) / (2.0 * (1.0 - p)) * (overflow + 1.0 / c)


def dummy_rate(p, g, tau):
    """Dummy transmissions per slot, ``g / tau - p``. ``p = 0`` is allowed."""
    p = check_probability(p)
    g, tau = check_cycle(g, tau, relaxed=not float(g).is_integer())
    check_stable(p, g, tau)
    return g / tau - p


def stability_check(p, g, tau):
    return g - p * tau > 0


def quantize_schedule(c, tau, horizon):
    """Integer on-times ``g_k`` whose running sum tracks ``k * c * tau``.

    Each prefix sum is ``ceil(K c tau)`` so the deviation from the real-valued
    target stays in ``[0, 1)``, and every ``g_k`` is ``floor(c tau)`` or
    ``ceil(c tau)``.
    """
    if not 0 < c <= 1:
        raise DomainError(f"duty cycle must lie in (0, 1], got {c}")
    tau = check_count(tau, "tau")
    horizon = check_count(horizon, "horizon")
    target = c * tau
    schedule = []
    previous = 0
    for k in range(1, horizon + 1):
        # round away float noise such as 2 * 3.5 = 7.000000000000001
        cumulative = math.ceil(round(k * target, 9))
        schedule.append(cumulative - previous)
        previous = cumulative
    return schedule


def derive(params: ShaperParams) -> ShaperDerived:
    """Queue estimate, mean wait and dummy rate for a stable configuration."""
    p = params.p
    if params.relaxed:
        eq, clamped = relaxed_queue_estimate(p, params.c, return_branch=True)
        wait = mean_waiting_time_relaxed(p, params.c) if p > 0 else 0.0
    else:
        eq, clamped = miller_queue_estimate(p, params.g, params.tau, return_branch=True)
        wait = mean_waiting_time(p, params.g, params.tau) if p > 0 else 0.0
    return ShaperDerived(
        expected_queue=eq,
        mean_wait=wait,
        dummy_rate=params.c - p,
        queue_clamped=clamped,
    )
