"""Input validation helpers shared by the public functions and estimators."""
from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np

from .exceptions import DegenerateInputError, DomainError, StabilityError


def check_probability(p, name="p", *, allow_zero=True, allow_one=False):
    if not isinstance(p, Real) or isinstance(p, bool) or not math.isfinite(p):
        raise DomainError(f"{name} must be a finite real, got {p!r}")
    p = float(p)
    if p < 0.0 or p > 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")
    if p == 0.0 and not allow_zero:
        raise DegenerateInputError(f"{name} = 0 is degenerate here (formula divides by {name})")
    if p == 1.0 and not allow_one:
        raise DegenerateInputError(f"{name} = 1 is degenerate (stability would need duty cycle > 1)")
    return p


def check_count(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name):
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_cycle(g, tau, *, relaxed=False):
    """Validate on-time ``g`` and cycle length ``tau`` with 1 <= g <= tau."""
    tau = check_count(tau, "tau")
    if relaxed:
        g = check_positive(g, "g")
    else:
        g = check_count(g, "g")
    if g > tau:
        raise DomainError(f"on-time g={g} exceeds cycle length tau={tau}")
    return g, tau


def check_stable(p, g, tau):
    if not g - p * tau > 0:
        raise StabilityError(f"unstable shaper: g - p*tau = {g - p * tau:.6g} <= 0 (p={p}, g={g}, tau={tau})")


def check_duty_cycle(p, c):
    if isinstance(c, bool) or not isinstance(c, Real) or not math.isfinite(c):
        raise DomainError(f"duty cycle c must be a finite real, got {c!r}")
    c = float(c)
    if c > 1.0:
        raise DomainError(f"duty cycle c must be <= 1, got {c}")
    if not c > p:
        raise StabilityError(f"unstable shaper: duty cycle c={c} <= p={p}")
    return c


def check_rate_vector(x, name, n=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DomainError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr
