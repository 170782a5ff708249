"""Curvature of the relaxed waiting time ``w(p, c)``.

Closed-form second derivatives on both sides of the kink ``c = 2p`` (where the
queue estimate switches between zero and its rational branch), a central
finite-difference oracle, and a grid scan that summarises where the Hessian is
indefinite.

Printed forms and corrections: the ``c > 2p`` mixed derivative is sometimes
typeset as ``-1 / (2 c^2 (1-p)2)``; the exponent is a square, i.e.
``-1 / (2 c^2 (1-p)^2)``, which is what finite differences confirm. The
``c < 2p`` block, including the ``-1/p^3`` term inside ``w_pp``, is exact as
printed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_duty_cycle, check_positive, check_probability
from .exceptions import DomainError, NonDifferentiableError, StraddleError
from .model import mean_waiting_time_relaxed

__all__ = [
    "CurvatureReport",
    "ConvexityScan",
    "second_derivatives",
    "finite_difference_hessian",
    "scan_convexity",
    "default_grid",
]

EIG_TOL = 1e-10


@dataclass(frozen=True)
class CurvatureReport:
    w_pp: float
    w_cc: float
    w_pc: float
    branch: str
    hessian_psd: bool
    eigenvalues: tuple[float, float]

    @property
    def min_eigenvalue(self):
        return self.eigenvalues[0]


@dataclass(frozen=True)
class ConvexityScan:
    min_w_pp: float
    min_w_cc: float
    indefinite_fraction: float
    n_points: int
    skipped: int
    rows: list = field(repr=False)


def _report(w_pp, w_cc, w_pc, branch):
    eig = np.linalg.eigvalsh(np.array([[w_pp, w_pc], [w_pc, w_cc]]))
    lo, hi = float(eig[0]), float(eig[1])
    return CurvatureReport(w_pp, w_cc, w_pc, branch, lo >= -EIG_TOL, (lo, hi))


def _check_point(p, c):
    p = check_probability(p, allow_zero=False)
    c = check_duty_cycle(p, c)
    return p, c


def second_derivatives(p, c) -> CurvatureReport:
    """Closed-form Hessian of ``w`` in ``(p, c)``; the kink ``c = 2p`` is rejected."""
    p, c = _check_point(p, c)
    if math.isclose(c, 2.0 * p, rel_tol=0.0, abs_tol=1e-12):
        raise NonDifferentiableError(f"w is not differentiable on the kink c = 2p (p={p}, c={c})")
    q = 1.0 - p
    if c > 2.0 * p:
        w_pp = (1.0 - c) / (c * q**3)
        w_cc = 1.0 / (c**3 * q)
        w_pc = -1.0 / (2.0 * c**2 * q**2)
        return _report(w_pp, w_cc, w_pc, "clamped")
    gap = c - p
    w_pp = (1.0 - c) * (1.0 / gap**3 - 1.0 / p**3 + 1.0 / (c * q**3))
    w_cc = q / gap**3 + 1.0 / (c**3 * q)
    w_pc = -0.5 * ((2.0 - p - c) / gap**3 + 1.0 / p**2 + 1.0 / (c**2 * q**2))
    return _report(w_pp, w_cc, w_pc, "unclamped")


def finite_difference_hessian(p, c, step=1e-4) -> CurvatureReport:
    """Central-difference Hessian of :func:`mean_waiting_time_relaxed`.

    The nine-point stencil moves ``c - 2p`` by up to ``3 * step`` (the corner
    ``(p + h, c - h)``), so points with ``|c - 2p| <= 3 * step`` raise
    :class:`StraddleError`.
    """
    p, c = _check_point(p, c)
    h = check_positive(step, "step")
    if abs(c - 2.0 * p) <= 3.0 * h:
        raise StraddleError(f"stencil of half-width {h} at (p={p}, c={c}) crosses the kink c = 2p")
    if p - h <= 0.0 or c + h > 1.0 or c - h <= p + h:
        raise DomainError(f"stencil of half-width {h} at (p={p}, c={c}) leaves the domain")

    def w(pp, cc):
        return mean_waiting_time_relaxed(pp, cc)

    w0 = w(p, c)
    w_pp = (w(p + h, c) - 2.0 * w0 + w(p - h, c)) / h**2
    w_cc = (w(p, c + h) - 2.0 * w0 + w(p, c - h)) / h**2
    w_pc = (w(p + h, c + h) - w(p + h, c - h) - w(p - h, c + h) + w(p - h, c - h)) / (4.0 * h**2)
    return _report(w_pp, w_cc, w_pc, "clamped" if c > 2.0 * p else "unclamped")


def default_grid(n=50, p_range=(0.05, 0.9), margin=0.02):
    """``n x n`` points with ``p`` uniform on ``p_range`` and ``c`` uniform on ``[p + margin, 1)``.

    ``c = 1`` is left out: ``w`` vanishes identically there, so ``w_pp = 0``.
    """
    points = []
    for p in np.linspace(*p_range, n):
        for c in np.linspace(p + margin, 1.0, n, endpoint=False):
            points.append((float(p), float(c)))
    return points


def scan_convexity(points) -> ConvexityScan:
    """Evaluate the closed-form Hessian on every point; kink points are skipped.

    ``rows`` holds ``(p, c, w_pp, w_cc, w_pc, min_eig)`` tuples in input order.
    """
    rows = []
    skipped = 0
    for p, c in points:
        try:
            r = second_derivatives(p, c)
        except NonDifferentiableError:
            skipped += 1
            continue
        rows.append((p, c, r.w_pp, r.w_cc, r.w_pc, r.min_eigenvalue))
    if not rows:
        raise DomainError("no differentiable points to scan")
    arr = np.array([row[2:] for row in rows])
    return ConvexityScan(
        min_w_pp=float(arr[:, 0].min()),
        min_w_cc=float(arr[:, 1].min()),
        indefinite_fraction=float(np.mean(arr[:, 3] < -EIG_TOL)),
        n_points=len(rows),
        skipped=skipped,
        rows=rows,
    )
