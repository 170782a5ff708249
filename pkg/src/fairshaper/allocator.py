"""Proportional-fair rate allocation for shaped flows sharing one link.

Each flow ``f`` gets an information rate ``p_f`` and, if private, a dummy rate
``d_f``. The problem solved is::

    minimise    U(p) = -sum_f log p_f
    subject to  w(p_f, d_f) <= sigma_f          (private flows)
                sum_f (p_f + d_f) / psi_f <= 1
                0 <= p_f, d_f <= 1,  d_f > 0 (private),  d_f = 0 (otherwise)

The delay constraint makes the problem non-convex jointly, but it is convex in
``p`` for fixed ``d`` and in ``d`` for fixed ``p``. :func:`solve_allocation`
alternates short projected primal-dual subgradient loops over the two blocks
with one shared multiplier vector, and keeps the best feasible point seen.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from ._kernels import d_sweep, p_sweep, wait_and_grad
from ._validation import check_count, check_positive, check_rate_vector
from .exceptions import DomainError, InfeasibleProblemError

__all__ = [
    "FlowSpec",
    "SolverOptions",
    "Multipliers",
    "AllocationResult",
    "FeasibilityReport",
    "BruteForceResult",
    "evaluate_objective",
    "check_feasible",
    "subgradient_step_p",
    "subgradient_step_d",
    "minimum_dummy_rate",
    "restore_feasibility",
    "solve_allocation",
    "brute_force_small",
    "read_scenario",
    "ProportionalFairAllocator",
]

P_MIN = 1e-6
P_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class FlowSpec:
    """A flow with mean delay deadline ``sigma`` (slots) and physical rate ``psi``."""

    id: str
    sigma: float
    psi: float = 1.0
    private: bool = True

    def __post_init__(self):
        check_positive(self.sigma, "sigma")
        check_positive(self.psi, "psi")


@dataclass(frozen=True)
class SolverOptions:
    """Settings for :func:`solve_allocation`.

    ``check_every`` is the number of alternating rounds between feasibility
    restorations of the running iterate. The run stalls when the incumbent
    objective has improved by less than ``tolerance`` over the last
    ``patience`` checkpoints.

    ``step_decay`` selects the step rule:

    * ``"adaptive"`` (default): on a stall the step is multiplied by
      ``anneal_factor``; the run stops at a stall once the step is below
      ``min_step_size``. A constant step leaves the primal-dual iterates
      cycling around the saddle point; shrinking it collapses the cycle.
    * ``"constant"``: fixed step, stop at the first stall.
    * ``"sqrt"``: step ``alpha / sqrt(round)``, stop at the first stall.
    """

    step_size: float = 1e-3
    inner_iters: int = 10
    outer_iters: int = 40000
    epsilon_d: float = 1e-4
    tolerance: float = 1e-6
    step_decay: str = "adaptive"
    check_every: int = 100
    patience: int = 20
    anneal_factor: float = 0.3
    min_step_size: float = 1e-5

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        check_count(self.inner_iters, "inner_iters")
        check_count(self.outer_iters, "outer_iters")
        check_positive(self.epsilon_d, "epsilon_d")
        check_positive(self.tolerance, "tolerance")
        check_count(self.check_every, "check_every")
        check_count(self.patience, "patience")
        if self.step_decay not in ("adaptive", "constant", "sqrt"):
            raise DomainError(f"step_decay must be 'adaptive', 'constant' or 'sqrt', got {self.step_decay!r}")
        if not 0 < self.anneal_factor < 1:
            raise DomainError(f"anneal_factor must lie in (0, 1), got {self.anneal_factor}")
        check_positive(self.min_step_size, "min_step_size")


@dataclass
class Multipliers:
    """Dual variables: delay (per flow), link (scalar), ``p <= 1``, ``p >= 0``, ``d >= 0``."""

    lambda1: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    lambda4: np.ndarray
    lambda5: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(1), np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self):
        return Multipliers(*(a.copy() for a in self.as_tuple()))

    def as_tuple(self):
        return self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5

    def as_vector(self):
        return np.concatenate(self.as_tuple())

    def is_nonnegative(self):
        return all(np.all(a >= 0) for a in self.as_tuple())


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: list = field(default_factory=list)
    usage: float = 0.0
    waits: tuple = ()

    def __bool__(self):
        return self.feasible


@dataclass(frozen=True)
class AllocationResult:
    p_star: np.ndarray
    d_star: np.ndarray
    w: np.ndarray
    multipliers: Multipliers
    objective_trace: np.ndarray
    feasible: bool
    converged: bool
    n_rounds: int

    @property
    def objective(self):
        return float(self.objective_trace[-1])


@dataclass(frozen=True)
class BruteForceResult:
    p: np.ndarray
    d: np.ndarray
    objective: float


def _flow_arrays(flows):
    if len(flows) == 0:
        raise DomainError("at least one flow is required")
    sigma = np.array([f.sigma for f in flows], dtype=float)
    psi = np.array([f.psi for f in flows], dtype=float)
    private = np.array([bool(f.private) for f in flows])
    return sigma, psi, private


def _wait(p, d):
    return wait_and_grad(p, d)[0]


def evaluate_objective(p):
    """``U(p) = -sum log p_f``."""
    p = check_rate_vector(p, "p")
    if np.any(p <= 0):
        raise DomainError("all rates must be positive to evaluate -sum log p")
    return float(-np.log(p).sum())


def check_feasible(p, d, flows, tol=1e-4) -> FeasibilityReport:
    """Check every constraint of the allocation problem within ``tol``.

    The returned report is truthy when feasible and lists each violation otherwise.
    """
    n = len(flows)
    p = check_rate_vector(p, "p", n)
    d = check_rate_vector(d, "d", n)
    sigma, psi, private = _flow_arrays(flows)
    bad = []
    waits = []
    for f, flow in enumerate(flows):
        if not (-tol <= p[f] <= 1 + tol):
            bad.append(f"flow {flow.id}: p={p[f]:.6g} outside [0, 1]")
        if not (-tol <= d[f] <= 1 + tol):
            bad.append(f"flow {flow.id}: d={d[f]:.6g} outside [0, 1]")
        if not private[f]:
            waits.append(math.nan)
            if abs(d[f]) > tol:
                bad.append(f"flow {flow.id}: non-private flow carries dummy rate {d[f]:.6g}")
            continue
        if d[f] <= 0 or p[f] <= 0:
            waits.append(math.inf)
            bad.append(f"flow {flow.id}: private flow needs p > 0 and d > 0 (unstable or unshaped)")
            continue
        if p[f] + d[f] > 1 + tol:
            waits.append(math.nan)
            bad.append(f"flow {flow.id}: duty cycle p + d = {p[f] + d[f]:.6g} exceeds 1")
            continue
        w = _wait(p[f], min(d[f], 1 - p[f]))
        waits.append(w)
        if w > sigma[f] + tol:
            bad.append(f"flow {flow.id}: wait {w:.6g} exceeds deadline {sigma[f]:.6g}")
    usage = float(np.sum((p + d) / psi))
    if usage > 1 + tol:
        bad.append(f"link usage {usage:.6g} exceeds 1")
    return FeasibilityReport(not bad, bad, usage, tuple(waits))


def _step(kind, p, d, lam, flows, alpha, eps_d):
    sigma, psi, private = _flow_arrays(flows)
    p = check_rate_vector(p, "p", len(flows)).copy()
    d = check_rate_vector(d, "d", len(flows)).copy()
    lam = lam.copy()
    alpha = check_positive(alpha, "alpha")
    if kind == "p":
        p_sweep(p, d, lam.lambda1, lam.lambda2, lam.lambda3, lam.lambda4,
                sigma, psi, private, alpha, 1, P_MIN, P_MAX)
        return p, lam
    d_sweep(p, d, lam.lambda1, lam.lambda2, lam.lambda5,
            sigma, psi, private, alpha, 1, eps_d)
    return d, lam


def subgradient_step_p(p, d_fixed, lam: Multipliers, flows, alpha):
    """One projected descent step in ``p`` with dual ascent; returns ``(p_next, lam_next)``.

    The gradient is ``-1/p_f + lambda1_f dw/dp_f + lambda2/psi_f + lambda3_f -
    lambda4_f`` (the delay term only for private flows); multipliers move along
    their constraint residuals and are projected onto ``[0, inf)``.
    """
    return _step("p", p, d_fixed, lam, flows, alpha, None)


def subgradient_step_d(p_fixed, d, lam: Multipliers, flows, alpha, epsilon_d=1e-4):
    """One projected step in ``d``; non-private flows are left at ``d = 0``."""
    return _step("d", p_fixed, d, lam, flows, alpha, epsilon_d)


def minimum_dummy_rate(p, sigma, epsilon_d=1e-4):
    """Smallest ``d >= epsilon_d`` meeting ``w(p, d) <= sigma``.

    ``w`` decreases in ``d`` and vanishes at ``d = 1 - p``, so a solution always
    exists when ``epsilon_d < 1 - p``.
    """
    hi = 1.0 - p
    if epsilon_d >= hi or _wait(p, epsilon_d) <= sigma:
        return min(epsilon_d, hi)
    root = brentq(lambda d: _wait(p, d) - sigma, epsilon_d, hi, xtol=1e-14)
    # step to the feasible side of the root
    while root < hi and _wait(p, root) > sigma:
        root = min(hi, root + 1e-13 + 1e-12 * root)
    return root


def restore_feasibility(p, d, flows, epsilon_d=1e-4):
    """Map any ``(p, d)`` to a feasible allocation.

    Dummy rates of private flows are set to their delay-tight minimum, then, if
    the link is overloaded, all rates are scaled by the largest common factor
    that fits. Raises :class:`InfeasibleProblemError` if no factor works.
    """
    sigma, psi, private = _flow_arrays(flows)
    p = np.clip(np.asarray(p, dtype=float), P_MIN, P_MAX)

    def dummies(scale):
        q = scale * p
        return q, np.array([
            minimum_dummy_rate(q[f], sigma[f], epsilon_d) if private[f] else 0.0
            for f in range(len(flows))
        ])

    def excess(scale):
        q, dd = dummies(scale)
        return float(np.sum((q + dd) / psi)) - 1.0

    if excess(1.0) <= 0:
        return dummies(1.0)
    lo = P_MIN / p.max()
    if excess(lo) > 0:
        raise InfeasibleProblemError(
            "no feasible allocation: dummy traffic needed to meet the deadlines alone exceeds the link")
    scale = brentq(excess, lo, 1.0, xtol=1e-13)
    while excess(scale) > 0:
        scale = max(lo, scale * (1 - 1e-12) - 1e-15)
    return dummies(scale)


def solve_allocation(flows, options: SolverOptions | None = None) -> AllocationResult:
    """Alternating primal-dual subgradient solution of the allocation problem.

    Each round runs ``inner_iters`` steps in ``p`` (``d`` fixed) followed by
    ``inner_iters`` steps in ``d`` (``p`` fixed), handing the last iterate from
    one block to the other. Every ``check_every`` rounds the running iterate is
    made feasible by :func:`restore_feasibility` and becomes the incumbent if it
    lowers ``U``; ``objective_trace`` holds the incumbent objective per round.
    """
    options = options or SolverOptions()
    flows = list(flows)
    sigma, psi, private = _flow_arrays(flows)
    n = len(flows)
    eps_d = options.epsilon_d

    # equal rates, d = p for private flows, link half used
    weight = np.where(private, 2.0, 1.0) / psi
    p = np.full(n, 0.5 / weight.sum())
    d = np.where(private, p, 0.0)
    if not check_feasible(p, d, flows, tol=0.0):
        p, d = restore_feasibility(p, d, flows, eps_d)
    best_p, best_d = p.copy(), d.copy()
    best_u = evaluate_objective(best_p)

    lam = Multipliers.zeros(n)
    trace = []
    checkpoints = [best_u]
    step = options.step_size
    converged = False
    rounds = 0
    for s in range(1, options.outer_iters + 1):
        alpha = step / math.sqrt(s) if options.step_decay == "sqrt" else step
        p_sweep(p, d, lam.lambda1, lam.lambda2, lam.lambda3, lam.lambda4,
                sigma, psi, private, alpha, options.inner_iters, P_MIN, P_MAX)
        d_sweep(p, d, lam.lambda1, lam.lambda2, lam.lambda5,
                sigma, psi, private, alpha, options.inner_iters, eps_d)
        rounds = s
        if s % options.check_every == 0 or s == options.outer_iters:
            cand_p, cand_d = restore_feasibility(p, d, flows, eps_d)
            cand_u = evaluate_objective(cand_p)
            if cand_u < best_u:
                best_p, best_d, best_u = cand_p, cand_d, cand_u
            checkpoints.append(best_u)
            stalled = (len(checkpoints) > options.patience
                       and checkpoints[-options.patience - 1] - best_u < options.tolerance)
            if stalled:
                if options.step_decay == "adaptive" and step * options.anneal_factor >= options.min_step_size:
                    step *= options.anneal_factor
                    checkpoints = [best_u]
                else:
                    converged = True
        trace.append(best_u)
        if converged:
            break

    waits = np.array([_wait(best_p[f], best_d[f]) if private[f] else 0.0 for f in range(n)])
    return AllocationResult(
        p_star=best_p,
        d_star=best_d,
        w=waits,
        multipliers=lam,
        objective_trace=np.array(trace),
        feasible=bool(check_feasible(best_p, best_d, flows)),
        converged=converged,
        n_rounds=rounds,
    )


def _wait_grid(p, d):
    """Vectorised relaxed wait for arrays ``p`` (rows) and ``d`` (columns)."""
    p = p[:, None]
    d = d[None, :]
    c = p + d
    with np.errstate(divide="ignore", invalid="ignore"):
        over = np.maximum((p - d) * (1 - p) / (p * d), 0.0)
        return (1 - c) / (2 * (1 - p)) * (over + 1 / c)


def brute_force_small(flows, grid_resolution=1000, epsilon_d=1e-4) -> BruteForceResult:
    """Exhaustive grid search for one or two flows.

    ``p`` and ``d`` range over multiples of ``1 / grid_resolution``. For each
    ``p`` the smallest grid ``d`` meeting the deadline gives the link share of
    that flow; the two-flow case is then an exact search over pairs of shares.
    """
    flows = list(flows)
    if not 1 <= len(flows) <= 2:
        raise DomainError("brute_force_small handles one or two flows")
    n = check_count(grid_resolution, "grid_resolution", minimum=2)
    sigma, psi, private = _flow_arrays(flows)
    grid = np.arange(1, n) / n
    d_grid = grid[grid >= epsilon_d]

    options = []
    for f in range(len(flows)):
        if private[f]:
            w = _wait_grid(grid, d_grid)
            ok = (w <= sigma[f]) & (grid[:, None] + d_grid[None, :] <= 1.0 + 1e-12)
            has = ok.any(axis=1)
            d_min = np.where(has, d_grid[np.argmax(ok, axis=1)], np.nan)
            p_f, d_f = grid[has], d_min[has]
        else:
            p_f, d_f = grid, np.zeros_like(grid)
        share = (p_f + d_f) / psi[f]
        keep = share <= 1.0 + 1e-12
        options.append((p_f[keep], d_f[keep], share[keep]))

    if len(flows) == 1:
        p1, d1, _ = options[0]
        if p1.size == 0:
            raise InfeasibleProblemError("no feasible grid point")
        k = int(np.argmax(p1))
        return BruteForceResult(np.array([p1[k]]), np.array([d1[k]]), float(-math.log(p1[k])))

    (p1, d1, u1), (p2, d2, u2) = options
    order = np.argsort(u2, kind="stable")
    p2s, d2s, u2s = p2[order], d2[order], u2[order]
    best_idx = np.zeros(len(p2s), dtype=int)
    run = 0
    for i in range(len(p2s)):
        if p2s[i] > p2s[run]:
            run = i
        best_idx[i] = run
    pos = np.searchsorted(u2s, 1.0 - u1 + 1e-12, side="right") - 1
    valid = pos >= 0
    if not valid.any():
        raise InfeasibleProblemError("no feasible grid point")
    pick = best_idx[pos[valid]]
    values = -np.log(p1[valid]) - np.log(p2s[pick])
    k = int(np.argmin(values))
    j = pick[k]
    i = np.flatnonzero(valid)[k]
    return BruteForceResult(np.array([p1[i], p2s[j]]), np.array([d1[i], d2s[j]]), float(values[k]))


_TRUE = {"1", "true", "yes", "y", "private", "p"}
_FALSE = {"0", "false", "no", "n", "public", "np", "nonprivate", "non-private"}


def read_scenario(path):
    """Read flows from a text file: one ``id sigma psi private`` line per flow.

    Fields may be separated by commas or whitespace; ``#`` starts a comment.
    """
    flows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [x for x in re.split(r"[,\s]+", line) if x]
        if len(parts) != 4:
            raise DomainError(f"{path}:{lineno}: expected 'id sigma psi private', got {raw!r}")
        fid, sigma, psi, flag = parts
        flag = flag.lower()
        if flag not in _TRUE | _FALSE:
            raise DomainError(f"{path}:{lineno}: unrecognised private flag {parts[3]!r}")
        try:
            flows.append(FlowSpec(fid, float(sigma), float(psi), flag in _TRUE))
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: {exc}") from exc
    if not flows:
        raise DomainError(f"{path}: no flows defined")
    return flows


def _as_flows(X):
    if len(X) and isinstance(X[0], FlowSpec):
        return list(X)
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DomainError("X must be FlowSpec objects or rows of (sigma, psi[, private])")
    return [
        FlowSpec(str(i + 1), row[0], row[1], bool(row[2]) if arr.shape[1] == 3 else True)
        for i, row in enumerate(arr)
    ]


class ProportionalFairAllocator(BaseEstimator):
    """Estimator wrapper around :func:`solve_allocation`.

    ``fit`` takes a list of :class:`FlowSpec` (or rows ``sigma, psi[, private]``)
    and stores ``p_``, ``d_``, ``w_``, ``objective_``, ``result_`` and the
    ``converged_`` / ``feasible_`` flags.

    >>> alloc = ProportionalFairAllocator(outer_iters=2000).fit([[10, 1, 1], [10, 1, 1]])
    >>> bool(alloc.feasible_)
    True
    """

    def __init__(self, step_size=1e-3, inner_iters=10, outer_iters=40000, epsilon_d=1e-4,
                 tolerance=1e-6, step_decay="adaptive", check_every=100, patience=20,
                 anneal_factor=0.3, min_step_size=1e-5):
        self.step_size = step_size
        self.inner_iters = inner_iters
        self.outer_iters = outer_iters
        self.epsilon_d = epsilon_d
        self.tolerance = tolerance
        self.step_decay = step_decay
        self.check_every = check_every
        self.patience = patience
        self.anneal_factor = anneal_factor
        self.min_step_size = min_step_size

    def _options(self):
        return SolverOptions(**self.get_params())

    def fit(self, X, y=None):
        self.flows_ = _as_flows(X)
        result = solve_allocation(self.flows_, self._options())
        self.result_ = result
        self.p_ = result.p_star
        self.d_ = result.d_star
        self.w_ = result.w
        self.objective_ = result.objective
        self.converged_ = result.converged
        self.feasible_ = result.feasible
        return self

    def score(self, X=None, y=None):
        """Proportional-fair utility ``sum log p`` of the fitted allocation."""
        return -self.objective_
