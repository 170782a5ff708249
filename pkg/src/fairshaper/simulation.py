"""Slot-exact simulator of the on-off shaper with Bernoulli arrivals.

Per slot ``t`` the arrival (if any) is handled first, then service:

* on-slot (``t mod tau < g``): the head of the buffer is transmitted, which is
  the new arrival itself when the buffer was empty (wait 0); with nothing to
  send a dummy goes out instead;
* off-slot: an arrival joins the buffer and nothing is transmitted.

The wait of a packet is its departure slot minus its arrival slot.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fctl_chunk
from ._validation import check_count, check_cycle
from .exceptions import DomainError
from .model import ShaperParams, stability_check

__all__ = ["SimConfig", "QueueStats", "FctlRun", "run_fctl", "simulate", "output_pattern"]

_CHUNK_SLOTS = 1 << 20
_N_BATCHES = 30


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; ``warmup_cycles`` defaults to 10% of ``n_cycles``."""

    params: ShaperParams
    n_cycles: int
    warmup_cycles: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.params.relaxed:
            raise DomainError("the simulator needs an integer on-time g")
        check_count(self.n_cycles, "n_cycles")
        if self.warmup_cycles is None:
            object.__setattr__(self, "warmup_cycles", self.n_cycles // 10)
        check_count(self.warmup_cycles, "warmup_cycles", minimum=0)
        if self.warmup_cycles >= self.n_cycles:
            raise DomainError("warmup_cycles must be smaller than n_cycles")


@dataclass(frozen=True)
class QueueStats:
    mean_wait: float
    mean_end_of_green_queue: float
    dummy_fraction: float
    served: int
    dummies: int
    on_slots: int
    measured_slots: int
    mean_queue: float
    output_pattern_hash: str
    stable: bool
    wait_se: float
    eg_queue_se: float
    dummy_fraction_se: float


@dataclass(frozen=True)
class FctlRun:
    """Departure slots (``-1`` if still buffered), waits and the transmission indicator."""

    departures: np.ndarray
    waits: np.ndarray
    y: np.ndarray


def _batch_se(num, den=None, n_batches=_N_BATCHES):
    """Standard error of a mean (or ratio of sums) from batch means over cycles."""
    n_batches = min(n_batches, num.shape[0])
    if n_batches < 2:
        return math.nan
    num_b = np.array([s.sum() for s in np.array_split(num, n_batches)], dtype=float)
    if den is None:
        sizes = np.array([s.shape[0] for s in np.array_split(num, n_batches)], dtype=float)
        means = num_b / sizes
    else:
        den_b = np.array([s.sum() for s in np.array_split(den, n_batches)], dtype=float)
        if np.any(den_b == 0):
            return math.nan
        means = num_b / den_b
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def run_fctl(arrivals, g, tau):
    """Run the shaper on an explicit 0/1 arrival sequence (one entry per slot)."""
    g, tau = check_cycle(g, tau)
    x = np.asarray(arrivals)
    if x.ndim != 1 or not np.isin(x, (0, 1)).all():
        raise DomainError("arrivals must be a one-dimensional 0/1 sequence")
    x = x.astype(np.uint8)
    n = x.shape[0]
    n_arr = int(x.sum())
    n_cycles = -(-n // tau) if n else 0
    departures = np.full(max(n_arr, 1), -1, dtype=np.int64)
    y = np.empty(n, dtype=np.uint8)
    ring = np.empty(n_arr + 1, dtype=np.int64)
    cyc_i = np.zeros(n_cycles, dtype=np.int64)
    cyc_f = np.zeros(n_cycles, dtype=np.float64)
    fctl_chunk(x, 0, g, tau, 0, ring, 0, 0, 0, departures,
               cyc_i, cyc_i.copy(), cyc_f, cyc_i.copy(), y, np.zeros(5))
    departures = departures[:n_arr]
    arrival_slots = np.flatnonzero(x)
    done = departures >= 0
    return FctlRun(departures, departures[done] - arrival_slots[done], y)


def _run(config, keep_y=False):
    prm = config.params
    p, g, tau = prm.p, int(prm.g), prm.tau
    n_cycles, warm = config.n_cycles, config.warmup_cycles
    total = n_cycles * tau
    w0 = warm * tau
    rng = np.random.default_rng(config.seed)
    chunk_cycles = max(1, _CHUNK_SLOTS // tau)

    cyc_dummies = np.zeros(n_cycles, dtype=np.int64)
    cyc_eg = np.zeros(n_cycles, dtype=np.int64)
    cyc_wsum = np.zeros(n_cycles, dtype=np.float64)
    cyc_wcnt = np.zeros(n_cycles, dtype=np.int64)
    totals = np.zeros(5)
    no_dep = np.empty(0, dtype=np.int64)
    ring = np.empty(chunk_cycles * tau + 1, dtype=np.int64)
    head = qlen = n_popped = 0
    digest = hashlib.sha256()
    ys = []

    for start in range(0, n_cycles, chunk_cycles):
        n_slots = (min(start + chunk_cycles, n_cycles) - start) * tau
        x = (rng.random(n_slots) < p).astype(np.uint8)
        if qlen + n_slots >= ring.shape[0]:
            order = (head + np.arange(qlen)) % ring.shape[0]
            grown = np.empty(2 * (qlen + n_slots) + 1, dtype=np.int64)
            grown[:qlen] = ring[order]
            ring, head = grown, 0
        y = np.empty(n_slots, dtype=np.uint8)
        head, qlen, n_popped = fctl_chunk(
            x, start * tau, g, tau, w0, ring, head, qlen, n_popped, no_dep,
            cyc_dummies, cyc_eg, cyc_wsum, cyc_wcnt, y, totals)
        digest.update(y.tobytes())
        if keep_y:
            ys.append(y)

    served, dummies, on_slots, area, measured = (int(v) for v in totals)
    m = slice(warm, n_cycles)
    n_waits = int(cyc_wcnt[m].sum())
    stats = QueueStats(
        mean_wait=float(cyc_wsum[m].sum() / n_waits) if n_waits else math.nan,
        mean_end_of_green_queue=float(cyc_eg[m].mean()),
        dummy_fraction=dummies / measured,
        served=served,
        dummies=dummies,
        on_slots=on_slots,
        measured_slots=measured,
        mean_queue=area / measured,
        output_pattern_hash=digest.hexdigest(),
        stable=stability_check(p, g, tau),
        wait_se=_batch_se(cyc_wsum[m], cyc_wcnt[m]) if n_waits else math.nan,
        eg_queue_se=_batch_se(cyc_eg[m]),
        dummy_fraction_se=_batch_se(cyc_dummies[m]) / tau,
    )
    return stats, (np.concatenate(ys) if keep_y else None)


def simulate(config: SimConfig) -> QueueStats:
    """Simulate ``config.n_cycles`` cycles; statistics exclude the warmup cycles.

    Unstable parameters are allowed and reported through ``QueueStats.stable``.
    """
    return _run(config)[0]


def output_pattern(config: SimConfig, horizon: int) -> np.ndarray:
    """Transmission indicator ``Y(t)`` for ``t < horizon`` as produced by the simulator."""
    horizon = check_count(horizon, "horizon")
    tau = config.params.tau
    n_cycles = -(-horizon // tau)
    run_cfg = SimConfig(config.params, n_cycles, 0, config.seed)
    return _run(run_cfg, keep_y=True)[1][:horizon]
