"""Compiled inner loops: slot simulator, primal-dual sweeps and DTW."""
from __future__ import annotations

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# FCTL slot simulator
# ---------------------------------------------------------------------------

@njit(cache=True)
def fctl_chunk(arrivals, t0, g, tau, w0, ring, head, qlen, n_popped,
               departures, cyc_dummies, cyc_eg, cyc_wsum, cyc_wcnt,
               y, totals):
    """Advance the shaper over ``arrivals`` starting at global slot ``t0``.

    ``ring`` holds arrival slots of buffered packets (capacity must exceed the
    largest queue reachable in this chunk). ``departures`` is either empty or
    indexed by arrival sequence number. Per-cycle arrays are indexed by global
    cycle. ``totals`` accumulates ``[served, dummies, on_slots, queue_area,
    measured_slots]`` over slots at or after ``w0``.
    Returns the new ``(head, qlen, n_popped)``.
    """
    cap = ring.shape[0]
    record_dep = departures.shape[0] > 0
    n = arrivals.shape[0]
    for i in range(n):
        t = t0 + i
        k = t // tau
        phase = t - k * tau
        x = arrivals[i]
        measured = t >= w0
        if phase < g:
            y[i] = 1
            if qlen > 0 or x:
                if x:
                    ring[(head + qlen) % cap] = t
                    qlen += 1
                a = ring[head]
                head = (head + 1) % cap
                qlen -= 1
                if record_dep:
                    departures[n_popped] = t
                n_popped += 1
                if a >= w0:
                    cyc_wsum[k] += t - a
                    cyc_wcnt[k] += 1
                if measured:
                    totals[0] += 1
            else:
                if measured:
                    totals[1] += 1
                cyc_dummies[k] += 1
            if measured:
                totals[2] += 1
        else:
            y[i] = 0
            if x:
                ring[(head + qlen) % cap] = t
                qlen += 1
        if measured:
            totals[3] += qlen
            totals[4] += 1
        if phase == g - 1:
            cyc_eg[k] = qlen
    return head, qlen, n_popped


# ---------------------------------------------------------------------------
# Waiting time in (p, d) coordinates and the alternating primal-dual sweeps
# ---------------------------------------------------------------------------

@njit(cache=True)
def wait_and_grad(p, d):
    """Return ``(w, dw/dp, dw/dd)`` for the relaxed wait with ``c = p + d``.

    For ``p >= d`` the unclamped branch is used, so at the kink ``p = d`` the
    gradient is the one-sided derivative of the queue-carrying branch.
    """
    c = p + d
    q = 1.0 - p
    base = (1.0 / c - 1.0) / (2.0 * q)
    base_p = ((1.0 / c - 1.0) - q / (c * c)) / (2.0 * q * q)
    base_d = -1.0 / (2.0 * q * c * c)
    if p >= d:
        over = q / (2.0 * d) - (1.0 - d) / (2.0 * p)
        over_p = -1.0 / (2.0 * d) + (1.0 - d) / (2.0 * p * p)
        over_d = -q / (2.0 * d * d) + 1.0 / (2.0 * p)
        return base + over, base_p + over_p, base_d + over_d
    return base, base_p, base_d


@njit(cache=True)
def p_sweep(p, d, lam1, lam2, lam3, lam4, sigma, psi, private, alpha, n_iter,
            p_lo, p_hi):
    """``n_iter`` projected primal descent / dual ascent steps on the p-Lagrangian."""
    nf = p.shape[0]
    for _ in range(n_iter):
        usage = 0.0
        for f in range(nf):
            usage += (p[f] + d[f]) / psi[f]
        for f in range(nf):
            grad = -1.0 / p[f] + lam2[0] / psi[f] + lam3[f] - lam4[f]
            if private[f]:
                w, w_p, _ = wait_and_grad(p[f], d[f])
                grad += lam1[f] * w_p
                lam1[f] = max(lam1[f] + alpha * (w - sigma[f]), 0.0)
            lam3[f] = max(lam3[f] + alpha * (p[f] - 1.0), 0.0)
            lam4[f] = max(lam4[f] - alpha * p[f], 0.0)
            p[f] = min(max(p[f] - alpha * grad, p_lo), p_hi)
        lam2[0] = max(lam2[0] + alpha * (usage - 1.0), 0.0)


@njit(cache=True)
def d_sweep(p, d, lam1, lam2, lam5, sigma, psi, private, alpha, n_iter, eps_d):
    """``n_iter`` projected steps on the d-Lagrangian; non-private flows are skipped."""
    nf = p.shape[0]
    for _ in range(n_iter):
        usage = 0.0
        for f in range(nf):
            usage += (p[f] + d[f]) / psi[f]
        for f in range(nf):
            if not private[f]:
                continue
            w, _, w_d = wait_and_grad(p[f], d[f])
            grad = lam1[f] * w_d + lam2[0] / psi[f] - lam5[f]
            lam1[f] = max(lam1[f] + alpha * (w - sigma[f]), 0.0)
            lam5[f] = max(lam5[f] - alpha * d[f], 0.0)
            upper = max(1.0 - p[f], eps_d)
            d[f] = min(max(d[f] - alpha * grad, eps_d), upper)
        lam2[0] = max(lam2[0] + alpha * (usage - 1.0), 0.0)


# ---------------------------------------------------------------------------
# Dynamic time warping on integer count series
# ---------------------------------------------------------------------------

@njit(cache=True)
def dtw_cost(a, b):
    """Minimal |a_i - b_j| warping cost and the length of the shortest optimal path."""
    n = a.shape[0]
    m = b.shape[0]
    big = np.int64(1) << 60
    cost = np.full((n + 1, m + 1), big, dtype=np.int64)
    length = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[0, 0] = 0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = cost[i - 1, j - 1]
            best_len = length[i - 1, j - 1]
            c = cost[i - 1, j]
            if c < best or (c == best and length[i - 1, j] < best_len):
                best = c
                best_len = length[i - 1, j]
            c = cost[i, j - 1]
            if c < best or (c == best and length[i, j - 1] < best_len):
                best = c
                best_len = length[i, j - 1]
            cost[i, j] = best + abs(a[i - 1] - b[j - 1])
            length[i, j] = best_len + 1
    return cost[n, m], length[n, m]
