"""Turnbull's nonparametric MLE of a survival curve under interval censoring.

Observations are half-open intervals ``(L, R]`` with ``R = inf`` for right
censoring.  Mass is placed on the innermost intervals (a left endpoint
immediately followed by a right endpoint once all endpoints are sorted) and
found by the self-consistency (EM) iteration

    mu_l <- (1/n) sum_i alpha_il mu_l / sum_m alpha_im mu_m

where ``alpha_il`` says whether innermost interval ``l`` lies inside
observation ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TurnbullEstimate:
    support_intervals: tuple  # ((q, p), ...) ordered, disjoint; p may be inf
    masses: np.ndarray
    iterations: int
    final_change: float
    converged: bool
    loglik_history: tuple = field(default=(), repr=False)

    @property
    def finite_mass(self) -> float:
        return float(sum(m for (q, p), m in zip(self.support_intervals, self.masses)
                         if math.isfinite(p)))

    @property
    def plateau(self) -> float:
        """Limit of the survival curve: mass never assigned to a finite interval."""
        return max(0.0, 1.0 - self.finite_mass)

    def ambiguous_at(self, t: float) -> bool:
        """True when ``t`` falls strictly inside a bounded support interval with positive mass."""
        return any(q < t < p and m > 0 and math.isfinite(p)
                   for (q, p), m in zip(self.support_intervals, self.masses))


def innermost_intervals(left, right):
    """Turnbull innermost intervals for observations ``(left_i, right_i]``."""
    # At tied values a right endpoint sorts first: (a, v] and (v, b] do not overlap.
    events = [(float(v), 1, 0) for v in left] + [(float(v), 0, 1) for v in right]
    events.sort(key=lambda e: (e[0], e[1]))
    out = []
    for (v0, is_left0, _), (v1, is_left1, _) in zip(events, events[1:]):
        if is_left0 and not is_left1 and v1 > v0:
            out.append((v0, v1))
    return out


def _validate(intervals):
    if len(intervals) == 0:
        raise ConfigurationError("Turnbull estimator needs at least one observation")
    left = np.array([float(l) for l, _ in intervals])
    right = np.array([float(r) for _, r in intervals])
    if np.any(np.isnan(left)) or np.any(np.isnan(right)) or np.any(~(left < right)):
        raise ConfigurationError("every interval needs left < right")
    return left, right


def turnbull_fit(intervals, tol=1e-8, max_iter=10000, *, track_loglik=False) -> TurnbullEstimate:
    """Self-consistency NPMLE over the innermost intervals.

    ``intervals`` is a sequence of ``(L, R)`` pairs meaning ``(L, R]``.
    Starts from uniform masses and stops when no mass moves by ``tol`` or more.
    Non-convergence within ``max_iter`` is reported through ``converged``.
    """
    left, right = _validate(intervals)
    support = innermost_intervals(left, right)
    q = np.array([s[0] for s in support])
    p = np.array([s[1] for s in support])
    # alpha[i, l] = 1 if (q_l, p_l] is inside (L_i, R_i]
    alpha = (left[:, None] <= q[None, :]) & (p[None, :] <= right[:, None])
    alpha = alpha.astype(float)
    n, m = alpha.shape

    mu = np.full(m, 1.0 / m)
    history = []
    change = math.inf
    it = 0
    converged = False
    while it < max_iter:
        denom = alpha @ mu
        if track_loglik:
            history.append(float(np.sum(np.log(denom))))
        new_mu = mu * (alpha / denom[:, None]).sum(axis=0) / n
        change = float(np.max(np.abs(new_mu - mu)))
        mu = new_mu
        it += 1
        if change < tol:
            converged = True
            break
    if track_loglik:
        history.append(float(np.sum(np.log(alpha @ mu))))
    return TurnbullEstimate(tuple(support), mu, it, change, converged, tuple(history))


def self_consistency_residual(est: TurnbullEstimate, intervals) -> float:
    """Largest change one more EM update would make to ``est.masses``."""
    left, right = _validate(intervals)
    q = np.array([s[0] for s in est.support_intervals])
    p = np.array([s[1] for s in est.support_intervals])
    alpha = ((left[:, None] <= q[None, :]) & (p[None, :] <= right[:, None])).astype(float)
    mu = est.masses
    updated = mu * (alpha / (alpha @ mu)[:, None]).sum(axis=0) / alpha.shape[0]
    return float(np.max(np.abs(updated - mu)))


def survival_at(est: TurnbullEstimate, t: float) -> float:
    """``1 - (mass of support intervals whose right end is <= t)``.

    Inside a support interval the NPMLE is not unique; the value reported is
    the one at the interval's right end (see :meth:`TurnbullEstimate.ambiguous_at`).
    Mass on an unbounded interval ``(q, inf)`` is never removed: it is the plateau.
    """
    removed = 0.0
    for (q, p), m in zip(est.support_intervals, est.masses):
        if p <= t:
            removed += m
        elif q < t < p and math.isfinite(p):
            removed += m
    return min(1.0, max(0.0, 1.0 - removed))


def survival_curve(est: TurnbullEstimate, times) -> np.ndarray:
    return np.array([survival_at(est, float(t)) for t in times])
