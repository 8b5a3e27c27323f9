"""Numpy implementation of the batched log-likelihood kernel.

Mirrors ``_kernels.pyx`` and is used when the compiled extension is missing
or ``DEFCURE_PURE_PYTHON`` is set.
"""
import math

import numpy as np

from .distributions import (Family, gompertz_log_survival, ig_log_survival,
                            log_interval_probability)

LOG_FLOOR = math.log(1e-300)


def _contributions(family_code, theta, X, left, right, cause, num_causes):
    q = X.shape[1]
    blocks = theta.reshape(num_causes, 2, q)
    shape = X @ blocks[:, 0, :].T
    with np.errstate(over="ignore"):
        scale = np.exp(X @ blocks[:, 1, :].T)
    log_surv = gompertz_log_survival if family_code == 0 else ig_log_survival

    out = np.empty(left.shape[0])
    censored = cause == 0
    if censored.any():
        a = shape[censored]
        b = scale[censored]
        out[censored] = log_surv(a, b, left[censored, None]).sum(axis=1)
    event = ~censored
    if event.any():
        rows = np.flatnonzero(event)
        col = cause[event] - 1
        a = shape[rows, col]
        b = scale[rows, col]
        family = Family.GOMPERTZ if family_code == 0 else Family.INVERSE_GAUSSIAN
        out[event] = log_interval_probability(family, a, b, left[event], right[event])
    return out


def loglik_batch(family_code, thetas, X, left, right, cause, num_causes):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    values = np.empty(thetas.shape[0])
    degenerate = np.zeros(thetas.shape[0], dtype=np.int64)
    for r, theta in enumerate(thetas):
        terms = _contributions(family_code, theta, X, left, right, cause, num_causes)
        bad = ~(terms >= LOG_FLOOR)
        degenerate[r] = int(bad.sum())
        terms[bad] = LOG_FLOOR
        values[r] = math.fsum(terms)
    return values, degenerate


def obs_contributions(family_code, theta, X, left, right, cause, num_causes):
    """Per-observation log-likelihood terms after flooring."""
    terms = _contributions(family_code, np.asarray(theta, float), X, left, right, cause,
                           num_causes)
    return np.where(terms >= LOG_FLOOR, terms, LOG_FLOOR)
