"""Interval-censored competing-risks log-likelihood.

An event from cause ``j`` in ``(U, V]`` contributes ``log(S_j(U) - S_j(V))``;
a right-censored subject contributes ``sum_j log S_j(U)``.  Each per-subject
contribution is floored at ``log(1e-300)`` and the number of floored terms is
reported alongside the total.

The batched kernel comes from the compiled ``_kernels`` extension when it is
importable and from ``_kernels_py`` otherwise.  Setting the environment
variable ``DEFCURE_PURE_PYTHON=1`` forces the numpy path.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .data import CompetingRisksDataset, IntervalObservation
from .distributions import (Family, LinkedParams, _gompertz_log_survival_scalar,
                            _ig_log_survival_scalar, link_eval, log_interval_probability)
from .errors import ConfigurationError

LOG_FLOOR = math.log(1e-300)

if os.environ.get("DEFCURE_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_kernel(backend=None):
    """Return the ``loglik_batch`` callable for ``backend`` (default: active one)."""
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise ConfigurationError("compiled kernel is not available")
        return _compiled.loglik_batch
    if backend == "python":
        return _kernels_py.loglik_batch
    raise ConfigurationError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class LikelihoodValue:
    loglik: float
    num_degenerate_terms: int = 0

    def __post_init__(self):
        if math.isnan(self.loglik):
            raise ValueError("log-likelihood is NaN")


def _scalar_log_survival(family: Family, a: float, b: float, t: float) -> float:
    if family is Family.GOMPERTZ:
        return _gompertz_log_survival_scalar(a, b, t)
    return _ig_log_survival_scalar(a, b, t)


def _raw_obs_log_likelihood(family, lp: LinkedParams, obs: IntervalObservation) -> float:
    family = Family.parse(family)
    if obs.cause == 0:
        total = 0.0
        for j in range(1, lp.num_causes + 1):
            a, b = link_eval(lp, j, obs.covariates)
            total += _scalar_log_survival(family, a, b, obs.left)
        return total
    a, b = link_eval(lp, obs.cause, obs.covariates)
    return float(log_interval_probability(family, a, b, obs.left, obs.right))


def obs_log_likelihood(family, lp: LinkedParams, obs: IntervalObservation) -> float:
    """Log-likelihood contribution of a single subject (floored)."""
    value = _raw_obs_log_likelihood(family, lp, obs)
    if math.isnan(value) or value < LOG_FLOOR:
        return LOG_FLOOR
    return value


def _check_dims(lp: LinkedParams, ds: CompetingRisksDataset):
    if lp.num_causes != ds.num_causes or lp.num_covariates != ds.num_covariates:
        raise ConfigurationError(
            f"parameters have {lp.num_causes} causes / {lp.num_covariates} covariates, "
            f"dataset has {ds.num_causes} / {ds.num_covariates}")


class LogLikelihood:
    """Log-likelihood of one dataset as a function of the packed parameter vector.

    Holds the contiguous column arrays so repeated evaluations (optimiser steps,
    finite-difference stencils) skip the per-call conversion.  ``evaluations``
    counts individual parameter vectors evaluated.
    """

    def __init__(self, family, ds: CompetingRisksDataset, backend=None):
        self.family = Family.parse(family)
        self.dataset = ds
        self.num_causes = ds.num_causes
        self.size = 2 * ds.num_causes * (ds.num_covariates + 1)
        self._kernel = get_kernel(backend)
        self._args = (
            np.ascontiguousarray(ds.design),
            np.ascontiguousarray(ds.left),
            np.ascontiguousarray(ds.right),
            np.ascontiguousarray(ds.cause, dtype=np.int64),
        )
        self.evaluations = 0

    def batch(self, thetas):
        """Evaluate many parameter vectors; returns ``(values, degenerate_counts)``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.size:
            raise ConfigurationError(
                f"expected parameter vectors of length {self.size}, got {thetas.shape[1]}")
        self.evaluations += thetas.shape[0]
        return self._kernel(self.family.code, thetas, *self._args, self.num_causes)

    def __call__(self, theta) -> float:
        values, _ = self.batch(theta)
        return float(values[0])

    def value(self, theta) -> LikelihoodValue:
        values, degenerate = self.batch(theta)
        return LikelihoodValue(float(values[0]), int(degenerate[0]))


def dataset_log_likelihood(family, lp: LinkedParams, ds: CompetingRisksDataset,
                           backend=None) -> LikelihoodValue:
    _check_dims(lp, ds)
    if Family.parse(family) is not lp.family:
        raise ConfigurationError(f"family {family!r} does not match parameters ({lp.family.value})")
    return LogLikelihood(family, ds, backend).value(lp.to_vector())
