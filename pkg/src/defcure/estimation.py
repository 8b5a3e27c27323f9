"""Maximum-likelihood fitting, Wald inference, cure fractions and model selection."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize

from .data import CompetingRisksDataset, validate_dataset
from .distributions import Family, LinkedParams, cure, link_eval
from .errors import (BadStartError, ConfigurationError, NonConvergenceError,
                     NotDefectiveError, StencilError)
from .likelihood import LogLikelihood

log = logging.getLogger(__name__)

# Coefficients beyond this magnitude mean the fit ran off to a boundary
# (e.g. b -> 0 when nothing fails); such fits are never reported as converged.
BOUNDARY_BOUND = 30.0
# Eigenvalues of the observed information below this fraction of the largest
# are pseudo-inverted.
EIGEN_RTOL = 1e-10
# A cause that fails with probability below this for every subject is treated
# as having run off to the cure-fraction-one boundary.
MIN_FAILURE_PROB = 1e-6


@dataclass
class FitConfig:
    family: Family
    initial_params: LinkedParams
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    hessian_step: float = 1e-4
    confidence_levels: Sequence[float] = (0.05, 0.10)
    multistart_count: int = 5
    multistart_scale: float = 0.25
    seed: int = 0
    threads: int = 1
    backend: Optional[str] = None

    def __post_init__(self):
        self.family = Family.parse(self.family)
        if self.initial_params.family is not self.family:
            raise ConfigurationError("initial_params family differs from config family")
        if self.gradient_tolerance <= 0 or self.hessian_step <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.multistart_count < 1:
            raise ConfigurationError("multistart_count must be >= 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        for level in self.confidence_levels:
            if not 0 < level < 1:
                raise ConfigurationError(f"confidence level alpha={level} outside (0, 1)")
        self.confidence_levels = tuple(float(a) for a in self.confidence_levels)


class InformationCriteria(NamedTuple):
    aic: float
    bic: float
    caic: float


@dataclass
class FitResult:
    mle: LinkedParams
    loglik: float
    covariance: np.ndarray
    std_errors: np.ndarray
    confidence_intervals: dict
    converged: bool
    num_evaluations: int
    degenerate_term_count: int
    n: int
    gradient: np.ndarray
    hessian_flagged: bool = False
    iterations: int = 0
    diagnostics: list = field(default_factory=list)
    start_logliks: list = field(default_factory=list)

    @property
    def k_params(self) -> int:
        return self.mle.size

    @property
    def parameter_names(self) -> list[str]:
        return self.mle.parameter_names()

    def information_criteria(self) -> InformationCriteria:
        return information_criteria(self.loglik, self.k_params, self.n)

    def cure_fractions(self, x):
        return cure_fractions(self.mle.family, self.mle, x)


# -- numerical derivatives ---------------------------------------------------

def _steps(at, step):
    return step * np.maximum(np.abs(at), 1.0)


def numerical_gradient(f, at, step=1e-6, *, vectorized=False):
    """Central-difference gradient; ``f`` maps an ``(m, d)`` batch if vectorized."""
    at = np.asarray(at, dtype=float)
    d = at.size
    h = _steps(at, step)
    points = np.repeat(at[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    points[2 * idx, idx] += h
    points[2 * idx + 1, idx] -= h
    values = _evaluate(f, points, vectorized)
    return (values[0::2] - values[1::2]) / (2 * h)


def _evaluate(f, points, vectorized):
    if vectorized:
        return np.asarray(f(points), dtype=float)
    return np.array([f(p) for p in points], dtype=float)


def numerical_hessian(f, at, step=1e-4, *, vectorized=False):
    """Central second-difference Hessian of ``f`` at ``at``, symmetrised.

    Coordinate ``i`` uses the step ``step * max(|at_i|, 1)``.
    """
    at = np.asarray(at, dtype=float)
    d = at.size
    h = _steps(at, step)
    points = [at.copy()]
    for i in range(d):
        for sign in (1.0, -1.0):
            p = at.copy()
            p[i] += sign * h[i]
            points.append(p)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            p = at.copy()
            p[i] += si * h[i]
            p[j] += sj * h[j]
            points.append(p)
    values = _evaluate(f, np.array(points), vectorized)

    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        if first == 0:
            coords = None
        elif first <= 2 * d:
            coords = ((first - 1) // 2,) * 2
        else:
            coords = pairs[(first - 1 - 2 * d) // 4]
        raise StencilError(f"non-finite function value in stencil for coordinates {coords}",
                           coordinates=coords)

    f0 = values[0]
    H = np.empty((d, d))
    for i in range(d):
        H[i, i] = (values[1 + 2 * i] - 2.0 * f0 + values[2 + 2 * i]) / h[i] ** 2
    base = 1 + 2 * d
    for n, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = values[base + 4 * n: base + 4 * n + 4]
        H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


def covariance_from_hessian(H):
    """Invert the observed information ``-H`` by symmetric eigendecomposition.

    Returns ``(covariance, flagged)``; ``flagged`` is true when some eigenvalue
    was too small to invert or the information is not positive definite.
    """
    info = -0.5 * (H + H.T)
    eigval, eigvec = np.linalg.eigh(info)
    scale = np.max(np.abs(eigval)) if eigval.size else 0.0
    keep = np.abs(eigval) > EIGEN_RTOL * scale
    inv = np.zeros_like(eigval)
    inv[keep] = 1.0 / eigval[keep]
    cov = (eigvec * inv) @ eigvec.T
    flagged = bool((~keep).any() or (eigval[keep] < 0).any())
    return 0.5 * (cov + cov.T), flagged


# -- inference helpers -----------------------------------------------------------

def normal_quantile(alpha: float) -> float:
    """Upper ``alpha/2`` point of the standard normal."""
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def wald_intervals(mle, cov, alpha):
    """``mle -/+ z_{alpha/2} * sqrt(diag(cov))``; negative variances give ``None``."""
    mle = np.atleast_1d(np.asarray(mle, dtype=float))
    cov = np.asarray(cov, dtype=float)
    var = np.diag(cov) if cov.ndim == 2 else cov.ravel()
    z = normal_quantile(alpha)
    out = []
    for m, v in zip(mle, var):
        if not v >= 0:
            out.append(None)
            continue
        half = z * math.sqrt(v)
        out.append((m - half, m + half))
    return out


def cure_fractions(family, lp: LinkedParams, x):
    """Overall cure fraction at covariates ``x`` and the per-cause factors."""
    family = Family.parse(family)
    per_cause = []
    for j in range(1, lp.num_causes + 1):
        a, b = link_eval(lp, j, x)
        if not a < 0:
            raise NotDefectiveError(
                f"cause {j}: shape a_{j}(x) = {a:.6g} is not negative at x = {list(x)}",
                cause=j, shape=a)
        per_cause.append(cure(family, a, b))
    return math.prod(per_cause), tuple(per_cause)


def information_criteria(loglik: float, k_params: int, n: int) -> InformationCriteria:
    if n < 1 or k_params < 1:
        raise ConfigurationError("information criteria need n >= 1 and k_params >= 1")
    dev = -2.0 * loglik
    return InformationCriteria(
        aic=dev + 2.0 * k_params,
        bic=dev + k_params * math.log(n),
        caic=dev + k_params * (math.log(n) + 1.0),
    )


# -- optimisation --------------------------------------------------------------

@dataclass
class _Run:
    theta: np.ndarray
    loglik: float
    gradient: np.ndarray
    hessian: Optional[np.ndarray]
    converged: bool
    iterations: int
    evaluations: int
    start_loglik: float
    message: str = ""


def _single_run(family, ds, theta0, cfg: FitConfig) -> _Run:
    ll = LogLikelihood(family, ds, cfg.backend)
    n = ds.n

    def mean_ll_batch(thetas):
        return ll.batch(thetas)[0] / n

    def objective(theta):
        return -float(mean_ll_batch(theta)[0])

    def gradient(theta):
        return -numerical_gradient(mean_ll_batch, theta, vectorized=True)

    start_value = float(mean_ll_batch(theta0)[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            objective, theta0, jac=gradient, method="L-BFGS-B",
            options={"maxiter": cfg.max_iterations, "gtol": 0.1 * cfg.gradient_tolerance,
                     "ftol": 1e-15, "maxcor": 20},
        )
    theta = np.array(res.x, dtype=float)
    value = -res.fun
    iterations = int(res.nit)

    # Newton polishing with the finite-difference Hessian.
    hessian = None
    grad = -gradient(theta)
    for _ in range(20):
        hessian = numerical_hessian(mean_ll_batch, theta, cfg.hessian_step, vectorized=True)
        if np.max(np.abs(grad)) <= cfg.gradient_tolerance:
            break
        try:
            eigval = np.linalg.eigvalsh(-hessian)
        except np.linalg.LinAlgError:
            break
        if eigval.min() <= 0:
            break
        direction = np.linalg.solve(-hessian, grad)
        step = 1.0
        improved = False
        while step > 1e-4:
            candidate = theta + step * direction
            cand_value = float(mean_ll_batch(candidate)[0])
            if np.isfinite(cand_value) and cand_value >= value - 1e-15:
                theta, value, improved = candidate, cand_value, True
                break
            step *= 0.5
        if not improved:
            break
        iterations += 1
        grad = -gradient(theta)
    else:
        hessian = numerical_hessian(mean_ll_batch, theta, cfg.hessian_step, vectorized=True)

    grad_ok = bool(np.max(np.abs(grad)) <= cfg.gradient_tolerance)
    at_boundary = bool(np.max(np.abs(theta)) > BOUNDARY_BOUND)
    vanished = _vanished_causes(family, theta, ds)
    message = str(res.message)
    if at_boundary:
        message = f"coefficient magnitude exceeds {BOUNDARY_BOUND}: estimate at a boundary"
    elif vanished:
        at_boundary = True
        message = (f"cause(s) {vanished} have failure probability below {MIN_FAILURE_PROB:g} "
                   "at every observed covariate profile: estimate at a boundary")
    elif not grad_ok:
        message = f"gradient norm {np.max(np.abs(grad)):.3g} above tolerance ({res.message})"
    return _Run(theta=theta, loglik=value * n, gradient=grad * n, hessian=hessian,
                converged=grad_ok and not at_boundary, iterations=iterations,
                evaluations=ll.evaluations, start_loglik=start_value * n, message=message)


def _vanished_causes(family, theta, ds) -> list[int]:
    """Causes whose fitted probability of ever failing is negligible for every subject."""
    lp = LinkedParams.from_vector(family, theta, ds.num_causes)
    X = ds.design
    out = []
    with np.errstate(all="ignore"):
        a = X @ lp.gammas.T
        b = np.exp(X @ lp.betas.T)
        if family is Family.GOMPERTZ:
            fail = np.where(a < 0, -np.expm1(b / a), 1.0)
        else:
            fail = np.where(a < 0, np.exp(2.0 * a / b), 1.0)
    for j in range(ds.num_causes):
        col = fail[:, j]
        if np.all(np.isfinite(col)) and np.max(col) < MIN_FAILURE_PROB:
            out.append(j + 1)
    return out


def multistart_points(theta0, count, scale, seed):
    """Deterministic starting points: the initial vector plus Gaussian jitters."""
    rng = np.random.default_rng(seed)
    theta0 = np.asarray(theta0, dtype=float)
    starts = [theta0.copy()]
    for _ in range(count - 1):
        starts.append(theta0 + rng.normal(0.0, scale, size=theta0.size))
    return starts


def fit_mle(ds: CompetingRisksDataset, cfg: FitConfig) -> FitResult:
    """Maximise the log-likelihood from several starts and return the best fit.

    Raises :class:`BadStartError` if the initial point has a non-finite
    log-likelihood and :class:`NonConvergenceError` (carrying the best run) if
    no start converged.
    """
    problems = validate_dataset(ds)
    if problems:
        raise ConfigurationError("invalid dataset: " + "; ".join(problems[:5]))
    lp0 = cfg.initial_params
    if lp0.num_causes != ds.num_causes or lp0.num_covariates != ds.num_covariates:
        raise ConfigurationError(
            f"initial parameters have {lp0.num_causes} causes / {lp0.num_covariates} "
            f"covariates, dataset has {ds.num_causes} / {ds.num_covariates}")

    theta0 = lp0.to_vector()
    if not np.all(np.isfinite(theta0)):
        raise BadStartError("initial parameters contain non-finite values")
    first = LogLikelihood(cfg.family, ds, cfg.backend).value(theta0)
    # every term at the floor means the start has no usable likelihood surface
    if not math.isfinite(first.loglik) or first.num_degenerate_terms == ds.n:
        raise BadStartError(f"log-likelihood is {first.loglik} at the initial parameters "
                            f"({first.num_degenerate_terms} of {ds.n} terms at the floor)")

    starts = multistart_points(theta0, cfg.multistart_count, cfg.multistart_scale, cfg.seed)
    if cfg.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            runs = list(pool.map(lambda s: _single_run(cfg.family, ds, s, cfg), starts))
    else:
        runs = [_single_run(cfg.family, ds, s, cfg) for s in starts]

    total_evals = sum(r.evaluations for r in runs)
    converged_runs = [r for r in runs if r.converged and np.isfinite(r.loglik)]
    pool_runs = converged_runs or [r for r in runs if np.isfinite(r.loglik)] or runs
    # ties keep the earliest start so results do not depend on scheduling
    best = max(pool_runs, key=lambda r: r.loglik)

    result = _build_result(ds, cfg, best, runs, total_evals)
    if not converged_runs:
        raise NonConvergenceError(
            f"none of {len(runs)} starts converged: {best.message}", best=result,
            diagnostics={"messages": [r.message for r in runs]})
    return result


def _build_result(ds, cfg, run: _Run, runs, total_evals) -> FitResult:
    mle = LinkedParams.from_vector(cfg.family, run.theta, ds.num_causes)
    ll = LogLikelihood(cfg.family, ds, cfg.backend)
    value = ll.value(run.theta)
    if run.hessian is not None:
        hessian = run.hessian * ds.n
    else:
        hessian = numerical_hessian(lambda t: ll.batch(t)[0], run.theta, cfg.hessian_step,
                                    vectorized=True)
    cov, flagged = covariance_from_hessian(hessian)
    var = np.diag(cov)
    with np.errstate(invalid="ignore"):
        se = np.where(var >= 0, np.sqrt(np.abs(var)), np.nan)
    intervals = {level: wald_intervals(run.theta, cov, level) for level in cfg.confidence_levels}

    diagnostics = []
    if not run.converged:
        diagnostics.append(run.message)
    if flagged:
        diagnostics.append("observed information is singular or not positive definite; "
                           "standard errors are unreliable")
    xbar = ds.covariates.mean(axis=0) if ds.num_covariates else np.zeros(0)
    for j in range(1, mle.num_causes + 1):
        a, _ = link_eval(mle, j, xbar)
        if a >= 0:
            msg = (f"cause {j}: fitted shape a_{j}(x) = {a:.4g} >= 0 at the covariate mean; "
                   "the model is not defective there")
            diagnostics.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    return FitResult(
        mle=mle, loglik=value.loglik, covariance=cov, std_errors=se,
        confidence_intervals=intervals, converged=run.converged,
        num_evaluations=total_evals, degenerate_term_count=value.num_degenerate_terms,
        n=ds.n, gradient=run.gradient, hessian_flagged=flagged, iterations=run.iterations,
        diagnostics=diagnostics, start_logliks=[r.start_loglik for r in runs],
    )


def default_initial_params(family, ds: CompetingRisksDataset) -> LinkedParams:
    """Intercept-only start chosen by a small grid search over (a, log b).

    Slopes start at zero; every cause shares the best intercept pair.
    """
    family = Family.parse(family)
    k, p = ds.num_causes, ds.num_covariates
    ll = LogLikelihood(family, ds)
    candidates = []
    for a in (-1.0, -0.5, -0.2):
        for log_b in (-3.0, -2.0, -1.0, 0.0, 1.0):
            lp = LinkedParams(family, [[a] + [0.0] * p] * k, [[log_b] + [0.0] * p] * k)
            candidates.append(lp)
    values = ll.batch(np.array([c.to_vector() for c in candidates]))[0]
    values = np.where(np.isfinite(values), values, -np.inf)
    return candidates[int(np.argmax(values))]
