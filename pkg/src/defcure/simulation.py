"""Simulated interval-censored competing-risks data and Monte Carlo studies.

Data generation, per subject ``i`` (two covariates, ``k`` causes):

1. ``X1 ~ Bernoulli(0.5)``, ``X2 ~ Uniform(0, 1)``.
2. Cure fraction ``p(x) = prod_j p_j(x)``; the subject is susceptible with
   probability ``1 - p(x)``, otherwise its latent time is infinite.
3. Susceptible subjects pick cause ``J`` with probability proportional to
   ``1 - p_j(x)`` and draw the latent time from that cause's distribution
   conditional on failure.
4. A censoring time ``C ~ Uniform(0, max finite latent time)`` is drawn; if
   ``C`` comes first the subject is right-censored at ``C``.
5. Otherwise the event is located in a random inspection lattice
   ``(0, l], (l, l + w], (l + w, l + 2w], ...`` with ``l ~ U(0, 1)`` and
   ``w ~ U(0.2, 0.7)``.

Replication seeds come from ``numpy.random.SeedSequence(rng_seed).spawn``, so
results do not depend on how replications are scheduled across workers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import CompetingRisksDataset, design_matrix
from .distributions import Family, LinkedParams, conditional_quantiles, cure
from .errors import ConfigurationError, DefcureError, GenerationError, StudyAbortedError
from .estimation import FitConfig, cure_fractions, fit_mle

# Default study truths (Gompertz and inverse Gaussian), packed per cause.
GOMPERTZ_TRUTH = LinkedParams(
    Family.GOMPERTZ,
    gammas=[[-0.2, -0.4, -0.6], [-0.2, -0.5, -0.7]],
    betas=[[-2.0, 1.0, 1.5], [-2.0, 1.0, 2.0]],
)
INVERSE_GAUSSIAN_TRUTH = LinkedParams(
    Family.INVERSE_GAUSSIAN,
    gammas=[[-0.1, -0.3, -0.5], [-0.2, -0.4, -0.6]],
    betas=[[-1.5, 1.0, 2.0], [-1.0, 1.0, 2.0]],
)

# (x1, x2) evaluation points for the four stratum cure rates.
STRATUM_POINTS = {
    "p13": (0.0, 0.25),
    "p14": (0.0, 0.75),
    "p23": (1.0, 0.25),
    "p24": (1.0, 0.75),
}
MAX_FAILURE_FRACTION = 0.2


@dataclass(frozen=True)
class SimScenario:
    family: Family
    true_params: LinkedParams
    n: int
    replications: int = 1
    rng_seed: int = 0
    interval_len_range: tuple = (0.2, 0.7)
    tail_rate_range: tuple = (0.1, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.true_params.family is not self.family:
            raise ConfigurationError("true_params family differs from scenario family")
        if self.true_params.num_covariates != 2:
            raise ConfigurationError("the generator draws exactly two covariates (X1, X2)")
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")
        if self.replications < 1:
            raise ConfigurationError(f"replications must be >= 1, got {self.replications}")
        lo, hi = self.interval_len_range
        if not 0 < lo < hi < math.inf:
            raise ConfigurationError(f"invalid interval_len_range {self.interval_len_range}")
        lo, hi = self.tail_rate_range
        if not 0 < lo <= hi < math.inf:
            raise ConfigurationError(f"invalid tail_rate_range {self.tail_rate_range}")

    @classmethod
    def table1(cls, n, replications=1, rng_seed=0):
        return cls(Family.GOMPERTZ, GOMPERTZ_TRUTH, n, replications, rng_seed)

    @classmethod
    def table3(cls, n, replications=1, rng_seed=0):
        return cls(Family.INVERSE_GAUSSIAN, INVERSE_GAUSSIAN_TRUTH, n, replications, rng_seed)


@dataclass
class Latents:
    """Generator internals kept for checking: latent times, censoring times, cause, tau."""

    event_time: np.ndarray
    censor_time: np.ndarray
    cause: np.ndarray
    tail_rate: float


def _linked(lp: LinkedParams, X):
    shape = X @ lp.gammas.T
    scale = np.exp(X @ lp.betas.T)
    return shape, scale


def generate_dataset(sc: SimScenario, seed=None, *, return_latents=False):
    """Draw one dataset of ``sc.n`` subjects.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``; it defaults
    to ``sc.rng_seed``.  With ``return_latents=True`` returns
    ``(dataset, Latents)``.
    """
    rng = np.random.default_rng(sc.rng_seed if seed is None else seed)
    lp = sc.true_params
    k, n = lp.num_causes, sc.n

    x1 = rng.binomial(1, 0.5, size=n).astype(float)
    x2 = rng.uniform(0.0, 1.0, size=n)
    covariates = np.column_stack([x1, x2])
    shape, scale = _linked(lp, design_matrix(covariates))
    bad = np.flatnonzero((shape >= 0).any(axis=1))
    if bad.size:
        i = int(bad[0])
        raise GenerationError(
            f"true parameters are not defective at x = {covariates[i].tolist()} "
            f"(shapes {shape[i].tolist()})")

    per_cause = np.array([[cure(sc.family, a, b) for a, b in zip(sa, sb)]
                          for sa, sb in zip(shape, scale)])
    overall = per_cause.prod(axis=1)
    # tau only matters for a finite tail beyond the lattice, which an
    # unbounded lattice never needs; drawn so the stream layout is fixed.
    tail_rate = float(rng.uniform(*sc.tail_rate_range))
    susceptible = rng.uniform(size=n) < 1.0 - overall

    weights = 1.0 - per_cause
    totals = weights.sum(axis=1, keepdims=True)
    # subjects cured with certainty never use their cause draw
    weights = np.where(totals > 0, weights / np.where(totals > 0, totals, 1.0), 1.0 / k)
    cause_draw = rng.uniform(size=n)
    latent_cause = 1 + (cause_draw[:, None] > np.cumsum(weights, axis=1)).sum(axis=1)
    latent_cause = np.minimum(latent_cause, k)
    u = rng.uniform(size=n)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)

    latent = np.full(n, np.inf)
    idx = np.flatnonzero(susceptible)
    col = latent_cause[idx] - 1
    latent[idx] = conditional_quantiles(sc.family, shape[idx, col], scale[idx, col], u[idx])
    latent_cause = np.where(susceptible, latent_cause, 0)

    finite = latent[np.isfinite(latent)]
    upper = finite.max() if finite.size else 1.0
    censor = rng.uniform(0.0, upper, size=n)

    offsets = rng.uniform(0.0, 1.0, size=n)
    widths = rng.uniform(*sc.interval_len_range, size=n)

    left = np.empty(n)
    right = np.empty(n)
    cause = np.zeros(n, dtype=np.int64)
    censored = censor < latent
    left[censored] = censor[censored]
    right[censored] = np.inf
    ev = ~censored
    t = latent[ev]
    l0 = offsets[ev]
    w = widths[ev]
    # cell m >= 1 is (l0 + (m-1) w, l0 + m w]; cell 0 is (0, l0]
    m = np.where(t <= l0, 0, np.ceil((t - l0) / w))
    lo_edge = np.where(m == 0, 0.0, l0 + (m - 1) * w)
    hi_edge = np.where(m == 0, l0, l0 + m * w)
    # guard against rounding placing t just outside its cell
    hi_edge = np.where(t > hi_edge, hi_edge + w, hi_edge)
    lo_edge = np.where(t <= lo_edge, np.maximum(lo_edge - w, 0.0), lo_edge)
    left[ev] = lo_edge
    right[ev] = hi_edge
    cause[ev] = latent_cause[ev]

    ds = CompetingRisksDataset.from_arrays(left, right, cause, covariates, num_causes=k,
                                           covariate_names=("x1", "x2"))
    if return_latents:
        return ds, Latents(latent, censor, latent_cause, tail_rate)
    return ds


def stratum_cure_rates(family, lp: LinkedParams) -> dict:
    """Cure rates ``p13, p14, p23, p24`` at the representative covariate points."""
    out = {}
    for name, x in STRATUM_POINTS.items():
        out[name] = cure_fractions(family, lp, x)[0]
    return out


@dataclass
class MonteCarloReport:
    family: Family
    n: int
    parameter_names: list
    truth: np.ndarray
    mean_estimate: np.ndarray
    signed_bias: np.ndarray
    abs_bias: np.ndarray
    mse: np.ndarray
    coverage: dict
    cure_names: list
    cure_truth: np.ndarray
    cure_abs_bias: np.ndarray
    cure_mse: np.ndarray
    replications: int
    failures: int
    failure_messages: list = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def successes(self) -> int:
        return self.replications - self.failures

    def csv_rows(self):
        """Rows of ``(name, bias, mse, cp90, cp95)``; cure rows leave CP blank."""
        cp90 = self.coverage.get(0.10)
        cp95 = self.coverage.get(0.05)
        rows = []
        for i, name in enumerate(self.parameter_names):
            rows.append((name, self.abs_bias[i], self.mse[i],
                         None if cp90 is None else cp90[i],
                         None if cp95 is None else cp95[i]))
        for i, name in enumerate(self.cure_names):
            rows.append((name, self.cure_abs_bias[i], self.cure_mse[i], None, None))
        return rows

    def to_dict(self):
        return {
            "family": self.family.value,
            "n": self.n,
            "replications": self.replications,
            "failures": self.failures,
            "seed": self.seed,
            "parameters": {
                name: {
                    "truth": float(self.truth[i]),
                    "mean_estimate": float(self.mean_estimate[i]),
                    "signed_bias": float(self.signed_bias[i]),
                    "abs_bias": float(self.abs_bias[i]),
                    "mse": float(self.mse[i]),
                    "coverage": {f"{1 - a:.2f}": float(c[i])
                                 for a, c in sorted(self.coverage.items(), reverse=True)},
                }
                for i, name in enumerate(self.parameter_names)
            },
            "cure_rates": {
                name: {
                    "truth": float(self.cure_truth[i]),
                    "evaluated_at": list(STRATUM_POINTS[name]),
                    "abs_bias": float(self.cure_abs_bias[i]),
                    "mse": float(self.cure_mse[i]),
                }
                for i, name in enumerate(self.cure_names)
            },
            "failure_messages": list(self.failure_messages),
        }


def _one_replication(args):
    sc, cfg, seed_seq = args
    try:
        ds = generate_dataset(sc, seed_seq)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_mle(ds, cfg)
    except DefcureError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    theta = fit.mle.to_vector()
    covers = {}
    for level, intervals in fit.confidence_intervals.items():
        covers[level] = np.array([iv is not None and iv[0] <= t <= iv[1]
                                  for iv, t in zip(intervals, sc.true_params.to_vector())])
    try:
        cures = np.array(list(stratum_cure_rates(sc.family, fit.mle).values()))
    except DefcureError:
        cures = np.full(len(STRATUM_POINTS), np.nan)
    return (theta, covers, cures), None


def run_monte_carlo(sc: SimScenario, cfg: FitConfig, *, workers: int = 1,
                    progress=None) -> MonteCarloReport:
    """Generate, fit and summarise ``sc.replications`` datasets.

    Failed fits are dropped and counted; more than 20% failures aborts the
    study.  ``workers > 1`` runs replications in separate processes.
    """
    if cfg.family is not sc.family:
        raise ConfigurationError("fit config family differs from scenario family")
    seeds = np.random.SeedSequence(sc.rng_seed).spawn(sc.replications)
    jobs = [(sc, cfg, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = []
            for out in pool.map(_one_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                outcomes.append(out)
                if progress:
                    progress(len(outcomes), len(jobs))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(_one_replication(job))
            if progress:
                progress(len(outcomes), len(jobs))

    good = [o for o, _ in outcomes if o is not None]
    messages = [m for _, m in outcomes if m is not None]
    failures = len(messages)
    if failures > MAX_FAILURE_FRACTION * sc.replications:
        raise StudyAbortedError(
            f"{failures} of {sc.replications} replications failed",
            diagnostics={"messages": messages[:20]})

    truth = sc.true_params.to_vector()
    estimates = np.array([g[0] for g in good])
    errors = estimates - truth
    signed_bias = errors.mean(axis=0)
    coverage = {level: np.mean([g[1][level] for g in good], axis=0)
                for level in cfg.confidence_levels}

    cure_truth = np.array(list(stratum_cure_rates(sc.family, sc.true_params).values()))
    cure_est = np.array([g[2] for g in good])
    with np.errstate(invalid="ignore"):
        cure_err = cure_est - cure_truth
        cure_bias = np.abs(np.nanmean(cure_err, axis=0))
        cure_mse = np.nanmean(cure_err ** 2, axis=0)

    return MonteCarloReport(
        family=sc.family, n=sc.n, parameter_names=sc.true_params.parameter_names(),
        truth=truth, mean_estimate=estimates.mean(axis=0), signed_bias=signed_bias,
        abs_bias=np.abs(signed_bias), mse=(errors ** 2).mean(axis=0), coverage=coverage,
        cure_names=list(STRATUM_POINTS), cure_truth=cure_truth, cure_abs_bias=cure_bias,
        cure_mse=cure_mse, replications=sc.replications, failures=failures,
        failure_messages=messages, seed=sc.rng_seed,
    )


def default_fit_config(sc: SimScenario, **overrides) -> FitConfig:
    """Fit configuration for a scenario: start at the truth, as the study does."""
    cfg = FitConfig(family=sc.family, initial_params=sc.true_params)
    return replace(cfg, **overrides) if overrides else cfg
