"""Defective Gompertz and inverse-Gaussian cure-rate models for
interval-censored competing-risks data."""

__version__ = "0.1.0"

from .data import CompetingRisksDataset, IntervalObservation, validate_dataset
from .distributions import (Family, GompertzParams, InverseGaussianParams, LinkedParams,
                            gompertz_conditional_quantile, gompertz_cure, gompertz_survival,
                            ig_conditional_quantile, ig_cure, ig_survival, link_eval,
                            std_normal_cdf)
from .errors import (BadStartError, ConfigurationError, DefcureError, GenerationError,
                     NonConvergenceError, NonFiniteParameterError, NotDefectiveError,
                     NumericInversionError, StencilError, StudyAbortedError)
from .estimation import (FitConfig, FitResult, cure_fractions, default_initial_params,
                         fit_mle, information_criteria, wald_intervals)
from .likelihood import (BACKEND, LikelihoodValue, dataset_log_likelihood,
                         obs_log_likelihood)
from .simulation import (GOMPERTZ_TRUTH, INVERSE_GAUSSIAN_TRUTH, MonteCarloReport,
                         SimScenario, generate_dataset, run_monte_carlo)
from .turnbull import TurnbullEstimate, survival_at, turnbull_fit
