"""Defective Gompertz and inverse-Gaussian survival functions.

Both families are parametrised by a shape ``a`` and a scale ``b > 0``.  With
``a < 0`` the survival function levels off at a positive value, the cure
fraction:

* Gompertz: ``S(t) = exp(-(b/a) (exp(a t) - 1))``, cure ``exp(b/a)``.
* inverse Gaussian: ``S(t) = 1 - Phi((a t - 1)/sqrt(b t))
  - exp(2a/b) Phi((-a t - 1)/sqrt(b t))``, cure ``1 - exp(2a/b)``.

Scalar entry points (``gompertz_survival`` and friends) work on plain floats
through :mod:`math`.  The ``*_log_survival`` helpers are the numpy versions used
by the vectorised likelihood path.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import (ConfigurationError, NonFiniteParameterError,
                     NotDefectiveError, NumericInversionError)

# Below this |a| the Gompertz exponent uses its Taylor series around a = 0.
GOMPERTZ_SERIES_THRESHOLD = 1e-8
_LOG_MAX = math.log(np.finfo(float).max)
_SQRT2 = math.sqrt(2.0)


class Family(str, enum.Enum):
    GOMPERTZ = "gompertz"
    INVERSE_GAUSSIAN = "inverse-gaussian"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"ig": cls.INVERSE_GAUSSIAN, "inversegaussian": cls.INVERSE_GAUSSIAN,
                   "inverse-gaussian": cls.INVERSE_GAUSSIAN, "gompertz": cls.GOMPERTZ}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown family {value!r}") from None

    @property
    def code(self) -> int:
        return 0 if self is Family.GOMPERTZ else 1


@dataclass(frozen=True)
class GompertzParams:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ConfigurationError(f"scale b must be positive, got {self.b}")

    def is_defective(self) -> bool:
        return self.a < 0


@dataclass(frozen=True)
class InverseGaussianParams:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ConfigurationError(f"scale b must be positive, got {self.b}")

    def is_defective(self) -> bool:
        return self.a < 0


PARAMS_FOR_FAMILY = {
    Family.GOMPERTZ: GompertzParams,
    Family.INVERSE_GAUSSIAN: InverseGaussianParams,
}


@dataclass(frozen=True, eq=False)
class LinkedParams:
    """Regression coefficients for every cause.

    ``gammas[j-1]`` drives the shape through the identity link and
    ``betas[j-1]`` the scale through the log link; both have length ``p + 1``
    with the intercept first.  The flat packing order used by the optimiser
    and the covariance matrix is ``(gamma_1, beta_1, gamma_2, beta_2, ...)``.
    """

    family: Family
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        gammas = np.array(self.gammas, dtype=float, ndmin=2)
        betas = np.array(self.betas, dtype=float, ndmin=2)
        if gammas.shape != betas.shape:
            raise ConfigurationError(
                f"gamma and beta blocks differ in shape: {gammas.shape} vs {betas.shape}")
        gammas.setflags(write=False)
        betas.setflags(write=False)
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "betas", betas)

    @property
    def num_causes(self) -> int:
        return self.gammas.shape[0]

    @property
    def num_covariates(self) -> int:
        return self.gammas.shape[1] - 1

    @property
    def size(self) -> int:
        return 2 * self.gammas.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.concatenate([g, b]) for g, b in zip(self.gammas, self.betas)])

    @classmethod
    def from_vector(cls, family, vector, num_causes: int) -> "LinkedParams":
        vector = np.asarray(vector, dtype=float)
        if vector.size % (2 * num_causes):
            raise ConfigurationError(
                f"vector of length {vector.size} cannot hold {num_causes} causes")
        blocks = vector.reshape(num_causes, 2, -1)
        return cls(family, blocks[:, 0, :].copy(), blocks[:, 1, :].copy())

    def parameter_names(self) -> list[str]:
        q = self.gammas.shape[1]
        names = []
        for j in range(1, self.num_causes + 1):
            names += [f"gamma_{r}{j}" for r in range(q)]
            names += [f"beta_{r}{j}" for r in range(q)]
        return names

    def __eq__(self, other):
        if not isinstance(other, LinkedParams):
            return NotImplemented
        return (self.family is other.family and np.array_equal(self.gammas, other.gammas)
                and np.array_equal(self.betas, other.betas))

    def __hash__(self):
        return hash((self.family, self.gammas.tobytes(), self.betas.tobytes()))


def link_eval(lp: LinkedParams, j: int, x: Sequence[float]) -> tuple[float, float]:
    """Shape and scale of cause ``j`` (1-based) at covariates ``x``."""
    if not 1 <= j <= lp.num_causes:
        raise ConfigurationError(f"cause index {j} outside 1..{lp.num_causes}")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != lp.num_covariates:
        raise ConfigurationError(
            f"expected {lp.num_covariates} covariates, got {x.size}")
    row = np.concatenate(([1.0], x))
    a = float(row @ lp.gammas[j - 1])
    eta = float(row @ lp.betas[j - 1])
    if not math.isfinite(a) or not math.isfinite(eta) or eta > _LOG_MAX:
        raise NonFiniteParameterError(
            f"non-finite parameter for cause {j}: shape {a}, log-scale {eta}",
            linear_predictor=eta)
    return a, math.exp(eta)


def cause_params(lp: LinkedParams, j: int, x):
    a, b = link_eval(lp, j, x)
    return PARAMS_FOR_FAMILY[lp.family](a, b)


# -- standard normal -------------------------------------------------------

def std_normal_cdf(z: float) -> float:
    # erfc keeps full relative precision in the lower tail, unlike 1 + erf.
    return 0.5 * math.erfc(-z / _SQRT2)


def log1mexp(x):
    """``log(1 - exp(x))`` for ``x <= 0`` without cancellation."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > -math.log(2.0), np.log(-np.expm1(x)), np.log1p(-np.exp(x)))
    return out[()] if out.ndim == 0 else out


def _log1mexp_scalar(x: float) -> float:
    if x >= 0:
        return -math.inf
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


# -- Gompertz ----------------------------------------------------------------

def _gompertz_log_survival_scalar(a: float, b: float, t: float) -> float:
    if t <= 0:
        return 0.0
    if math.isinf(t):
        return b / a if a < 0 else -math.inf
    at = a * t
    if abs(a) < GOMPERTZ_SERIES_THRESHOLD:
        return -b * t * (1.0 + at / 2.0 + at * at / 6.0)
    try:
        return -b * math.expm1(at) / a
    except OverflowError:
        return -math.inf


def gompertz_survival(p: GompertzParams, t: float) -> float:
    return math.exp(_gompertz_log_survival_scalar(p.a, p.b, float(t)))


def gompertz_log_survival(a, b, t):
    """Vectorised ``log S(t)`` for the Gompertz family (broadcasts)."""
    a, b, t = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(t, float))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        at = a * t
        small = np.abs(a) < GOMPERTZ_SERIES_THRESHOLD
        safe_a = np.where(small, 1.0, a)
        direct = -b * np.expm1(at) / safe_a
        series = -b * t * (1.0 + at / 2.0 + at * at / 6.0)
        out = np.where(small, series, direct)
        out = np.where(np.isinf(t), np.where(a < 0, b / safe_a, -np.inf), out)
        out = np.where(t <= 0, 0.0, out)
    return out


def gompertz_cure(p: GompertzParams) -> float:
    if not p.a < 0:
        raise NotDefectiveError(f"Gompertz shape {p.a} is not negative; no cure fraction",
                                shape=p.a)
    return math.exp(p.b / p.a)


def _gompertz_quantile(a, b, u):
    # log S(t) = log(1 - u (1 - cure)) with 1 - cure = -expm1(b/a)
    log_target = np.log1p(u * np.expm1(b / a))
    arg = -(a / b) * log_target
    # arg -> -1 as u -> 1; keep it inside the domain so t stays finite
    arg = np.maximum(arg, np.nextafter(-1.0, 0.0))
    return np.log1p(arg) / a


def _check_u(u):
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise ConfigurationError("u must lie strictly inside (0, 1)")
    return u_arr


def gompertz_conditional_quantile(p: GompertzParams, u):
    """Time at which a fraction ``u`` of the susceptible mass has failed.

    Solves ``S(t) = 1 - u (1 - cure)`` in closed form.  ``u`` may be an array.
    """
    if not p.a < 0:
        raise NotDefectiveError(f"Gompertz shape {p.a} is not negative", shape=p.a)
    t = _gompertz_quantile(p.a, p.b, _check_u(u))
    return float(t) if np.ndim(u) == 0 else t


# -- inverse Gaussian ----------------------------------------------------------

_LOG_HALF = math.log(0.5)
# erfcx(x) overflows for x below about -26.6; keep well clear of it.
_ERFCX_MIN_ARG = -30.0


def _log_erfcx_gap(u, v):
    """``log(0.5 * (erfcx(u/sqrt2) - erfcx(v/sqrt2)))`` for ``u < v``."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return _LOG_HALF + np.log(special.erfcx(u / _SQRT2) - special.erfcx(v / _SQRT2))


def _ig_log_survival_scalar(a: float, b: float, t: float) -> float:
    if t <= 0:
        return 0.0
    if math.isinf(t):
        if a < 0:
            return _log1mexp_scalar(2.0 * a / b)
        return -math.inf
    s = math.sqrt(b * t)
    if s == 0.0:
        return 0.0  # b*t underflowed; nothing has failed yet
    z1 = (a * t - 1.0) / s
    if z1 > 0:
        # Both Phi terms sit in the upper tail; factor out exp(-z1^2/2).
        return -0.5 * z1 * z1 + float(_log_erfcx_gap(z1, (a * t + 1.0) / s))
    z2 = (-a * t - 1.0) / s
    log_upper = float(special.log_ndtr(-z1))
    log_ratio = 2.0 * a / b + float(special.log_ndtr(z2)) - log_upper
    return log_upper + _log1mexp_scalar(log_ratio)


def ig_survival(p: InverseGaussianParams, t: float) -> float:
    return math.exp(_ig_log_survival_scalar(p.a, p.b, float(t)))


def ig_log_survival(a, b, t):
    """Vectorised ``log S(t)`` for the inverse-Gaussian family.

    Written as ``log(Phi(-z1)) + log(1 - exp(2a/b) Phi(z2) / Phi(-z1))`` so
    that ``exp(2a/b)`` never has to be formed on its own.  When ``z1 > 0``
    both terms are upper tails and the difference is taken through ``erfcx``.
    """
    a, b, t = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(t, float))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        finite_t = np.where(np.isfinite(t) & (t > 0), t, 1.0)
        s = np.sqrt(b * finite_t)
        z1 = (a * finite_t - 1.0) / s
        z2 = (-a * finite_t - 1.0) / s
        log_upper = special.log_ndtr(-z1)
        log_ratio = 2.0 * a / b + special.log_ndtr(z2) - log_upper
        out = log_upper + log1mexp(np.minimum(log_ratio, 0.0))
        tail = z1 > 0
        if tail.any():
            z1t = np.where(tail, z1, 1.0)
            out = np.where(tail, -0.5 * z1t * z1t + _log_erfcx_gap(z1t, -z2), out)
        at_inf = np.where(a < 0, log1mexp(np.minimum(2.0 * a / b, 0.0)), -np.inf)
        out = np.where(np.isinf(t), at_inf, out)
        out = np.where(t <= 0, 0.0, out)
    return out


def ig_log_excess(a, b, t):
    """``log(S(t) - cure)`` for a defective IG (``a < 0``), finite ``t > 0``.

    Returns nan where the erfcx form is out of range; callers fall back.
    """
    a, b, t = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(t, float))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        s = np.sqrt(b * t)
        u = (-a * t - 1.0) / s
        v = (-a * t + 1.0) / s
        out = -0.5 * v * v + _log_erfcx_gap(u, v)
    ok = (a < 0) & (t > 0) & np.isfinite(t) & (u > _ERFCX_MIN_ARG)
    return np.where(ok, out, np.nan)


def log_interval_probability(family, a, b, left, right):
    """Vectorised ``log(S(left) - S(right))``.

    Uses forms that stay accurate when ``S(left)`` and ``S(right)`` agree to
    many digits: the closed-form Gompertz log-ratio, and for a defective IG
    the difference of the excesses over the cure fraction.
    """
    family = Family.parse(family)
    a, b, left, right = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                            np.asarray(left, float),
                                            np.asarray(right, float))
    log_surv = gompertz_log_survival if family is Family.GOMPERTZ else ig_log_survival
    lu = log_surv(a, b, left)
    finite_right = np.isfinite(right)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if family is Family.GOMPERTZ:
            delta = np.where(finite_right, right - left, 1.0)
            ad = a * delta
            small = np.abs(a) < GOMPERTZ_SERIES_THRESHOLD
            safe_a = np.where(small, 1.0, a)
            growth = np.where(small, delta * (1.0 + ad / 2.0 + ad * ad / 6.0),
                              np.expm1(ad) / safe_a)
            diff = -b * np.exp(a * left) * growth
            diff = np.where(finite_right, diff, log_surv(a, b, right) - lu)
        else:
            diff = log_surv(a, b, right) - lu
        diff = np.where(np.isneginf(lu), -np.inf, diff)
        out = lu + log1mexp(np.minimum(diff, 0.0))
        if family is Family.INVERSE_GAUSSIAN:
            gl = ig_log_excess(a, b, left)
            gr = ig_log_excess(a, b, right)
            use = np.isfinite(gl) & np.isfinite(gr) & finite_right
            if use.any():
                alt = gl + log1mexp(np.minimum(gr - gl, 0.0))
                out = np.where(use, alt, out)
    return out


def ig_cure(p: InverseGaussianParams) -> float:
    if not p.a < 0:
        raise NotDefectiveError(
            f"inverse-Gaussian shape {p.a} is not negative; no cure fraction", shape=p.a)
    return -math.expm1(2.0 * p.a / p.b)


def _ig_quantile(a, b, u, tol=1e-10, max_iter=200):
    a, b, u = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(u, float))
    a, b, u = a.ravel(), b.ravel(), u.ravel()
    # Work with the failed fraction F = 1 - S; the target is u (1 - cure) and
    # 1 - cure = exp(2a/b).  A relative tolerance keeps small u resolvable.
    f_target = u * np.exp(2.0 * a / b)

    def failed(t):
        return -np.expm1(ig_log_survival(a, b, t))

    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(max_iter):
        # targets within tol of 1 - cure are reached only asymptotically
        below = failed(hi) < f_target * (1.0 - tol)
        if not below.any():
            break
        lo = np.where(below, hi, lo)
        hi = np.where(below, hi * 2.0, hi)
    else:
        raise NumericInversionError("could not bracket the inverse-Gaussian quantile",
                                    residual=float(np.max(f_target - failed(hi))))

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = failed(mid)
        below = f_mid < f_target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if (np.all(np.abs(f_mid - f_target) <= tol * f_target)
                or np.all(hi - lo <= 4 * np.finfo(float).eps * hi)):
            break
    t = mid
    residual = np.max(np.abs(f_mid - f_target))
    if residual > 1e-9:
        raise NumericInversionError("inverse-Gaussian quantile did not converge",
                                    residual=float(residual))
    return t


def ig_conditional_quantile(p: InverseGaussianParams, u):
    """Numerically invert ``S(t) = 1 - u (1 - cure)`` for the inverse Gaussian.

    The bracket starts at ``[1e-12, 1]`` and its upper end doubles until the
    target is crossed; bisection then runs on all entries of ``u`` at once,
    capped at 200 iterations per phase.
    """
    if not p.a < 0:
        raise NotDefectiveError(f"inverse-Gaussian shape {p.a} is not negative", shape=p.a)
    u_arr = _check_u(u)
    t = _ig_quantile(p.a, p.b, u_arr)
    return float(t[0]) if np.ndim(u) == 0 else t.reshape(u_arr.shape)


# -- dispatch by family ----------------------------------------------------------

def survival(family, a: float, b: float, t: float) -> float:
    family = Family.parse(family)
    if family is Family.GOMPERTZ:
        return gompertz_survival(GompertzParams(a, b), t)
    return ig_survival(InverseGaussianParams(a, b), t)


def log_survival(family, a, b, t):
    """Vectorised log-survival for either family."""
    if Family.parse(family) is Family.GOMPERTZ:
        return gompertz_log_survival(a, b, t)
    return ig_log_survival(a, b, t)


def cure(family, a: float, b: float) -> float:
    family = Family.parse(family)
    if family is Family.GOMPERTZ:
        return gompertz_cure(GompertzParams(a, b))
    return ig_cure(InverseGaussianParams(a, b))


def conditional_quantile(family, a: float, b: float, u):
    family = Family.parse(family)
    if family is Family.GOMPERTZ:
        return gompertz_conditional_quantile(GompertzParams(a, b), u)
    return ig_conditional_quantile(InverseGaussianParams(a, b), u)


def conditional_quantiles(family, a, b, u):
    """Vectorised quantiles over arrays of shapes, scales and levels (all ``a < 0``)."""
    family = Family.parse(family)
    a, b, u = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), _check_u(u))
    if np.any(a >= 0):
        raise NotDefectiveError("conditional quantiles need negative shapes")
    if a.size == 0:
        return np.zeros(a.shape)
    if family is Family.GOMPERTZ:
        return _gompertz_quantile(a, b, u)
    return _ig_quantile(a, b, u).reshape(a.shape)
