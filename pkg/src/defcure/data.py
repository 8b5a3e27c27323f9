"""Observations, datasets and the intercept-augmented design matrix."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class IntervalObservation:
    """One subject observed to fail somewhere in ``(left, right]``.

    Right censoring is encoded as ``right = inf`` together with ``cause = 0``.
    """

    left: float
    right: float
    cause: int
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", float(self.right))
        object.__setattr__(self, "cause", int(self.cause))
        object.__setattr__(self, "covariates", tuple(float(v) for v in self.covariates))

    @property
    def censored(self) -> bool:
        return self.cause == 0


@dataclass(frozen=True)
class CompetingRisksDataset:
    observations: tuple[IntervalObservation, ...]
    num_causes: int
    num_covariates: int
    covariate_names: Optional[tuple[str, ...]] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.covariate_names is not None:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    def __len__(self):
        return len(self.observations)

    @property
    def n(self) -> int:
        return len(self.observations)

    @classmethod
    def from_arrays(cls, left, right, cause, covariates=None, num_causes=None,
                    covariate_names=None) -> "CompetingRisksDataset":
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        cause = np.asarray(cause, dtype=int)
        if covariates is None:
            covariates = np.zeros((left.size, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if num_causes is None:
            num_causes = max(int(cause.max(initial=0)), 1)
        obs = tuple(
            IntervalObservation(l, r, c, tuple(row))
            for l, r, c, row in zip(left.tolist(), right.tolist(), cause.tolist(),
                                    covariates.tolist())
        )
        return cls(obs, int(num_causes), covariates.shape[1], covariate_names)

    # Column views used by the likelihood kernels; built once per dataset.
    @cached_property
    def left(self) -> np.ndarray:
        arr = np.array([o.left for o in self.observations], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def right(self) -> np.ndarray:
        arr = np.array([o.right for o in self.observations], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def cause(self) -> np.ndarray:
        arr = np.array([o.cause for o in self.observations], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def covariates(self) -> np.ndarray:
        arr = np.array([o.covariates for o in self.observations], dtype=float)
        arr = arr.reshape(len(self.observations), self.num_covariates)
        arr.setflags(write=False)
        return arr

    @cached_property
    def design(self) -> np.ndarray:
        """Design matrix with a leading intercept column, shape ``(n, p + 1)``."""
        arr = np.ascontiguousarray(design_matrix(self.covariates))
        arr.setflags(write=False)
        return arr

    def subset(self, mask) -> "CompetingRisksDataset":
        mask = np.asarray(mask)
        if mask.dtype == bool:
            idx = np.flatnonzero(mask)
        else:
            idx = mask
        return CompetingRisksDataset(
            tuple(self.observations[i] for i in idx),
            self.num_causes, self.num_covariates, self.covariate_names,
        )


def design_row(x: Sequence[float]) -> np.ndarray:
    """Prepend the intercept: ``(x1, ..., xp) -> (1, x1, ..., xp)``."""
    return np.concatenate(([1.0], np.asarray(x, dtype=float).ravel()))


def design_matrix(covariates) -> np.ndarray:
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    return np.hstack([np.ones((covariates.shape[0], 1)), covariates])


def validate_dataset(ds: CompetingRisksDataset) -> list[str]:
    """Return one message per violated invariant; an empty list means valid."""
    problems = []
    if ds.num_causes < 1:
        problems.append(f"dataset: num_causes must be >= 1, got {ds.num_causes}")
    if ds.num_covariates < 0:
        problems.append(f"dataset: num_covariates must be >= 0, got {ds.num_covariates}")
    if len(ds.observations) == 0:
        problems.append("dataset: no observations")
    if ds.covariate_names is not None and len(ds.covariate_names) != ds.num_covariates:
        problems.append(
            f"dataset: {len(ds.covariate_names)} covariate names for "
            f"{ds.num_covariates} covariates"
        )
    for i, obs in enumerate(ds.observations):
        if math.isnan(obs.left) or obs.left < 0 or math.isinf(obs.left):
            problems.append(f"observation {i}: left must be finite and >= 0 (got {obs.left})")
        if math.isnan(obs.right) or not obs.right > obs.left:
            problems.append(f"observation {i}: right must exceed left (got {obs.left}, {obs.right})")
        if obs.cause < 0:
            problems.append(f"observation {i}: cause must be >= 0 (got {obs.cause})")
        elif obs.cause > ds.num_causes:
            problems.append(
                f"observation {i}: cause exceeds num_causes ({obs.cause} > {ds.num_causes})"
            )
        if obs.cause == 0 and not math.isinf(obs.right):
            problems.append(f"observation {i}: censored must have right=+inf")
        if obs.cause != 0 and math.isinf(obs.right):
            problems.append(f"observation {i}: right=+inf requires cause=0")
        if len(obs.covariates) != ds.num_covariates:
            problems.append(
                f"observation {i}: expected {ds.num_covariates} covariates, "
                f"got {len(obs.covariates)}"
            )
        elif not all(math.isfinite(v) for v in obs.covariates):
            problems.append(f"observation {i}: covariates must be finite")
    return problems
