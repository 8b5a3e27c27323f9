"""File formats: dataset CSV, fit report JSON, Monte Carlo CSV and curves CSV.

Dataset CSV: a header row with ``left``, ``right``, ``cause`` and then one
column per covariate.  ``right`` may be the token ``inf`` for right-censored
rows (which must have ``cause`` 0).  Floats are written with ``repr`` so a
written dataset reads back bit-for-bit.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .data import CompetingRisksDataset, IntervalObservation, validate_dataset
from .distributions import Family, LinkedParams
from .errors import ConfigurationError

INF_TOKENS = {"inf", "+inf", "infinity", "+infinity"}
REQUIRED_COLUMNS = ("left", "right", "cause")


class DataFormatError(ConfigurationError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def format_float(value) -> str:
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def _parse_float(token, line, column):
    text = token.strip()
    if text.lower() in INF_TOKENS:
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: cannot parse {token!r} as a number",
                              line) from None


def read_dataset_csv(source, covariates=None, num_causes=None) -> CompetingRisksDataset:
    """Parse a dataset CSV from a path or an open text file.

    ``covariates`` selects covariate columns by name (default: every column
    other than ``left``, ``right`` and ``cause``).
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_dataset_csv(fh, covariates, num_causes)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("no observations (empty file)", 1) from None
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise DataFormatError(f"missing required column {col!r}", 1)
    if covariates is None:
        covariates = [h for h in header if h not in REQUIRED_COLUMNS]
    covariates = list(covariates)
    for name in covariates:
        if name not in header:
            raise DataFormatError(f"covariate column {name!r} not in header", 1)
    pos = {h: i for i, h in enumerate(header)}

    observations = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", line_no)
        left = _parse_float(row[pos["left"]], line_no, "left")
        right = _parse_float(row[pos["right"]], line_no, "right")
        cause_text = row[pos["cause"]].strip()
        try:
            cause = int(cause_text)
        except ValueError:
            raise DataFormatError(f"column 'cause': {cause_text!r} is not an integer",
                                  line_no) from None
        xs = tuple(_parse_float(row[pos[c]], line_no, c) for c in covariates)
        observations.append((line_no, IntervalObservation(left, right, cause, xs)))

    if not observations:
        raise DataFormatError("no observations", 2)
    k = num_causes if num_causes is not None else max(1, max(o.cause for _, o in observations))
    ds = CompetingRisksDataset(tuple(o for _, o in observations), int(k), len(covariates),
                               tuple(covariates))
    problems = validate_dataset(ds)
    if problems:
        first = problems[0]
        line = None
        if first.startswith("observation "):
            idx = int(first.split()[1].rstrip(":"))
            line = observations[idx][0]
        raise DataFormatError(first, line)
    return ds


def write_dataset_csv(ds: CompetingRisksDataset, target):
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_dataset_csv(ds, fh)
    names = list(ds.covariate_names or [f"x{i + 1}" for i in range(ds.num_covariates)])
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["left", "right", "cause", *names])
    for obs in ds.observations:
        writer.writerow([format_float(obs.left), format_float(obs.right), obs.cause,
                         *(format_float(v) for v in obs.covariates)])


# -- JSON ------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def level_label(alpha: float) -> str:
    return f"{1 - alpha:.2f}"


def fit_report(fit, ds: CompetingRisksDataset, profiles=(), invocation=None) -> dict:
    """Serialisable summary of a :class:`~defcure.estimation.FitResult`."""
    from .errors import NotDefectiveError

    names = fit.parameter_names
    theta = fit.mle.to_vector()
    params = []
    for i, name in enumerate(names):
        cis = {}
        for alpha, intervals in sorted(fit.confidence_intervals.items()):
            iv = intervals[i]
            cis[level_label(alpha)] = None if iv is None else [iv[0], iv[1]]
        params.append({"name": name, "estimate": theta[i], "std_error": fit.std_errors[i],
                       "ci": cis})
    cures = []
    cov_names = list(ds.covariate_names or [f"x{i + 1}" for i in range(ds.num_covariates)])
    for x in profiles:
        entry = {"profile": dict(zip(cov_names, [float(v) for v in x]))}
        try:
            overall, per_cause = fit.cure_fractions(x)
            entry.update(overall=overall, per_cause=list(per_cause))
        except NotDefectiveError as exc:
            entry.update(overall=None, per_cause=None, error=str(exc))
        cures.append(entry)
    ic = fit.information_criteria()
    return {
        "invocation": invocation or {},
        "family": fit.mle.family.value,
        "n": ds.n,
        "num_causes": ds.num_causes,
        "num_covariates": ds.num_covariates,
        "covariate_names": cov_names,
        "parameter_order": names,
        "parameters": params,
        "covariance": fit.covariance,
        "loglik": fit.loglik,
        "k_params": fit.k_params,
        "aic": ic.aic,
        "bic": ic.bic,
        "caic": ic.caic,
        "cure_fractions": cures,
        "convergence": {
            "converged": fit.converged,
            "gradient_max_abs": float(np.max(np.abs(fit.gradient))),
            "iterations": fit.iterations,
            "num_evaluations": fit.num_evaluations,
            "degenerate_term_count": fit.degenerate_term_count,
            "hessian_flagged": fit.hessian_flagged,
            "start_logliks": fit.start_logliks,
            "diagnostics": fit.diagnostics,
        },
    }


def params_from_report(report: dict) -> LinkedParams:
    """Rebuild fitted :class:`LinkedParams` from a fit report dictionary."""
    try:
        family = Family.parse(report["family"])
        k = int(report["num_causes"])
        theta = [p["estimate"] for p in report["parameters"]]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed fit report: missing {exc}") from None
    return LinkedParams.from_vector(family, theta, k)


# -- Monte Carlo -------------------------------------------------------------------

MC_COLUMNS = ("parameter", "truth", "bias", "mse", "cp90", "cp95")


def monte_carlo_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MC_COLUMNS)
    truths = list(report.truth) + list(report.cure_truth)
    for truth, (name, bias, mse, cp90, cp95) in zip(truths, report.csv_rows()):
        writer.writerow([name, format_float(truth), format_float(bias), format_float(mse),
                         "" if cp90 is None else format_float(cp90),
                         "" if cp95 is None else format_float(cp95)])
    return buf.getvalue()


def curves_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stratum", "t", "turnbull_S", "model_S"])
    for stratum, t, s_np, s_model in rows:
        writer.writerow([stratum, format_float(t), format_float(s_np),
                         "" if s_model is None else format_float(s_model)])
    return buf.getvalue()
