"""Command-line interface: ``defcure fit | simulate | curves``.

Exit codes: 0 success, 1 input or configuration error, 2 the optimiser did
not converge (the fit report is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .data import CompetingRisksDataset
from .distributions import Family, LinkedParams, survival
from .errors import (ConfigurationError, DefcureError, NonConvergenceError,
                     StudyAbortedError)
from .estimation import FitConfig, default_initial_params, fit_mle
from .io import (curves_csv, dumps_json, fit_report, monte_carlo_csv, params_from_report,
                 read_dataset_csv, write_text)
from .simulation import SimScenario, default_fit_config, run_monte_carlo
from .turnbull import survival_curve, turnbull_fit

log = logging.getLogger("defcure")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2
CURVE_GRID_POINTS = 200
PRESETS = {"table1": SimScenario.table1, "table3": SimScenario.table3}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for non-convergence here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _levels(text):
    """Confidence levels as ``0.95,0.90`` or as alphas ``0.05,0.10``."""
    out = []
    for item in _csv_list(text):
        v = float(item)
        if not 0 < v < 1:
            raise argparse.ArgumentTypeError(f"level {item} outside (0, 1)")
        out.append(round(1 - v, 12) if v > 0.5 else v)
    return tuple(sorted(set(out)))


def _profile(text):
    try:
        return tuple(float(v) for v in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"profile {text!r} is not a list of numbers") from None


def _family(text):
    try:
        return Family.parse(text)
    except ConfigurationError:
        raise argparse.ArgumentTypeError(
            f"unknown family {text!r} (choose gompertz or inverse-gaussian)") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonnegative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="defcure",
                     description="Defective cure-rate models for interval-censored "
                                 "competing-risks data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit a model to a dataset CSV and write a JSON report")
    fit.add_argument("--in", dest="input", required=True, help="dataset CSV")
    fit.add_argument("--out", required=True, help="report JSON path")
    fit.add_argument("--family", required=True, type=_family,
                     help="gompertz or inverse-gaussian")
    fit.add_argument("--causes", type=_positive_int,
                     help="number of causes (default: largest cause code)")
    fit.add_argument("--covariates", type=_csv_list,
                     help="comma-separated covariate columns (default: all extra columns)")
    fit.add_argument("--levels", type=_levels, default=(0.05, 0.10),
                     help="confidence levels, e.g. 0.95,0.90 (default)")
    fit.add_argument("--profile", type=_profile, action="append", default=[],
                     help="covariate values for cure-fraction reporting; repeatable")
    fit.add_argument("--seed", type=int, default=0, help="multistart seed")
    fit.add_argument("--multistarts", type=_positive_int, default=5)
    fit.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)

    sim = sub.add_parser("simulate", help="run a Monte Carlo study and write a CSV summary")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="scenario JSON file")
    src.add_argument("--scenario", choices=sorted(PRESETS), help="built-in scenario")
    sim.add_argument("--out", required=True, help="CSV path; a JSON summary goes next to it")
    sim.add_argument("--family", type=_family,
                     help="must match the scenario family when given")
    sim.add_argument("--n", type=_positive_int, help="sample size override")
    sim.add_argument("--reps", type=_nonnegative_int, help="replications override")
    sim.add_argument("--seed", type=int, help="seed override")
    sim.add_argument("--levels", type=_levels, default=(0.05, 0.10))
    sim.add_argument("--multistarts", type=_positive_int, default=1)
    sim.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)

    cur = sub.add_parser("curves", help="Turnbull curves per stratum, optional model overlay")
    cur.add_argument("--in", dest="input", required=True, help="dataset CSV")
    cur.add_argument("--out", required=True, help="curves CSV path")
    cur.add_argument("--model", help="fit report JSON for a parametric overlay")
    cur.add_argument("--causes", type=_positive_int)
    cur.add_argument("--covariates", type=_csv_list)
    cur.add_argument("--stratify", help="covariate column to split on")
    cur.add_argument("--threshold", type=float,
                     help="split value: stratum < threshold and >= threshold (default: median)")
    cur.add_argument("--cause", type=_positive_int,
                     help="curve for one cause, other causes treated as censored")
    return parser


def invocation(args, exclude=("out", "threads", "verbose")) -> dict:
    """Options that determine the output, plus the package version.

    The output path and thread count are left out so reports are byte-identical
    across destinations and degrees of parallelism.
    """
    opts = {}
    for key, value in sorted(vars(args).items()):
        if key in exclude:
            continue
        if isinstance(value, Family):
            value = value.value
        opts[key] = value
    return {"version": __version__, "options": opts}


# -- fit -----------------------------------------------------------------------------

def cmd_fit(args) -> int:
    ds = read_dataset_csv(args.input, args.covariates, args.causes)
    for prof in args.profile:
        if len(prof) != ds.num_covariates:
            raise ConfigurationError(
                f"--profile has {len(prof)} values, dataset has {ds.num_covariates} covariates")
    cfg = FitConfig(family=args.family, initial_params=default_initial_params(args.family, ds),
                    confidence_levels=args.levels, multistart_count=args.multistarts,
                    seed=args.seed, threads=args.threads)
    profiles = args.profile or [tuple(ds.covariates.mean(axis=0))]
    code = EXIT_OK
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            fit = fit_mle(ds, cfg)
        except NonConvergenceError as exc:
            fit = exc.best
            code = EXIT_NONCONVERGENCE
            log.error("fit did not converge: %s", exc)
    report = fit_report(fit, ds, profiles, invocation(args))
    write_text(args.out, dumps_json(report))
    return code


# -- simulate ------------------------------------------------------------------------

def load_scenario(args) -> SimScenario:
    if args.scenario:
        spec = {"preset": args.scenario}
    else:
        try:
            with open(args.input, encoding="utf-8") as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read scenario {args.input}: {exc}") from None
    if not isinstance(spec, dict):
        raise ConfigurationError("scenario must be a JSON object")

    n = args.n or spec.get("n", 100)
    reps = args.reps if args.reps is not None else spec.get("replications", 100)
    seed = args.seed if args.seed is not None else spec.get("seed", 0)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigurationError(f"replications must be a positive integer, got {reps}")
    try:
        if "preset" in spec:
            if spec["preset"] not in PRESETS:
                raise ConfigurationError(f"unknown preset {spec['preset']!r}")
            sc = PRESETS[spec["preset"]](int(n), reps, int(seed))
        else:
            family = Family.parse(spec["family"])
            truth = LinkedParams(family, spec["gammas"], spec["betas"])
            sc = SimScenario(family, truth, int(n), reps, int(seed),
                             tuple(spec.get("interval_len_range", (0.2, 0.7))),
                             tuple(spec.get("tail_rate_range", (0.1, 1.0))))
    except KeyError as exc:
        raise ConfigurationError(f"scenario is missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid scenario: {exc}") from None
    if args.family is not None and args.family is not sc.family:
        raise ConfigurationError(
            f"--family {args.family.value} conflicts with scenario family {sc.family.value}")
    return sc


def _summary_path(out):
    root, _ = os.path.splitext(out)
    return root + ".json"


def cmd_simulate(args) -> int:
    sc = load_scenario(args)
    cfg = default_fit_config(sc, confidence_levels=args.levels,
                             multistart_count=args.multistarts)

    def progress(done, total):
        if done % max(1, total // 10) == 0 or done == total:
            log.info("replication %d/%d", done, total)

    report = run_monte_carlo(sc, cfg, workers=args.threads, progress=progress)
    write_text(args.out, monte_carlo_csv(report))
    summary = report.to_dict()
    summary["invocation"] = invocation(args)
    write_text(_summary_path(args.out), dumps_json(summary))
    return EXIT_OK


# -- curves --------------------------------------------------------------------------

def curve_grid(ds: CompetingRisksDataset) -> np.ndarray:
    ends = np.concatenate([ds.left, ds.right])
    ends = ends[np.isfinite(ends)]
    top = float(ends.max()) if ends.size else 1.0
    grid = np.concatenate([[0.0], ends, np.linspace(0.0, top, CURVE_GRID_POINTS)])
    return np.unique(grid)


def turnbull_intervals(ds: CompetingRisksDataset, cause=None):
    out = []
    for obs in ds.observations:
        if cause is not None and obs.cause not in (0, cause):
            # failure from another cause: still event-free from this cause up to left
            out.append((obs.left, math.inf))
        else:
            out.append((obs.left, obs.right))
    return out


def model_survival(lp: LinkedParams, x, t, cause=None) -> float:
    from .distributions import link_eval

    causes = [cause] if cause else range(1, lp.num_causes + 1)
    s = 1.0
    for j in causes:
        a, b = link_eval(lp, j, x)
        s *= float(survival(lp.family, a, b, t))
    return s


def strata(ds: CompetingRisksDataset, column, threshold):
    if column is None:
        return [("all", ds)]
    names = list(ds.covariate_names or ())
    if column not in names:
        raise ConfigurationError(f"stratification column {column!r} not found "
                                 f"(covariates: {', '.join(names) or 'none'})")
    values = ds.covariates[:, names.index(column)]
    if threshold is None:
        threshold = float(np.median(values))
    label = format(threshold, "g")
    out = []
    for name, mask in ((f"{column}<{label}", values < threshold),
                       (f"{column}>={label}", values >= threshold)):
        if mask.any():
            out.append((name, ds.subset(mask)))
    return out


def cmd_curves(args) -> int:
    if args.threshold is not None and args.stratify is None:
        raise ConfigurationError("--threshold requires --stratify")
    covariates = args.covariates
    if covariates is not None and args.stratify and args.stratify not in covariates:
        covariates = covariates + [args.stratify]
    ds = read_dataset_csv(args.input, covariates, args.causes)
    if args.cause is not None and args.cause > ds.num_causes:
        raise ConfigurationError(f"--cause {args.cause} exceeds {ds.num_causes} causes")
    lp = None
    if args.model:
        try:
            with open(args.model, encoding="utf-8") as fh:
                report = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read model {args.model}: {exc}") from None
        lp = params_from_report(report)
        fitted_names = report.get("covariate_names", [])
        names = list(ds.covariate_names or ())
        missing = [c for c in fitted_names if c not in names]
        if missing:
            raise ConfigurationError(f"model covariates not in dataset: {missing}")
        model_cols = [names.index(c) for c in fitted_names]
        if lp.num_covariates != len(model_cols):
            raise ConfigurationError("model report covariates do not match its parameters")

    rows = []
    for name, part in strata(ds, args.stratify, args.threshold):
        est = turnbull_fit(turnbull_intervals(part, args.cause))
        if not est.converged:
            log.warning("stratum %s: Turnbull EM stopped after %d iterations", name,
                        est.iterations)
        grid = curve_grid(part)
        s_np = survival_curve(est, grid)
        if lp is not None:
            # overlay at the stratum's mean covariate profile
            xbar = part.covariates[:, model_cols].mean(axis=0)
            s_model = [model_survival(lp, xbar, t, args.cause) for t in grid]
        else:
            s_model = [None] * len(grid)
        rows.extend((name, t, s, m) for t, s, m in zip(grid, s_np, s_model))
    write_text(args.out, curves_csv(rows))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "curves": cmd_curves}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StudyAbortedError as exc:
        print(f"defcure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DefcureError, ValueError, OSError) as exc:
        print(f"defcure: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
