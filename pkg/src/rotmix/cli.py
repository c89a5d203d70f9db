"""Command-line front end: ``rotmix {fit,sample,eval,sweep}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

import numpy as np

from . import data_io
from .errors import (DataError, DegenerateFitError, DomainError, ModelFormatError,
                     NonFiniteObjectiveError, RotmixError)
from .estimator import (STATUS_CONVERGED, FitConfig, MixtureModel, evaluate, fit,
                        initialize, weight_update)
from .exponential_family import FAMILIES, get_family
from .transport import make_regularizer, plan_entropy

log = logging.getLogger("rotmix")

EXIT_OK = 0
EXIT_MAX_ITERS = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4
EXIT_VALIDATION = 5

EXIT_CODES_HELP = """\
exit codes:
  0  success (fit converged)
  2  fit stopped at --max-iters without converging
  3  degenerate fit (all components pruned, too few distinct points,
     non-finite objective)
  4  I/O error (missing or unreadable file)
  5  validation error (bad flags, malformed data or model document)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which is taken by max-iters here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None or action.required:
            return action.help
        return super()._get_help_string(action)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not np.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a finite nonnegative number, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"expected a finite positive number, got {text}")
    return value


def parse_lambdas(text: str) -> np.ndarray:
    """``geometric:lo,hi,steps`` or an explicit comma-separated list."""
    text = text.strip()
    if text.startswith("geometric:"):
        parts = text[len("geometric:"):].split(",")
        if len(parts) != 3:
            raise ValueError("geometric grid needs lo,hi,steps")
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
        if not (0 < lo <= hi) or steps < 1:
            raise ValueError("geometric grid needs 0 < lo <= hi and steps >= 1")
        values = np.geomspace(lo, hi, steps)
    else:
        values = np.array([float(p) for p in text.split(",") if p.strip()])
    if values.size == 0:
        raise ValueError("lambda list is empty")
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise ValueError("lambdas must be finite and nonnegative")
    if np.any(np.diff(values) < 0):
        raise ValueError("lambdas must be sorted ascending")
    return values


def parse_vectors(text: str) -> np.ndarray:
    """``"a,b;c,d"`` -> [[a, b], [c, d]]."""
    rows = [[float(v) for v in comp.split(",")] for comp in text.split(";") if comp.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"cannot parse component vectors from {text!r}")
    return np.array(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rotmix",
        description="Fit finite mixtures of exponential families by regularized optimal\n"
                    "transport (lambda=0: k-means, lambda=1: EM, large lambda: equal weights).",
        epilog=EXIT_CODES_HELP, formatter_class=_Formatter)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", metavar="{fit,sample,eval,sweep}")
    sub.required = True
    families = sorted(FAMILIES)

    p = sub.add_parser("fit", help="fit a mixture to CSV observations", epilog=EXIT_CODES_HELP,
                       formatter_class=_Formatter)
    p.add_argument("--input", required=True, help="observation CSV")
    p.add_argument("--family", required=True, choices=families, help="component family")
    p.add_argument("--k", required=True, type=_positive_int, help="number of components")
    _add_fit_flags(p)
    p.add_argument("--output", required=True, help="model document to write")
    p.add_argument("--trace", default=None, help="optional per-iteration trace CSV")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("sample", help="draw observations from a mixture", epilog=EXIT_CODES_HELP,
                       formatter_class=_Formatter)
    p.add_argument("--model", default=None, help="model document to sample from")
    p.add_argument("--family", default=None, choices=families,
                   help="inline model: component family (instead of --model)")
    p.add_argument("--weights", default=None,
                   help="inline model: comma-separated component weights")
    p.add_argument("--means", default=None,
                   help="inline model: expectation parameters, components separated by ';' "
                        "and coordinates by ',' (write --means=-3;3 for negative values)")
    p.add_argument("--n", required=True, type=_nonneg_int, help="number of draws")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("--with-labels", action="store_true",
                   help="append the 0-based generating component as a 'label' column")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="evaluate a model on observations", epilog=EXIT_CODES_HELP,
                       formatter_class=_Formatter)
    p.add_argument("--input", required=True, help="observation CSV")
    p.add_argument("--model", required=True, help="model document")
    p.add_argument("--lambda", dest="lam", metavar="LAMBDA", type=_nonneg_float, default=None,
                   help="regularization strength (default: the model's)")
    p.add_argument("--regularizer", choices=("entropic", "quadratic"), default=None,
                   help="regularizer (default: the model's)")
    p.add_argument("--dump-plan", default=None, help="optional CSV for the transport plan")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="fit or evaluate over a grid of lambdas",
                       epilog=EXIT_CODES_HELP, formatter_class=_Formatter)
    p.add_argument("--input", required=True, help="observation CSV")
    p.add_argument("--family", required=True, choices=families, help="component family")
    p.add_argument("--k", required=True, type=_positive_int, help="number of components")
    p.add_argument("--lambdas", required=True,
                   help="'geometric:lo,hi,steps' or an ascending comma-separated list")
    p.add_argument("--regularizer", choices=("entropic", "quadratic"), default="entropic",
                   help="regularizer for lambda > 0")
    p.add_argument("--init", choices=("kmeanspp", "random"), default="kmeanspp",
                   help="seeding method")
    p.add_argument("--seed", type=int, default=0, help="random seed, reused for every lambda")
    p.add_argument("--max-iters", type=_positive_int, default=500, help="iteration cap per fit")
    p.add_argument("--tol", type=_positive_float, default=1e-8,
                   help="relative objective change that stops a fit")
    p.add_argument("--one-step", action="store_true",
                   help="one plan update per lambda at a fixed model instead of full fits")
    p.add_argument("--model", default=None,
                   help="fixed model for --one-step (default: the seeded initial model)")
    p.add_argument("--output", required=True, help="CSV to write, one row per lambda")
    p.set_defaults(handler=cmd_sweep)
    return parser


def _add_fit_flags(p):
    p.add_argument("--lambda", dest="lam", metavar="LAMBDA", type=_nonneg_float, default=1.0,
                   help="regularization strength (0: hard assignments)")
    p.add_argument("--regularizer", choices=("entropic", "quadratic"), default="entropic",
                   help="regularizer for lambda > 0")
    p.add_argument("--init", choices=("kmeanspp", "random"), default="kmeanspp",
                   help="seeding method")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--max-iters", type=_positive_int, default=500, help="iteration cap")
    p.add_argument("--tol", type=_positive_float, default=1e-8,
                   help="relative objective change that stops the fit")


def _config(args, lam=None) -> FitConfig:
    return FitConfig(lam=args.lam if lam is None else float(lam), max_iters=args.max_iters,
                     rel_tol=args.tol, seed=args.seed,
                     init="random_points" if args.init == "random" else "kmeanspp",
                     regularizer=args.regularizer)


def cmd_fit(args) -> int:
    data = data_io.load_csv(args.input, args.family)
    family = get_family(args.family, data.dim)
    config = _config(args)
    model, _, trace = fit(family, data, args.k, config)
    data_io.save_model(model, trace, args.output, config)
    if args.trace:
        data_io.atomic_write_text(args.trace, data_io.trace_to_csv(trace, args.k))
    print(f"status={trace.status} objective={data_io.fmt_float(trace.final_objective)} "
          f"iterations={trace.iterations} k_active={model.k}")
    return EXIT_OK if trace.status == STATUS_CONVERGED else EXIT_MAX_ITERS


def cmd_sample(args) -> int:
    inline = [args.family, args.weights, args.means]
    if args.model is not None and any(v is not None for v in inline):
        raise UsageError("rotmix sample: --model conflicts with --family/--weights/--means")
    if args.model is not None:
        model = data_io.load_model(args.model).model()
    else:
        if any(v is None for v in inline):
            raise UsageError("rotmix sample: give --model or all of --family, --weights, --means")
        try:
            xis = parse_vectors(args.means)
            omega = np.array([float(w) for w in args.weights.split(",")])
        except ValueError as exc:
            raise UsageError(f"rotmix sample: {exc}") from exc
        model = MixtureModel(get_family(args.family, xis.shape[1]), omega, xis)
    points, labels = data_io.sample_points(model, args.n, args.seed)
    text = data_io.points_to_csv(points, labels if args.with_labels else None,
                                 dim=model.family.dim)
    data_io.atomic_write_text(args.output, text)
    print(f"samples={args.n} family={model.family.name} k={model.k} output={args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = data_io.load_model(args.model)
    model = doc.model()
    data = data_io.load_csv(args.input, model.family)
    lam = doc.lam if args.lam is None else args.lam
    reg = make_regularizer(args.regularizer or doc.regularizer, lam)
    obj, plan, nll, entropy = evaluate(model.family, model, data, reg)
    if args.dump_plan:
        data_io.atomic_write_text(args.dump_plan, data_io.plan_to_csv(plan, data.upsilon))
    mean_nll = float(np.dot(data.upsilon, nll))
    print(f"objective={data_io.fmt_float(obj)} mean_nll={data_io.fmt_float(mean_nll)} "
          f"mean_row_entropy={data_io.fmt_float(float(np.mean(entropy)))}")
    return EXIT_OK


SWEEP_FIELDS = ("lambda", "status", "objective", "iterations", "k_active", "mean_row_entropy")


def cmd_sweep(args) -> int:
    try:
        lambdas = parse_lambdas(args.lambdas)
    except ValueError as exc:
        raise UsageError(f"rotmix sweep: --lambdas: {exc}") from exc
    if args.model is not None and not args.one_step:
        raise UsageError("rotmix sweep: --model only applies with --one-step")
    data = data_io.load_csv(args.input, args.family)
    family = get_family(args.family, data.dim)

    fixed = None
    if args.one_step:
        if args.model is not None:
            fixed = data_io.load_model(args.model).model()
            if fixed.family.name != family.name or fixed.family.dim != family.dim:
                raise DataError("model family/dimension does not match the data")
        else:
            fixed = initialize(family, data, args.k, _config(args, lam=0.0))
    k = fixed.k if fixed is not None else args.k

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(SWEEP_FIELDS) + [f"omega_{j + 1}" for j in range(k)] + ["message"])
    failures = 0
    for lam in lambdas:
        try:
            if fixed is not None:
                reg = make_regularizer(args.regularizer, lam)
                obj, plan, _, entropy = evaluate(family, fixed, data, reg)
                omega = weight_update(plan)
                row = [data_io.fmt_float(lam), "one_step", data_io.fmt_float(obj), 0,
                       int(np.count_nonzero(omega)), data_io.fmt_float(float(np.mean(entropy)))]
            else:
                model, plan, trace = fit(family, data, args.k, _config(args, lam=lam))
                omega = model.omega
                mean_entropy = float(np.mean(plan_entropy(plan)))
                row = [data_io.fmt_float(lam), trace.status,
                       data_io.fmt_float(trace.final_objective), trace.iterations, model.k,
                       data_io.fmt_float(mean_entropy)]
            omegas = [data_io.fmt_float(v) for v in omega] + [""] * (k - len(omega))
            w.writerow(row + omegas + [""])
        except (DegenerateFitError, NonFiniteObjectiveError, DomainError) as exc:
            failures += 1
            status = "degenerate" if isinstance(exc, (DegenerateFitError,
                                                     NonFiniteObjectiveError)) else "error"
            log.warning("lambda=%g failed: %s", lam, exc)
            w.writerow([data_io.fmt_float(lam), status, "", "", "", ""] + [""] * k + [str(exc)])
    data_io.atomic_write_text(args.output, buf.getvalue())
    print(f"lambdas={lambdas.size} failed={failures} output={args.output}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except (DegenerateFitError, NonFiniteObjectiveError) as exc:
        print(f"rotmix {args.command}: degenerate fit: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        where = f": {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"rotmix {args.command}: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, ModelFormatError, DomainError, RotmixError) as exc:
        print(f"rotmix {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
