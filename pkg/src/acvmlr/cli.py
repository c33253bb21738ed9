"""Command-line entry point: ``acvmlr generate | sweep | report``.

Exit codes: 0 success (flagged lambda points included), 2 bad input
(malformed spec, unparseable dataset, report version mismatch, empty grid),
3 the solver failed at every lambda point.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datagen import SynthSpec, generate
from .io import DatasetFormatError, add_constant_feature, load_dataset, save_dataset, save_weights
from .model import ContractError
from .report import CvReport, ReportError, to_csv, to_table
from .sweep import all_failed, parse_estimators, run_sweep

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("acvmlr")


class InputError(Exception):
    pass


def _spec_from_json(path) -> tuple:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read spec {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError("spec must be a JSON object")
    raw = dict(raw)
    fmt = raw.pop("format", "csv")
    allowed = {"N", "L", "alpha", "rho0", "sigma_xi2", "variant", "r_common", "corr",
               "amp_classes", "omega", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise InputError(f"unknown spec keys: {sorted(unknown)}")
    # spec files use 1-based class numbers
    if "amp_classes" in raw:
        raw["amp_classes"] = tuple(int(a) - 1 for a in raw["amp_classes"])
    try:
        return SynthSpec(**raw), fmt
    except (TypeError, ContractError) as exc:
        raise InputError(f"malformed spec: {exc}") from None


def cmd_generate(args) -> int:
    spec, fmt = _spec_from_json(args.spec)
    if args.seed is not None:
        spec = SynthSpec(**{**spec.__dict__, "seed": args.seed})
    fmt = args.format or fmt
    if fmt not in ("csv", "libsvm"):
        raise InputError(f"unknown format {fmt!r}")
    out = Path(args.out)
    w0, ds = generate(spec)
    save_dataset(out, ds, fmt)
    save_weights(out.with_suffix(".weights.csv"), w0)
    print(f"wrote {out} (M={ds.n_samples}, N={ds.n_features}, L={ds.n_classes})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        ds = load_dataset(args.dataset, args.input_format, args.n_classes)
    except (OSError, DatasetFormatError) as exc:
        raise InputError(str(exc)) from None
    if args.add_constant_feature:
        ds = add_constant_feature(ds)
    try:
        names, k = parse_estimators(args.estimators, ds.n_samples)
    except (ValueError, ContractError) as exc:
        raise InputError(str(exc)) from None
    if args.kfold is not None:
        k = ds.n_samples if args.kfold == 0 else args.kfold
    lambdas = None
    if args.lambdas:
        try:
            lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
        except ValueError:
            raise InputError(f"bad lambda list {args.lambdas!r}") from None
        if not lambdas:
            raise InputError("empty lambda grid")
    try:
        report = run_sweep(
            ds,
            lambdas=lambdas,
            n_lambda=args.n_lambda,
            decades=args.decades,
            eta=args.eta,
            estimators=names,
            kfold=k,
            seed=args.seed,
            tol_delta=args.delta,
            theta=args.theta,
            rescale=args.rescale_by_class,
            stratify=args.stratify,
            cold_start=args.cold_start,
            provenance={"dataset_file": Path(args.dataset).name,
                        "add_constant_feature": args.add_constant_feature},
        )
    except ContractError as exc:
        raise InputError(str(exc)) from None
    report.save(args.out, timings=not args.no_timings)
    if all_failed(report):
        print("solver failed at every lambda point", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote {args.out} ({len(report.records)} lambda points)")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = CvReport.load(args.report)
    except (OSError, ReportError) as exc:
        raise InputError(str(exc)) from None
    text = to_csv(report) if args.format == "csv" else to_table(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acvmlr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset from a JSON spec")
    g.add_argument("spec")
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("csv", "libsvm"))
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sweep", help="fit a lambda path and estimate CV errors")
    s.add_argument("dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--input-format", choices=("csv", "libsvm"))
    s.add_argument("--n-classes", type=int)
    s.add_argument("--lambdas", help="comma-separated descending lambda_tilde values")
    s.add_argument("--n-lambda", type=int, default=50)
    s.add_argument("--decades", type=float, default=4.0)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--estimators", default="acv,saacv",
                   help="comma list of acv, saacv, literal:K (literal:loo for K=M)")
    s.add_argument("--kfold", type=int, help="add literal K-fold CV (0 means leave-one-out)")
    s.add_argument("--delta", type=float, default=1e-8, help="solver tolerance")
    s.add_argument("--theta", type=float, default=1e-6, help="SAACV convergence threshold")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rescale-by-class", action="store_true")
    s.add_argument("--add-constant-feature", action="store_true",
                   help="append a penalised all-ones column (not an intercept)")
    s.add_argument("--stratify", action="store_true", help="stratify literal-CV folds by class")
    s.add_argument("--cold-start", action="store_true", help="fit literal-CV folds from zero")
    s.add_argument("--no-timings", action="store_true", help="omit wall times (byte-reproducible output)")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="render a report as a table or CSV")
    r.add_argument("report")
    r.add_argument("--format", choices=("table", "csv"), default="table")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
