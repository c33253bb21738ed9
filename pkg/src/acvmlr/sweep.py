"""Regularisation-path sweeps combining the fit with every CV estimator."""

from __future__ import annotations

import logging
import time
from typing import Iterable, Optional, Sequence

import numpy as np

from .acv import DegenerateHessianError, acv
from .datagen import rescale_by_class
from .io import dataset_digest
from .literalcv import literal_cv, normalized_error_difference
from .model import ContractError, Dataset, training_error
from .report import (
    STATUS_CONVERGED,
    STATUS_FAILED,
    STATUS_NOT_CONVERGED,
    CvReport,
    LambdaRecord,
)
from .saacv import SaacvError, saacv
from .solver import fit_path, lambda_grid, lambda_max

log = logging.getLogger(__name__)


def parse_estimators(spec: str, n_samples: int):
    """Parse ``"acv,saacv,literal:10"`` into (names, k). ``literal:loo`` means k = M."""
    names, k = set(), None
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if tok in ("acv", "saacv"):
            names.add(tok)
        elif tok.startswith("literal"):
            _, _, arg = tok.partition(":")
            arg = arg or "10"
            k = n_samples if arg.lower() in ("loo", "m") else int(arg)
            names.add("literal")
        else:
            raise ContractError(f"unknown estimator {tok!r}")
    return names, k


def mid_path_mask(grid: Sequence[float], exclude_decades: float = 1.0) -> np.ndarray:
    """Grid points at least ``exclude_decades`` above the smallest lambda."""
    g = np.asarray(grid, dtype=float)
    return g >= g.min() * 10 ** exclude_decades * (1 - 1e-12)


def _ned(approx, literal):
    if approx is None or literal is None:
        return None
    v = normalized_error_difference(approx, literal)
    return None if np.isnan(v) else v


def run_sweep(
    dataset: Dataset,
    *,
    lambdas: Optional[Iterable[float]] = None,
    n_lambda: int = 50,
    decades: float = 4.0,
    eta: float = 1.0,
    estimators: Iterable[str] = ("acv", "saacv"),
    kfold: Optional[int] = None,
    seed: int = 0,
    tol_delta: float = 1e-8,
    theta: float = 1e-6,
    max_iter: int = 100_000,
    rescale: bool = False,
    stratify: bool = False,
    cold_start: bool = False,
    provenance: Optional[dict] = None,
) -> CvReport:
    """Fit a lambda path and evaluate the requested estimators at every point."""
    estimators = set(estimators)
    if "literal" in estimators and kfold is None:
        kfold = 10
    if kfold is not None:
        estimators.add("literal")
    prov = dict(provenance or {})
    prov["dataset_digest"] = dataset_digest(dataset)
    class_penalty = None
    if rescale:
        dataset, factors, empty = rescale_by_class(dataset)
        class_penalty = tuple(float(f) for f in factors)
        prov["class_factors"] = list(class_penalty)
        if empty:
            prov["empty_classes"] = empty

    if lambdas is None:
        grid = lambda_grid(lambda_max(dataset, eta, class_penalty), n_lambda, decades)
    else:
        grid = np.asarray(list(lambdas), dtype=float)
    if grid.size == 0:
        raise ContractError("empty lambda grid")

    t0 = time.perf_counter()
    fits = fit_path(dataset, grid, eta, tol_delta, max_iter, class_penalty=class_penalty)
    path_time = time.perf_counter() - t0
    fit_time = path_time / len(fits)
    sigma_x2 = dataset.sigma_x2()

    records = []
    for lam, res in zip(grid, fits):
        flags = []
        status = STATUS_CONVERGED if res.converged else STATUS_NOT_CONVERGED
        if not res.converged:
            flags.append("fit_not_converged")
        rec = LambdaRecord(
            lambda_tilde=float(lam),
            status=status,
            training_error=training_error(dataset, res.weights),
            active_set_size=int(np.count_nonzero(res.weights)),
            kkt_violation=float(res.kkt_violation),
            wall_times={"fit": fit_time, "fit_path_total": path_time},
        )
        if "acv" in estimators:
            t = time.perf_counter()
            try:
                a = acv(dataset, res)
                rec.eps_acv = a.looe
                rec.zero_modes_removed = a.zero_modes_removed
                rec.op_counts["acv"] = a.ops
                if a.ill_conditioned_samples:
                    flags.append(f"acv_ill_conditioned:{len(a.ill_conditioned_samples)}")
                if a.n_clamped:
                    flags.append(f"acv_clamped:{a.n_clamped}")
            except DegenerateHessianError:
                flags.append("acv_degenerate_hessian")
                rec.status = STATUS_FAILED
            rec.wall_times["acv"] = time.perf_counter() - t
        if "saacv" in estimators:
            t = time.perf_counter()
            try:
                s, st = saacv(dataset, res, theta, sigma_x2=sigma_x2, return_state=True)
                rec.eps_saacv = s.looe
                rec.saacv_iterations = st.iterations
                rec.op_counts["saacv"] = s.ops
                if not st.converged:
                    flags.append("saacv_not_converged")
                if s.n_clamped:
                    flags.append(f"saacv_clamped:{s.n_clamped}")
            except SaacvError:
                flags.append("saacv_singular")
                rec.status = STATUS_FAILED
            rec.wall_times["saacv"] = time.perf_counter() - t
        if "literal" in estimators:
            t = time.perf_counter()
            cv = literal_cv(dataset, res.hyper, kfold, seed, tol_delta, warm_start=res.weights,
                            cold_start=cold_start, max_iter=max_iter, stratify=stratify)
            rec.eps_literal = cv.eps_cv
            if not cv.valid:
                flags.append(f"literal_folds_not_converged:{int((~cv.fold_converged).sum())}")
            rec.wall_times["literal"] = time.perf_counter() - t
            rec.ned_acv = _ned(rec.eps_acv, rec.eps_literal)
            rec.ned_saacv = _ned(rec.eps_saacv, rec.eps_literal)
        rec.flags = flags
        records.append(rec)

    prov.update({
        "seed": seed,
        "tol_delta": tol_delta,
        "theta": theta,
        "kfold": kfold,
        "estimators": sorted(estimators),
        "n_samples": dataset.n_samples,
        "n_features": dataset.n_features,
        "n_classes": dataset.n_classes,
        "rescale_by_class": rescale,
    })
    return CvReport(lambda_grid=[float(g) for g in grid], eta=eta, records=records, provenance=prov)


def all_failed(report: CvReport) -> bool:
    return all(r.status != STATUS_CONVERGED for r in report.records)
