"""Literal k-fold / leave-one-out cross-validation by refitting.

Fold fits keep the absolute penalty coefficients of the full problem
(``lam1 = M * lambda_tilde * eta`` with the full M), so that ``k = M``
reproduces the leave-one-out objective "full cost minus the held-out
sample's loss" exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .model import ContractError, Dataset, mean_loss, nll_from_overlaps
from .solver import FitResult, HyperParams, fit


@dataclass(frozen=True)
class CvFolds:
    k: int
    assignment: np.ndarray
    seed: int

    def members(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def make_folds(n_samples: int, k: int, seed: int = 0, labels: Optional[np.ndarray] = None,
               stratify: bool = False) -> CvFolds:
    """Shuffle-and-deal fold assignment (0-based fold indices).

    Fold sizes differ by at most one. With ``stratify=True`` samples are
    dealt class by class so each fold gets a near-equal share of every class.
    """
    if not 2 <= k <= n_samples:
        raise ContractError(f"k must lie in [2, {n_samples}], got {k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_samples)
    if stratify:
        if labels is None:
            raise ContractError("stratified folds need labels")
        order = order[np.argsort(np.asarray(labels)[order], kind="stable")]
    assignment = np.empty(n_samples, dtype=np.int64)
    assignment[order] = np.arange(n_samples) % k
    return CvFolds(k=k, assignment=assignment, seed=seed)


@dataclass
class CvResult:
    eps_cv: float
    fold_losses: np.ndarray
    per_sample_loss: np.ndarray
    fold_converged: np.ndarray
    folds: CvFolds
    fold_fits: Optional[List[FitResult]] = None

    @property
    def valid(self) -> bool:
        return bool(np.all(self.fold_converged))


def fold_hyper(hyper: HyperParams, n_full: int, n_train: int) -> HyperParams:
    """Hyperparameters for a training subset with the full-data absolute penalties."""
    return hyper.rescaled(n_full / n_train)


def literal_cv(
    dataset: Dataset,
    hyper: HyperParams,
    k: int,
    seed: int = 0,
    tol_delta: float = 1e-8,
    *,
    warm_start: Optional[np.ndarray] = None,
    cold_start: bool = False,
    max_iter: int = 100_000,
    stratify: bool = False,
    fixed_zero_class: Optional[int] = None,
    keep_fits: bool = False,
) -> CvResult:
    """k-fold CV error (mean held-out NLL); ``k = M`` is leave-one-out.

    Fold fits are warm-started from ``warm_start`` (normally the full-data
    solution) unless ``cold_start`` is set.
    """
    M = dataset.n_samples
    folds = make_folds(M, k, seed, dataset.labels, stratify)
    per_sample = np.empty(M)
    fold_losses = np.empty(k)
    conv = np.zeros(k, dtype=bool)
    fits = [] if keep_fits else None
    init = None if cold_start else warm_start
    for f in range(k):
        test = folds.members(f)
        train_mask = np.ones(M, dtype=bool)
        train_mask[test] = False
        train = dataset.subset(train_mask)
        res = fit(train, fold_hyper(hyper, M, train.n_samples), tol_delta, max_iter, init,
                  fixed_zero_class=fixed_zero_class)
        U = dataset.features[test] @ res.weights.T
        q = nll_from_overlaps(U, dataset.labels[test])
        per_sample[test] = q
        fold_losses[f] = mean_loss(q)
        conv[f] = res.converged
        if keep_fits:
            fits.append(res)
    return CvResult(
        eps_cv=mean_loss(per_sample),
        fold_losses=fold_losses,
        per_sample_loss=per_sample,
        fold_converged=conv,
        folds=folds,
        fold_fits=fits,
    )


def normalized_error_difference(approx: float, literal: float) -> float:
    """``(approx - literal) / literal``; NaN when ``literal <= 0``."""
    if not literal > 0:
        return float("nan")
    return (approx - literal) / literal


def loo_subset(
    dataset: Dataset,
    hyper: HyperParams,
    index,
    tol_delta: float = 1e-8,
    *,
    warm_start: Optional[np.ndarray] = None,
    max_iter: int = 100_000,
    fixed_zero_class: Optional[int] = None,
):
    """Literal leave-one-out losses for the samples in ``index`` only.

    Returns ``(losses, converged)`` aligned with ``index``. Averaging the
    losses gives an unbiased estimate of the full LOO error at a fraction of
    the cost when M is large.
    """
    index = np.asarray(index, dtype=np.int64)
    M = dataset.n_samples
    losses = np.empty(index.size)
    conv = np.zeros(index.size, dtype=bool)
    for n, mu in enumerate(index):
        keep = np.ones(M, dtype=bool)
        keep[mu] = False
        res = fit(dataset.subset(keep), fold_hyper(hyper, M, M - 1), tol_delta, max_iter,
                  warm_start, fixed_zero_class=fixed_zero_class)
        u = dataset.features[mu] @ res.weights.T
        losses[n] = nll_from_overlaps(u[None, :], dataset.labels[mu:mu + 1])[0]
        conv[n] = res.converged
    return losses, conv
