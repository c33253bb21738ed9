"""Two-class (logit) approximate leave-one-out error.

The logit model is the two-class MLR with the weights of class 0 pinned to
zero, so the Hessian has no shift-symmetry zero mode and each sample's
correction collapses to a scalar. :func:`acv_glm` is the general routine for
any scalar-overlap model given the first and second derivatives of the
per-sample loss; :func:`acv_logit` plugs in the logit loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from .acv import AcvResult, zero_mode_removed_inverse
from .model import ContractError, Dataset, mean_loss
from .solver import FitResult, HyperParams, fit

DENOM_MIN = 1e-12

# (u, y) -> (q, dq/du, d2q/du2), all arrays shaped like u
LossDerivatives = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class LogitFit:
    weights: np.ndarray
    hyper: HyperParams
    converged: bool = True

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.weights)


def binary_labels(labels) -> np.ndarray:
    """Map labels coded {0,1} or {1,2} to y in {0,1} (class 1 of {1,2} -> 0)."""
    y = np.asarray(labels).astype(np.int64)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        return y
    if vals <= {1, 2}:
        return y - 1
    raise ContractError(f"binary labels must be coded {{0,1}} or {{1,2}}, got {sorted(vals)}")


def logit_derivatives(u, y):
    """First and second derivatives of the logit loss w.r.t. the overlap."""
    u = np.asarray(u, dtype=np.float64)
    p0 = expit(-u)
    first = (np.asarray(y) == 0).astype(np.float64) - p0
    second = p0 * expit(u)
    return first, second


def logit_loss(u, y):
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y)
    q = -np.where(y == 1, log_expit(u), log_expit(-u))
    d1, d2 = logit_derivatives(u, y)
    return q, d1, d2


def fit_logit(dataset: Dataset, hyper: HyperParams, tol_delta: float = 1e-8,
              warm_start=None, max_iter: int = 100_000) -> LogitFit:
    """Fit the l1/elastic-net logit model via the zero-gauge two-class MLR."""
    if dataset.n_classes != 2:
        raise ContractError("logit fit needs exactly two classes")
    W0 = None
    if warm_start is not None:
        W0 = np.zeros((2, dataset.n_features))
        W0[1] = warm_start
    res = fit(dataset, hyper, tol_delta, max_iter, W0, fixed_zero_class=0)
    return LogitFit(res.weights[1].copy(), hyper, res.converged)


def as_mlr_fit(lfit: LogitFit) -> FitResult:
    """Embed a logit fit as a zero-gauge two-class MLR fit."""
    W = np.zeros((2, lfit.weights.size))
    W[1] = lfit.weights
    return FitResult(W, lfit.hyper, float("nan"), lfit.converged, 0, float("nan"),
                     fixed_zero_class=0)


def acv_glm(X: np.ndarray, y: np.ndarray, w: np.ndarray, loss: LossDerivatives, lam2: float) -> AcvResult:
    """Approximate LOO error for a scalar-overlap model ``u = x . w``."""
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    M = X.shape[0]
    u = X @ w
    q, d1, d2 = loss(u, y)
    act = np.flatnonzero(w)
    if act.size == 0:
        return AcvResult(mean_loss(q), q, u[:, None].copy())
    Xa = X[:, act]
    G = (Xa * d2[:, None]).T @ Xa
    G[np.diag_indices(act.size)] += lam2
    try:
        c = linalg.cho_factor(G, lower=True, check_finite=False)
        T = linalg.cho_solve(c, Xa.T, check_finite=False)
    except linalg.LinAlgError:
        ginv, _ = zero_mode_removed_inverse(G, 0.0)
        T = ginv @ Xa.T
    cmu = np.einsum("mk,km->m", Xa, T)
    denom = 1.0 - d2 * cmu
    bad = denom <= DENOM_MIN
    corr = np.where(bad, cmu * d1, cmu * d1 / np.where(bad, 1.0, denom))
    u_loo = u + corr
    q_loo = loss(u_loo, y)[0]
    return AcvResult(
        looe=mean_loss(q_loo),
        per_sample_nll=q_loo,
        loo_overlaps=u_loo[:, None],
        ill_conditioned_samples=np.flatnonzero(bad).tolist(),
        op_count={"hessian": M * act.size ** 2, "inverse": act.size ** 3},
        active_size=int(act.size),
    )


def acv_logit(dataset: Dataset, lfit: LogitFit, lam2: float = None) -> AcvResult:
    """Approximate LOO error of a logit fit.

    ``lam2`` defaults to the absolute l2 coefficient implied by the fit's
    hyperparameters.
    """
    if dataset.n_classes != 2:
        raise ContractError("acv_logit needs a two-class dataset")
    if lam2 is None:
        lam2 = lfit.hyper.lam2(dataset.n_samples)
    y = binary_labels(dataset.labels)
    return acv_glm(dataset.features, y, lfit.weights, logit_loss, lam2)
