"""Core multinomial logistic regression quantities.

Everything downstream (solver, ACV, SAACV, literal CV) is built from the
functions here: overlaps, softmax probabilities, per-sample negative
log-likelihoods, the per-sample gradient vectors ``b`` and Hessian blocks
``F``, and the cost-function Hessian restricted to the active set.

Labels are stored 0-based (``0 .. L-1``) in memory. File formats use
1-based labels; conversion happens in :mod:`acvmlr.io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

PROB_FLOOR = 1e-300


class ContractError(ValueError):
    """Raised when inputs violate a documented shape or domain contract."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (rows are samples) with 0-based class labels."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ContractError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ContractError("features contain non-finite values")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ContractError("labels must be 1-D with one entry per sample")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise ContractError("labels must be integers")
        y = y.astype(np.int64)
        L = int(self.n_classes)
        if L < 2:
            raise ContractError("need at least two classes")
        if y.min() < 0 or y.max() >= L:
            raise ContractError(f"labels must lie in 0..{L - 1}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", L)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def one_hot(self) -> np.ndarray:
        Y = np.zeros((self.n_samples, self.n_classes))
        Y[np.arange(self.n_samples), self.labels] = 1.0
        return Y

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.n_classes)

    def sigma_x2(self) -> float:
        """Mean squared feature entry over all samples and features."""
        return float(np.mean(self.features ** 2))


@dataclass
class ActiveSet:
    """Nonzero (class, feature) pairs of a weight matrix.

    ``classes[k], features[k]`` is the k-th active pair; pairs are sorted by
    feature first, then class. ``per_feature`` maps each feature index that
    has at least one active class to the tuple of its active classes.
    """

    classes: np.ndarray
    features: np.ndarray
    n_classes: int
    n_features: int
    per_feature: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.classes.shape[0])

    @property
    def pairs(self):
        return set(zip(self.classes.tolist(), self.features.tolist()))

    def class_indicator(self) -> np.ndarray:
        """K x L matrix E with E[k, a] = 1 iff pair k belongs to class a."""
        E = np.zeros((self.size, self.n_classes))
        E[np.arange(self.size), self.classes] = 1.0
        return E


def active_set(weights: np.ndarray) -> ActiveSet:
    """Active set of ``weights`` (exact nonzeros), sorted by (feature, class)."""
    W = np.asarray(weights)
    feats, classes = np.nonzero(W.T)
    per_feature: Dict[int, Tuple[int, ...]] = {}
    for i, a in zip(feats.tolist(), classes.tolist()):
        per_feature.setdefault(i, ())
        per_feature[i] = per_feature[i] + (a,)
    return ActiveSet(
        classes=classes.astype(np.int64),
        features=feats.astype(np.int64),
        n_classes=W.shape[0],
        n_features=W.shape[1],
        per_feature=per_feature,
    )


def overlaps(dataset: Dataset, weights: np.ndarray) -> np.ndarray:
    """M x L matrix of overlaps ``u[mu, a] = x_mu . w_a``."""
    W = np.asarray(weights, dtype=np.float64)
    if W.ndim != 2 or W.shape != (dataset.n_classes, dataset.n_features):
        raise ContractError(
            f"weights shape {W.shape} does not match (L, N) = "
            f"({dataset.n_classes}, {dataset.n_features})"
        )
    return dataset.features @ W.T


def softmax_probs(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=np.float64)
    Z = U - U.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def nll_per_sample(P: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, int]:
    """Per-sample negative log-likelihood and the number of floored probabilities.

    Probabilities that are exactly zero (or below ``PROB_FLOOR``) are clamped
    before taking the log so the result stays finite.
    """
    labels = np.asarray(labels)
    p = P[np.arange(P.shape[0]), labels]
    n_clamped = int(np.count_nonzero(p < PROB_FLOOR))
    return -np.log(np.maximum(p, PROB_FLOOR)), n_clamped


def nll_from_overlaps(U: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample NLL computed directly from overlaps via log-sum-exp.

    More accurate than going through probabilities when the true-class
    probability underflows.
    """
    U = np.asarray(U, dtype=np.float64)
    m = U.max(axis=1)
    lse = m + np.log(np.exp(U - m[:, None]).sum(axis=1))
    return lse - U[np.arange(U.shape[0]), labels]


def mean_loss(q) -> float:
    """Mean of per-sample losses; exact for constant vectors (two-pass, compensated)."""
    q = np.asarray(q, dtype=np.float64).ravel()
    m = math.fsum(q) / q.size
    return m + math.fsum(q - m) / q.size


def training_error(dataset: Dataset, weights: np.ndarray) -> float:
    return mean_loss(nll_from_overlaps(overlaps(dataset, weights), dataset.labels))


def grad_b(P: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of each q_mu with respect to its overlap vector: ``p - onehot(y)``."""
    B = np.array(P, dtype=np.float64, copy=True)
    B[np.arange(B.shape[0]), np.asarray(labels)] -= 1.0
    return B


def hessian_f(p_row: np.ndarray) -> np.ndarray:
    p = np.asarray(p_row, dtype=np.float64)
    return np.diag(p) - np.outer(p, p)


def hessian_f_batch(P: np.ndarray) -> np.ndarray:
    """Stack of ``F^mu`` matrices, shape (M, L, L)."""
    L = P.shape[1]
    return P[:, :, None] * np.eye(L)[None] - P[:, :, None] * P[:, None, :]


@dataclass
class SampleBlocks:
    U: np.ndarray
    P: np.ndarray
    B: np.ndarray


def sample_blocks(dataset: Dataset, weights: np.ndarray) -> SampleBlocks:
    U = overlaps(dataset, weights)
    P = softmax_probs(U)
    return SampleBlocks(U=U, P=P, B=grad_b(P, dataset.labels))


def assemble_hessian(dataset: Dataset, P: np.ndarray, active: ActiveSet, lam2: float) -> np.ndarray:
    """Cost-function Hessian over the active set.

    Entry ((a,i),(b,j)) is ``sum_mu x_mu_i x_mu_j F^mu_ab + lam2 delta``. Built
    from per-pair columns in O(M K^2) without materialising the repetition
    matrices.
    """
    K = active.size
    if K == 0:
        return np.zeros((0, 0))
    Z = dataset.features[:, active.features]
    A = Z * P[:, active.classes]
    same = active.classes[:, None] == active.classes[None, :]
    G = np.where(same, A.T @ Z, 0.0) - A.T @ A
    G = 0.5 * (G + G.T)
    G[np.diag_indices(K)] += lam2
    return G
