"""Approximate leave-one-out error from a single full fit.

For each sample the leave-one-out overlap is predicted by a rank-L
Woodbury correction of the full-data overlap, using the active-set
restricted inverse Hessian of the cost function. When the l2 part of the
penalty is (numerically) absent the Hessian carries zero modes from the
softmax shift symmetry; they are projected out spectrally before inversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import linalg

from .model import (
    PROB_FLOOR,
    ActiveSet,
    Dataset,
    active_set,
    assemble_hessian,
    hessian_f_batch,
    mean_loss,
    nll_from_overlaps,
    sample_blocks,
)
from .solver import FitResult

EPS_ZERO = 1e-10
LAMBDA2_LARGE = 1e-6
COND_MAX = 1e12
_NLL_CAP = -np.log(PROB_FLOOR)


class DegenerateHessianError(np.linalg.LinAlgError):
    """Every eigenmode of the Hessian was classified as a zero mode."""


@dataclass
class AcvResult:
    looe: float
    per_sample_nll: np.ndarray
    loo_overlaps: np.ndarray
    zero_modes_removed: int = 0
    ill_conditioned_samples: List[int] = field(default_factory=list)
    n_clamped: int = 0
    converged: bool = True
    op_count: Dict[str, int] = field(default_factory=dict)
    active_size: int = 0

    @property
    def ops(self) -> int:
        return int(sum(self.op_count.values()))


def loo_nll(U_loo: np.ndarray, labels: np.ndarray):
    """Per-sample NLL at predicted overlaps, capped at -log(PROB_FLOOR)."""
    q = nll_from_overlaps(U_loo, labels)
    n_clamped = int(np.count_nonzero(q > _NLL_CAP))
    return np.minimum(q, _NLL_CAP), n_clamped


def zero_mode_removed_inverse(G: np.ndarray, lam2: float, eps_zero: float = EPS_ZERO):
    """Inverse of a symmetric matrix with zero modes projected out.

    For ``lam2 > 1e-6`` a Cholesky inverse is returned. Otherwise the
    matrix is eigendecomposed and modes with ``d <= eps_zero * max(d)``
    (including every non-positive mode) are discarded.

    Returns
    -------
    (inverse, n_removed)
    """
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0
    G = 0.5 * (G + G.T)
    if lam2 > LAMBDA2_LARGE:
        try:
            c = linalg.cho_factor(G, lower=True, check_finite=False)
            inv = linalg.cho_solve(c, np.eye(n), check_finite=False)
            return 0.5 * (inv + inv.T), 0
        except linalg.LinAlgError:
            pass
    d, V = linalg.eigh(G, check_finite=False)
    cut = eps_zero * max(d.max(), 0.0)
    keep = d > cut
    if d.max() <= 0:
        keep[:] = False
    n_removed = int(n - keep.sum())
    if not keep.any():
        raise DegenerateHessianError("all Hessian modes are zero modes")
    Vk = V[:, keep]
    inv = (Vk / d[keep]) @ Vk.T
    return 0.5 * (inv + inv.T), n_removed


def cmu(x_row: np.ndarray, ginv: np.ndarray, active: ActiveSet) -> np.ndarray:
    """L x L matrix ``X^mu_{*A} ginv (X^mu_{*A})^T`` for one sample."""
    L = active.n_classes
    if active.size == 0:
        return np.zeros((L, L))
    Y = active.class_indicator() * np.asarray(x_row)[active.features][:, None]
    C = Y.T @ ginv @ Y
    return 0.5 * (C + C.T)


def cmu_batch(X: np.ndarray, ginv: np.ndarray, active: ActiveSet) -> np.ndarray:
    """``cmu`` for every row of X at once, shape (M, L, L)."""
    M = X.shape[0]
    L = active.n_classes
    C = np.zeros((M, L, L))
    if active.size == 0:
        return C
    Z = X[:, active.features]
    E = active.class_indicator()
    for b in range(L):
        idx = np.flatnonzero(active.classes == b)
        if idx.size == 0:
            continue
        Wb = Z[:, idx] @ ginv[idx, :]
        C[:, :, b] = (Z * Wb) @ E
    return 0.5 * (C + C.transpose(0, 2, 1))


def loo_overlap_correction(u_row, b_row, f_mat, c_mat):
    """Leave-one-out overlap ``u + C (I - F C)^{-1} b`` for one sample.

    Returns ``(u_loo, ill_conditioned)``; when ``I - F C`` has condition
    number above 1e12 the additive fallback ``u + C b`` is used.
    """
    L = len(u_row)
    A = np.eye(L) - f_mat @ c_mat
    if not np.isfinite(A).all() or np.linalg.cond(A) > COND_MAX:
        return np.asarray(u_row) + c_mat @ b_row, True
    return np.asarray(u_row) + c_mat @ np.linalg.solve(A, b_row), False


def _correct_all(U, B, F, C):
    M, L = U.shape
    A = np.eye(L)[None] - F @ C
    cond = np.linalg.cond(A)
    bad = ~np.isfinite(cond) | (cond > COND_MAX)
    Z = B.copy()
    good = ~bad
    if good.any():
        Z[good] = np.linalg.solve(A[good], B[good][:, :, None])[:, :, 0]
    U_loo = U + np.einsum("mab,mb->ma", C, Z)
    return U_loo, np.flatnonzero(bad).tolist()


def acv(dataset: Dataset, fit: FitResult) -> AcvResult:
    """Approximate LOO error of ``fit`` on ``dataset``."""
    M, L = dataset.n_samples, dataset.n_classes
    act = active_set(fit.weights)
    blocks = sample_blocks(dataset, fit.weights)
    K = act.size
    if K == 0:
        q = np.full(M, np.log(L))
        return AcvResult(float(np.log(L)), q, blocks.U.copy(), op_count={"hessian": 0})

    lam2 = fit.hyper.lam2(M)
    G = assemble_hessian(dataset, blocks.P, act, lam2)
    ginv, n_zero = zero_mode_removed_inverse(G, lam2)
    C = cmu_batch(dataset.features, ginv, act)
    F = hessian_f_batch(blocks.P)
    U_loo, bad = _correct_all(blocks.U, blocks.B, F, C)
    if bad:
        U_loo[bad] = blocks.U[bad] + np.einsum("mab,mb->ma", C[bad], blocks.B[bad])
    q, n_clamped = loo_nll(U_loo, dataset.labels)
    ops = {
        "hessian": 2 * M * K * K,
        "inverse": K ** 3,
        "cmu": M * K * K + M * K * L * L,
        "per_sample": 2 * M * L ** 3,
    }
    return AcvResult(
        looe=mean_loss(q),
        per_sample_nll=q,
        loo_overlaps=U_loo,
        zero_modes_removed=n_zero,
        ill_conditioned_samples=bad,
        n_clamped=n_clamped,
        op_count=ops,
        active_size=K,
    )


def explicit_loo_overlaps(dataset: Dataset, fit: FitResult, index: Optional[List[int]] = None) -> np.ndarray:
    """Leave-one-out overlaps via an explicit per-sample Hessian downdate.

    Builds ``G - (X^mu)^T F^mu X^mu`` on the active set for each sample and
    inverts it directly. Only meant as an independent check of the Woodbury
    route in :func:`acv`; cost is O(M K^3).
    """
    M = dataset.n_samples
    act = active_set(fit.weights)
    blocks = sample_blocks(dataset, fit.weights)
    lam2 = fit.hyper.lam2(M)
    G = assemble_hessian(dataset, blocks.P, act, lam2)
    E = act.class_indicator()
    out = blocks.U.copy()
    rows = range(M) if index is None else index
    for mu in rows:
        Xa = (E * dataset.features[mu, act.features][:, None]).T  # L x K
        Fm = np.diag(blocks.P[mu]) - np.outer(blocks.P[mu], blocks.P[mu])
        G_loo = G - Xa.T @ Fm @ Xa
        Cloo = Xa @ np.linalg.solve(G_loo, Xa.T)
        out[mu] = blocks.U[mu] + Cloo @ blocks.B[mu]
    return out
