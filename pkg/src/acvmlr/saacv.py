"""Self-averaging approximate leave-one-out error.

Replaces the per-sample correction matrices of :mod:`acvmlr.acv` by one
sample-independent L x L matrix ``C_SA = sigma_x^2 sum_i chi_i``, where the
per-feature susceptibilities ``chi_i`` solve

    chi_i |_(A_i, A_i) = inv( R |_(A_i, A_i) ),
    R = lam2 I + sigma_x^2 sum_mu (I + F^mu C_SA)^{-1} F^mu,

with ``A_i`` the classes active at feature i. The fixed point is found by
plain recursive substitution; ``chi_i`` depends on i only through ``A_i``, so
the blocks are computed once per distinct active pattern.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .acv import EPS_ZERO, LAMBDA2_LARGE, AcvResult, loo_nll, zero_mode_removed_inverse
from .model import Dataset, active_set, hessian_f_batch, mean_loss, sample_blocks
from .solver import FitResult

log = logging.getLogger(__name__)

Pattern = Tuple[int, ...]


class SaacvError(np.linalg.LinAlgError):
    pass


@dataclass
class SaState:
    patterns: Dict[Pattern, np.ndarray]
    feature_pattern: Dict[int, Pattern]
    c_sa: np.ndarray
    sigma_x2: float
    iterations: int
    converged: bool
    final_residual: float
    damping: float = 0.0
    n_features: int = 0
    op_count: Dict[str, int] = field(default_factory=dict)

    @property
    def chi(self) -> Dict[int, np.ndarray]:
        """Per-feature L x L susceptibilities (features with no active class omitted)."""
        return {i: self.patterns[p] for i, p in self.feature_pattern.items()}

    def chi_of(self, feature: int) -> np.ndarray:
        L = self.c_sa.shape[0]
        p = self.feature_pattern.get(feature)
        return np.zeros((L, L)) if p is None else self.patterns[p]


def _embed(block: np.ndarray, pattern: Pattern, L: int) -> np.ndarray:
    out = np.zeros((L, L))
    idx = np.asarray(pattern)
    out[np.ix_(idx, idx)] = block
    return out


def _c_from_chi(chi: Dict[Pattern, np.ndarray], counts: Dict[Pattern, int], sigma_x2: float, L: int):
    C = np.zeros((L, L))
    for p, m in chi.items():
        C += counts[p] * m
    return sigma_x2 * C


def _r_matrix(F: np.ndarray, C: np.ndarray, sigma_x2: float, lam2: float) -> np.ndarray:
    L = C.shape[0]
    A = np.eye(L)[None] + F @ C
    S = np.linalg.solve(A, F).sum(axis=0)
    R = lam2 * np.eye(L) + sigma_x2 * S
    return 0.5 * (R + R.T)


def _chi_update(R: np.ndarray, patterns, lam2: float, L: int) -> Dict[Pattern, np.ndarray]:
    out = {}
    for p in patterns:
        idx = np.asarray(p)
        sub = R[np.ix_(idx, idx)]
        if lam2 > LAMBDA2_LARGE:
            inv = np.linalg.inv(sub)
        else:
            inv, _ = zero_mode_removed_inverse(sub, 0.0, EPS_ZERO)
        out[p] = _embed(0.5 * (inv + inv.T), p, L)
    return out


def saacv_fixed_point(
    dataset: Dataset,
    fit: FitResult,
    theta: float = 1e-6,
    max_sweeps: int = 1000,
    damping: float = 0.0,
    *,
    sigma_x2: Optional[float] = None,
) -> SaState:
    """Solve the per-feature susceptibility fixed point for ``fit``.

    ``sigma_x2`` may be passed in to reuse the (lambda-independent) data
    statistic across a path.
    """
    M, N, L = dataset.n_samples, dataset.n_features, dataset.n_classes
    if sigma_x2 is None:
        sigma_x2 = dataset.sigma_x2()
    act = active_set(fit.weights)
    counts: Dict[Pattern, int] = {}
    for p in act.per_feature.values():
        counts[p] = counts.get(p, 0) + 1
    if not counts:
        return SaState({}, {}, np.zeros((L, L)), sigma_x2, 0, True, 0.0, damping, N,
                       {"fixed_point": 0})

    lam2 = fit.hyper.lam2(M)
    P = sample_blocks(dataset, fit.weights).P
    F = hessian_f_batch(P)
    chi = {p: _embed(np.eye(len(p)) / sigma_x2, p, L) for p in counts}
    prev = dict(chi)

    gamma = damping
    delta = 100.0
    history = []
    t = 0
    raised = False
    converged = False
    while t < max_sweeps:
        C = _c_from_chi(chi, counts, sigma_x2, L)
        try:
            R = _r_matrix(F, C, sigma_x2, lam2)
            new = _chi_update(R, counts, lam2, L)
        except np.linalg.LinAlgError as exc:
            if raised:
                raise SaacvError(f"singular system in sweep {t}") from exc
            log.info("saacv sweep %d singular; retrying with damping 0.5", t)
            raised = True
            gamma = 0.5
            chi = {p: 0.5 * (chi[p] + prev[p]) for p in chi}
            continue
        if gamma > 0:
            new = {p: (1 - gamma) * new[p] + gamma * chi[p] for p in new}
        delta = sum(counts[p] * np.linalg.norm(new[p] - chi[p]) for p in new) / N
        prev, chi = chi, new
        t += 1
        history.append(delta)
        if delta <= theta:
            converged = True
            break
        if gamma == 0 and len(history) >= 3 and history[-1] > history[-2] > history[-3]:
            log.info("saacv residual grew twice; switching damping to 0.5")
            gamma = 0.5

    c_sa = _c_from_chi(chi, counts, sigma_x2, L)
    n_pat = len(counts)
    ops = {"fixed_point": t * (2 * M * L ** 3 + n_pat * L ** 3 + n_pat * L * L)}
    return SaState(
        patterns=chi,
        feature_pattern=dict(act.per_feature),
        c_sa=c_sa,
        sigma_x2=sigma_x2,
        iterations=t,
        converged=converged,
        final_residual=float(delta),
        damping=gamma,
        n_features=N,
        op_count=ops,
    )


def fixed_point_residual(dataset: Dataset, fit: FitResult, state: SaState) -> float:
    """Mean per-feature Frobenius change of one more substitution from ``state``."""
    if not state.patterns:
        return 0.0
    L = dataset.n_classes
    lam2 = fit.hyper.lam2(dataset.n_samples)
    F = hessian_f_batch(sample_blocks(dataset, fit.weights).P)
    R = _r_matrix(F, state.c_sa, state.sigma_x2, lam2)
    new = _chi_update(R, state.patterns, lam2, L)
    counts: Dict[Pattern, int] = {}
    for p in state.feature_pattern.values():
        counts[p] = counts.get(p, 0) + 1
    return sum(counts[p] * np.linalg.norm(new[p] - state.patterns[p]) for p in new) / dataset.n_features


def saacv(
    dataset: Dataset,
    fit: FitResult,
    theta: float = 1e-6,
    max_sweeps: int = 1000,
    damping: float = 0.0,
    *,
    sigma_x2: Optional[float] = None,
    return_state: bool = False,
):
    """Self-averaging approximate LOO error of ``fit``.

    The leave-one-out overlaps are ``u + C_SA b`` for every sample. A
    non-converged fixed point still yields an estimate, with
    ``converged=False`` on the result.
    """
    M, L = dataset.n_samples, dataset.n_classes
    state = saacv_fixed_point(dataset, fit, theta, max_sweeps, damping, sigma_x2=sigma_x2)
    blocks = sample_blocks(dataset, fit.weights)
    if not state.patterns:
        q = np.full(M, np.log(L))
        res = AcvResult(float(np.log(L)), q, blocks.U.copy(), op_count=dict(state.op_count))
    else:
        U_loo = blocks.U + blocks.B @ state.c_sa.T
        q, n_clamped = loo_nll(U_loo, dataset.labels)
        ops = dict(state.op_count)
        ops["correction"] = M * L * L
        res = AcvResult(
            looe=mean_loss(q),
            per_sample_nll=q,
            loo_overlaps=U_loo,
            n_clamped=n_clamped,
            converged=state.converged,
            op_count=ops,
            active_size=sum(len(p) for p in state.feature_pattern.values()),
        )
    return (res, state) if return_state else res
