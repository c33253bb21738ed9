"""Elastic-net multinomial logistic regression solver.

Minimises the per-sample normalised objective

    (1/M) sum_mu q_mu(W) + lambda_tilde * ( eta * sum_a c_a ||w_a||_1
                                            + (1 - eta)/2 * ||W||_F^2 )

where ``c_a`` are optional per-class l1 multipliers (all ones by default).
The outer loop is a proximal Newton method whose quadratic model uses the
exact softmax Hessian blocks; each subproblem is solved by cyclic
coordinate descent with soft-thresholding, and the step is globalised with
an Armijo backtracking line search. A proximal-gradient step is used when
the Newton direction fails to decrease the objective.

Once the support has roughly settled, projected Newton steps that solve
the active block directly take over. Cyclic descent converges slowly
when features are strongly correlated; the direct step does not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numba import njit
from scipy import linalg

from .model import (
    ContractError,
    Dataset,
    active_set,
    assemble_hessian,
    nll_from_overlaps,
    softmax_probs,
)

log = logging.getLogger(__name__)

TOL_KKT = 1e-6
# largest active block solved directly; beyond this only coordinate descent is used
MAX_DIRECT = 3000
INNER_CAP = 100


@dataclass(frozen=True)
class HyperParams:
    """Regularisation point ``(lambda_tilde, eta)``.

    The absolute coefficients of the summed (not averaged) objective are
    ``lam1 = M * lambda_tilde * eta`` and ``lam2 = M * lambda_tilde * (1 - eta)``.
    """

    lambda_tilde: float
    eta: float = 1.0
    class_penalty: Optional[tuple] = None

    def __post_init__(self):
        if not self.lambda_tilde > 0:
            raise ContractError("lambda_tilde must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ContractError("eta must lie in [0, 1]")
        if self.class_penalty is not None:
            cp = tuple(float(c) for c in self.class_penalty)
            if any(c < 0 for c in cp):
                raise ContractError("class penalties must be non-negative")
            object.__setattr__(self, "class_penalty", cp)

    def lam1(self, n_samples: int) -> float:
        return n_samples * self.lambda_tilde * self.eta

    def lam2(self, n_samples: int) -> float:
        return n_samples * self.lambda_tilde * (1.0 - self.eta)

    def l1_vector(self, n_classes: int) -> np.ndarray:
        """Per-class l1 coefficient of the normalised objective."""
        base = self.lambda_tilde * self.eta
        if self.class_penalty is None:
            return np.full(n_classes, base)
        if len(self.class_penalty) != n_classes:
            raise ContractError("class_penalty length must equal the number of classes")
        return base * np.asarray(self.class_penalty)

    @property
    def l2(self) -> float:
        return self.lambda_tilde * (1.0 - self.eta)

    def rescaled(self, factor: float) -> "HyperParams":
        return HyperParams(self.lambda_tilde * factor, self.eta, self.class_penalty)


@dataclass
class FitResult:
    weights: np.ndarray
    hyper: HyperParams
    objective: float
    converged: bool
    iterations: int
    kkt_violation: float
    sweeps: int = 0
    objective_history: List[float] = field(default_factory=list)
    fixed_zero_class: Optional[int] = None


@njit(cache=True)
def _cd_subproblem(XT, PT, grad, hdiag, W, l1, l2, D, RT, t, inv_m, tol, max_sweeps):
    """Cyclic coordinate descent on the proximal Newton quadratic model.

    D is the step being built; RT[a, mu] = x_mu . D_a and t[mu] = p_mu . r_mu
    are maintained so each coordinate costs O(M). Alternates full sweeps with
    sweeps over currently nonzero coordinates until a full sweep moves no
    coordinate by more than ``tol``.
    """
    L, N = W.shape
    M = XT.shape[1]
    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        max_change = 0.0
        for i in range(N):
            x = XT[i]
            for a in range(L):
                z_old = W[a, i] + D[a, i]
                if (not full) and z_old == 0.0:
                    continue
                p = PT[a]
                r = RT[a]
                s = 0.0
                for mu in range(M):
                    s += x[mu] * p[mu] * (r[mu] - t[mu])
                g = grad[a, i] + inv_m * s + l2 * D[a, i]
                h = hdiag[a, i]
                v = h * z_old - g
                thr = l1[a]
                if v > thr:
                    z = (v - thr) / h
                elif v < -thr:
                    z = (v + thr) / h
                else:
                    z = 0.0
                delta = z - z_old
                if delta != 0.0:
                    D[a, i] += delta
                    for mu in range(M):
                        dx = delta * x[mu]
                        r[mu] += dx
                        t[mu] += dx * p[mu]
                    ad = abs(delta)
                    if ad > max_change:
                        max_change = ad
        sweeps += 1
        if max_change < tol:
            if full:
                break
            full = True
        else:
            full = False
    return sweeps


class _Problem:
    """Objective pieces for one dataset and hyperparameter point."""

    def __init__(self, dataset: Dataset, hyper: HyperParams, fixed_zero_class: Optional[int]):
        self.X = dataset.features
        self.XT = np.ascontiguousarray(self.X.T)
        self.y = dataset.labels
        self.M = dataset.n_samples
        self.L = dataset.n_classes
        self.Y = dataset.one_hot()
        self.l1 = hyper.l1_vector(self.L)
        self.l2 = hyper.l2
        self.fixed = fixed_zero_class
        if fixed_zero_class is not None:
            self.l1 = self.l1.copy()
            self.l1[fixed_zero_class] = np.inf
        self.col_sq = (self.X ** 2).sum(axis=0)

    def penalty(self, W):
        l1 = np.where(np.isinf(self.l1), 0.0, self.l1)
        return float(l1 @ np.abs(W).sum(axis=1)) + 0.5 * self.l2 * float(np.sum(W * W))

    def smooth_at(self, W):
        U = self.X @ W.T
        nll = nll_from_overlaps(U, self.y)
        return float(nll.mean()), U

    def objective(self, W):
        return self.smooth_at(W)[0] + self.penalty(W)

    def smooth_grad(self, P, W):
        return (P - self.Y).T @ self.X / self.M + self.l2 * W

    def kkt(self, W, G):
        l1 = self.l1
        viol = np.where(
            W != 0.0,
            np.abs(G + np.where(np.isinf(l1), 0.0, l1)[:, None] * np.sign(W)),
            np.maximum(np.abs(G) - l1[:, None], 0.0),
        )
        if self.fixed is not None:
            viol[self.fixed] = 0.0
        return float(viol.max()) if viol.size else 0.0

    def l1_term(self, W):
        l1 = np.where(np.isinf(self.l1), 0.0, self.l1)
        return float(l1 @ np.abs(W).sum(axis=1))



def _orthant_newton_step(dataset: Dataset, prob: _Problem, W, P, G, f):
    """Projected Newton step within the orthant picked by the current signs.

    Zero coordinates whose gradient exceeds their l1 threshold join the
    block with the sign that decreases the objective. The block Hessian is
    solved with its zero modes left out (possible when l2 = 0), coordinates
    that would cross zero are clipped to zero, and the step is backtracked.
    Returns ``(W_new, f_new, U_new)`` or None.
    """
    l1 = np.where(np.isinf(prob.l1), 0.0, prob.l1)[:, None]
    sigma = np.sign(W)
    grow = (W == 0.0) & (np.abs(G) > l1)
    if prob.fixed is not None:
        grow[prob.fixed] = False
    sigma[grow] = -np.sign(G[grow])
    act = active_set(sigma)
    if act.size == 0 or act.size > MAX_DIRECT:
        return None
    H = assemble_hessian(dataset, P, act, 0.0) / prob.M
    H[np.diag_indices(act.size)] += prob.l2
    sg = sigma[act.classes, act.features]
    g = G[act.classes, act.features] + l1[act.classes, 0] * sg
    d, V = linalg.eigh(H, check_finite=False)
    keep = d > 1e-10 * max(d.max(), 0.0)
    if not keep.any():
        return None
    Vk = V[:, keep]
    step = -(Vk @ ((Vk.T @ g) / d[keep]))
    w0 = W[act.classes, act.features]
    s = 1.0
    for _ in range(20):
        w = w0 + s * step
        w[np.sign(w) != sg] = 0.0
        Wn = W.copy()
        Wn[act.classes, act.features] = w
        dec = float(g @ (w - w0))
        if dec >= 0:
            return None
        fn, Un = prob.smooth_at(Wn)
        fn += prob.penalty(Wn)
        if fn <= f + 1e-4 * dec:
            return Wn, fn, Un
        s *= 0.5
    return None


def _soft(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def _prox_grad_step(prob: _Problem, W, G, f0):
    """Backtracking proximal-gradient step; returns (W_new, f_new) or None."""
    l1 = np.where(np.isinf(prob.l1), 0.0, prob.l1)
    step = prob.M / max(0.5 * prob.col_sq.max(), 1e-300)
    smooth0 = f0 - prob.penalty(W)
    for _ in range(60):
        Z = W - step * G
        Wn = _soft(Z, step * l1[:, None])
        if prob.fixed is not None:
            Wn[prob.fixed] = 0.0
        dW = Wn - W
        if not np.any(dW):
            return None
        s_new = prob.smooth_at(Wn)[0] + 0.5 * prob.l2 * float(np.sum(Wn * Wn))
        s_old = smooth0 + 0.5 * prob.l2 * float(np.sum(W * W))
        if s_new <= s_old + float(np.sum(G * dW)) + float(np.sum(dW * dW)) / (2 * step):
            f_new = s_new + prob.l1_term(Wn)
            if f_new <= f0:
                return Wn, f_new
        step *= 0.5
    return None


def fit(
    dataset: Dataset,
    hyper: HyperParams,
    tol_delta: float = 1e-8,
    max_iter: int = 100_000,
    warm_start: Optional[np.ndarray] = None,
    *,
    tol_kkt: float = TOL_KKT,
    fixed_zero_class: Optional[int] = None,
) -> FitResult:
    """Fit the elastic-net MLR at one hyperparameter point.

    Parameters
    ----------
    dataset : Dataset
    hyper : HyperParams
    tol_delta : float
        Convergence threshold on the largest weight change of an outer step.
    max_iter : int
        Budget of coordinate-descent sweeps summed over all outer steps.
    warm_start : ndarray, optional
        Initial L x N weights.
    tol_kkt : float
        Required stationarity residual for ``converged=True``.
    fixed_zero_class : int, optional
        Pin this class's weights to zero (zero gauge). Off by default.

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged=False``.
    """
    L, N, M = dataset.n_classes, dataset.n_features, dataset.n_samples
    if hyper.lam1(M) == 0 and hyper.lam2(M) == 0:
        raise ContractError("unpenalised MLR is singular; need lam1 + lam2 > 0")
    prob = _Problem(dataset, hyper, fixed_zero_class)
    if warm_start is None:
        W = np.zeros((L, N))
    else:
        W = np.array(warm_start, dtype=np.float64, copy=True)
        if W.shape != (L, N):
            raise ContractError(f"warm_start shape {W.shape} != {(L, N)}")
    if fixed_zero_class is not None:
        W[fixed_zero_class] = 0.0

    f, U = prob.smooth_at(W)
    f += prob.penalty(W)
    history = [f]
    sweeps = 0
    iterations = 0
    converged = False
    inner_tol = max(tol_delta * 0.1, 1e-4)
    kkt = np.inf
    last_change = np.inf
    inv_m = 1.0 / M
    l2 = prob.l2
    support = W != 0.0
    # a warm start usually already has the right support
    settled = warm_start is not None and bool(support.any())
    direct_kkt = np.inf
    stalls = 0

    while sweeps < max_iter:
        P = softmax_probs(U)
        G = prob.smooth_grad(P, W)
        kkt = prob.kkt(W, G)
        if kkt <= tol_kkt and iterations > 0 and last_change < tol_delta:
            converged = True
            break
        # direct steps go on while they keep halving the residual, with a
        # few slow steps tolerated while the support is still moving
        if kkt >= 0.5 * direct_kkt:
            stalls += 1
        if settled and stalls < 3:
            direct_kkt = kkt
            sweeps += 1
            res = _orthant_newton_step(dataset, prob, W, P, G, f)
            if res is not None:
                Wn, fn, Un = res
                iterations += 1
                last_change = float(np.max(np.abs(Wn - W)))
                support = Wn != 0.0
                W, f, U = Wn, fn, Un
                history.append(f)
                continue
        direct_kkt = np.inf
        stalls = 0
        PT = np.ascontiguousarray(P.T)
        hdiag = (prob.XT ** 2) @ (P * (1.0 - P)) * inv_m
        hdiag = np.ascontiguousarray(np.maximum(hdiag.T + l2, 1e-12))
        D = np.zeros_like(W)
        RT = np.zeros((L, M))
        t = np.zeros(M)
        budget = max_iter - sweeps
        if np.count_nonzero(W) <= MAX_DIRECT:
            # descent mainly has to find the support; direct steps refine it
            budget = min(budget, INNER_CAP)
        n_sw = _cd_subproblem(prob.XT, PT, np.ascontiguousarray(G), hdiag, W, prob.l1,
                              l2, D, RT, t, inv_m, inner_tol, budget)
        sweeps += n_sw
        iterations += 1

        dec = float(np.sum(G * D)) + prob.l1_term(W + D) - prob.l1_term(W)
        step_ok = False
        if dec < 0 and np.any(D):
            s = 1.0
            for _ in range(50):
                Wn = W + s * D
                fn, Un = prob.smooth_at(Wn)
                fn += prob.penalty(Wn)
                if fn <= f + 1e-4 * s * dec:
                    step_ok = True
                    break
                s *= 0.5
        if step_ok:
            last_change = float(np.max(np.abs(Wn - W)))
            new_support = Wn != 0.0
            settled = s == 1.0 and np.array_equal(new_support, support)
            support = new_support
            W, f, U = Wn, fn, Un
        else:
            pg = _prox_grad_step(prob, W, G, f)
            if pg is None:
                # no descent possible in floating point: at numerical optimum
                last_change = 0.0
                converged = kkt <= tol_kkt
                if not converged:
                    log.debug("solver stalled with kkt=%g", kkt)
                history.append(f)
                break
            Wn, fn = pg
            last_change = float(np.max(np.abs(Wn - W)))
            settled = False
            support = Wn != 0.0
            W, f = Wn, fn
            U = prob.X @ W.T
        history.append(f)
        # tighten the inner tolerance as the outer iteration settles
        inner_tol = max(min(inner_tol, 0.1 * last_change), 0.1 * tol_delta)
    else:
        P = softmax_probs(U)
        kkt = prob.kkt(W, prob.smooth_grad(P, W))

    if fixed_zero_class is not None:
        W[fixed_zero_class] = 0.0
    return FitResult(
        weights=W,
        hyper=hyper,
        objective=f,
        converged=converged,
        iterations=iterations,
        kkt_violation=kkt,
        sweeps=sweeps,
        objective_history=history,
        fixed_zero_class=fixed_zero_class,
    )


def lambda_max(dataset: Dataset, eta: float = 1.0, class_penalty: Optional[Sequence[float]] = None,
               fixed_zero_class: Optional[int] = None) -> float:
    """Smallest lambda_tilde at which the all-zero weights are optimal."""
    if eta <= 0:
        raise ContractError("lambda_max is infinite for eta = 0")
    L = dataset.n_classes
    P0 = np.full((dataset.n_samples, L), 1.0 / L)
    G0 = (P0 - dataset.one_hot()).T @ dataset.features / dataset.n_samples
    cp = np.ones(L) if class_penalty is None else np.asarray(class_penalty, dtype=float)
    if fixed_zero_class is not None:
        G0[fixed_zero_class] = 0.0
    with np.errstate(divide="ignore"):
        ratios = np.where(cp[:, None] > 0, np.abs(G0) / np.where(cp[:, None] > 0, cp[:, None], 1.0), 0.0)
    return float(ratios.max() / eta)


def lambda_grid(lam_max: float, n_points: int = 50, decades: float = 4.0) -> np.ndarray:
    """Descending logarithmic grid from ``lam_max`` down ``decades`` decades."""
    if n_points < 1:
        raise ContractError("grid needs at least one point")
    return np.logspace(np.log10(lam_max), np.log10(lam_max) - decades, n_points)


def fit_path(
    dataset: Dataset,
    lambda_grid: Sequence[float],
    eta: float = 1.0,
    tol_delta: float = 1e-8,
    max_iter: int = 100_000,
    *,
    class_penalty: Optional[Sequence[float]] = None,
    fixed_zero_class: Optional[int] = None,
) -> List[FitResult]:
    """Fit a strictly decreasing lambda grid with warm starts."""
    grid = np.asarray(lambda_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ContractError("lambda grid must be a non-empty 1-D sequence")
    if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise ContractError("lambda grid must be positive and strictly decreasing")
    cp = None if class_penalty is None else tuple(class_penalty)
    results = []
    W = None
    for lam in grid:
        res = fit(dataset, HyperParams(float(lam), eta, cp), tol_delta, max_iter, W,
                  fixed_zero_class=fixed_zero_class)
        if not res.converged:
            log.info("fit did not converge at lambda_tilde=%g (kkt=%g)", lam, res.kkt_violation)
        results.append(res)
        W = res.weights
    return results
