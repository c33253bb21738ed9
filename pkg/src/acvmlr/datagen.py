"""Synthetic ensembles: Bernoulli-Gaussian class templates observed through
a noisy linear process, plus the stress variants used to probe the
self-averaging approximation (shared template components, correlated
noise, class-dependent feature amplification).

Class indices in this module are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .model import ContractError, Dataset

VARIANTS = ("plain", "common_components", "correlated_noise", "amplified")


@dataclass(frozen=True)
class SynthSpec:
    N: int
    L: int
    alpha: float = 2.0
    rho0: float = 0.5
    sigma_xi2: float = 0.01
    variant: str = "plain"
    r_common: float = 0.0
    corr: float = 0.0
    amp_classes: Tuple[int, ...] = field(default_factory=tuple)
    omega: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.L < 2:
            raise ContractError("need N >= 1 and L >= 2")
        if not 0 < self.rho0 <= 1:
            raise ContractError("rho0 must lie in (0, 1]")
        if self.sigma_xi2 < 0:
            raise ContractError("sigma_xi2 must be non-negative")
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0 <= self.r_common <= 1 or not 0 <= self.corr <= 1:
            raise ContractError("r_common and corr must lie in [0, 1]")
        if self.omega <= 0:
            raise ContractError("omega must be positive")
        amp = tuple(int(a) for a in self.amp_classes)
        if any(a < 0 or a >= self.L for a in amp):
            raise ContractError("amp_classes out of range")
        object.__setattr__(self, "amp_classes", amp)
        if self.M < 1:
            raise ContractError("alpha * N rounds to zero samples")

    @property
    def M(self) -> int:
        return int(round(self.alpha * self.N))

    def _streams(self):
        weights_ss, data_ss = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(weights_ss), np.random.default_rng(data_ss)


def _bernoulli_gaussian(rng, shape, rho0):
    mask = rng.random(shape) < rho0
    return np.where(mask, rng.normal(0.0, np.sqrt(1.0 / rho0), shape), 0.0)


def gen_true_weights(spec: SynthSpec) -> np.ndarray:
    """L x N class templates drawn i.i.d. from the Bernoulli-Gaussian prior.

    For the ``common_components`` variant a master template is drawn once;
    each class keeps its own support size but takes a fraction ``r_common``
    of it (positions and values) from a fixed ordering of the master support,
    so those components are shared by every class.
    """
    rng, _ = spec._streams()
    W = _bernoulli_gaussian(rng, (spec.L, spec.N), spec.rho0)
    if spec.variant != "common_components" or spec.r_common == 0:
        return W
    master = _bernoulli_gaussian(rng, spec.N, spec.rho0)
    master_order = rng.permutation(np.flatnonzero(master))
    out = np.zeros_like(W)
    for a in range(spec.L):
        k = int(np.count_nonzero(W[a]))
        n_common = min(int(round(spec.r_common * k)), master_order.size)
        common = master_order[:n_common]
        out[a, common] = master[common]
        free = np.setdiff1d(np.arange(spec.N), common)
        own = rng.choice(free, size=k - n_common, replace=False)
        out[a, own] = rng.normal(0.0, np.sqrt(1.0 / spec.rho0), own.size)
    return out


def gen_dataset(true_w: np.ndarray, spec: SynthSpec) -> Dataset:
    """Sample labels uniformly and features ``x = w0[y] / sqrt(N) + noise``."""
    true_w = np.asarray(true_w, dtype=np.float64)
    if true_w.shape != (spec.L, spec.N):
        raise ContractError("true weights do not match the spec")
    _, rng = spec._streams()
    M, N = spec.M, spec.N
    y = rng.integers(0, spec.L, size=M)
    sigma = np.sqrt(spec.sigma_xi2)
    if spec.variant == "correlated_noise":
        g = rng.standard_normal((M, 1))
        h = rng.standard_normal((M, N))
        noise = sigma * (np.sqrt(spec.corr) * g + np.sqrt(1.0 - spec.corr) * h)
    else:
        noise = sigma * rng.standard_normal((M, N))
    X = true_w[y] / np.sqrt(N) + noise
    if spec.variant == "amplified" and spec.amp_classes:
        amp = np.isin(y, spec.amp_classes)
        X[amp] *= spec.omega
    return Dataset(X, y, spec.L)


def generate(spec: SynthSpec) -> Tuple[np.ndarray, Dataset]:
    w0 = gen_true_weights(spec)
    return w0, gen_dataset(w0, spec)


def rescale_by_class(dataset: Dataset):
    """Homogenise mean feature-vector norms across classes.

    Returns ``(rescaled_dataset, factors, empty_classes)`` where sample ``mu``
    is multiplied by ``factors[y_mu]``, chosen so every class's mean 2-norm
    equals the global mean norm. Classes without samples get factor 1 and
    are listed in ``empty_classes``.
    """
    norms = np.linalg.norm(dataset.features, axis=1)
    target = norms.mean()
    L = dataset.n_classes
    factors = np.ones(L)
    empty = []
    for a in range(L):
        sel = dataset.labels == a
        if not np.any(sel):
            empty.append(a)
            continue
        m = norms[sel].mean()
        if m > 0:
            factors[a] = target / m
    X = dataset.features * factors[dataset.labels][:, None]
    return Dataset(X, dataset.labels, L), factors, empty
