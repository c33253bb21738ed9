"""
Approximate LOO error along a regularisation path
=================================================

Fit an l1-penalised multinomial model on a synthetic ensemble, then compare
the two closed-form leave-one-out estimates with the literal estimate
obtained by refitting once per held-out sample.
"""

import numpy as np

from acvmlr import SynthSpec, acv, fit_path, generate, lambda_grid, lambda_max, literal_cv, saacv
from acvmlr import training_error

# a small version of the default ensemble: 100 features, 8 classes, 200 samples
_, ds = generate(SynthSpec(N=100, L=8, alpha=2, rho0=0.5, sigma_xi2=0.01, seed=0))
print(f"M={ds.n_samples} samples, N={ds.n_features} features, L={ds.n_classes} classes")

# descending grid from the smallest lambda that zeros every weight
lmax = lambda_max(ds)
grid = lambda_grid(lmax, 7, 3)
fits = fit_path(ds, grid)

# the literal LOO refits M times per point, so only every other point is checked
print(f"{'lambda':>10} {'train':>8} {'acv':>8} {'saacv':>8} {'loo':>8} {'|A|':>5}")
for i, f in enumerate(fits):
    a = acv(ds, f).looe
    s = saacv(ds, f).looe
    loo = literal_cv(ds, f.hyper, ds.n_samples, warm_start=f.weights).eps_cv if i % 2 == 0 else np.nan
    print(f"{f.hyper.lambda_tilde:10.3g} {training_error(ds, f.weights):8.4f} {a:8.4f} {s:8.4f} "
          f"{loo:8.4f} {np.count_nonzero(f.weights):5d}")

# the full fit is all zero at the top of the path, so the training error and
# both closed-form estimates equal ln L there; a few leave-one-out subsets
# still pick up a weight, which nudges the literal value
print(f"ln L = {np.log(ds.n_classes):.4f}")
