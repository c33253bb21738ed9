"""
When the self-averaging estimate breaks
=======================================

The self-averaging estimate replaces every sample's feature statistics by a
single average. Blowing up the feature norm of half the classes makes that
average meaningless; rescaling each class back to a common norm (and moving
the factor into a per-class penalty) restores it.
"""

import numpy as np

from acvmlr import (
    SynthSpec,
    acv,
    fit_path,
    generate,
    lambda_grid,
    lambda_max,
    literal_cv,
    normalized_error_difference,
    rescale_by_class,
    saacv,
)

spec = SynthSpec(N=100, L=8, alpha=2, sigma_xi2=0.1, variant="amplified",
                 amp_classes=(4, 5, 6, 7), omega=100.0, seed=0)
_, ds = generate(spec)
norms = np.linalg.norm(ds.features, axis=1)
print("mean feature norm per class:", [f"{norms[ds.labels == a].mean():.1f}" for a in range(8)])


def compare(data, class_penalty=None):
    lmax = lambda_max(data, class_penalty=class_penalty)
    grid = lambda_grid(lmax, 5, 2)[1:]
    for f in fit_path(data, grid, class_penalty=class_penalty):
        loo = literal_cv(data, f.hyper, data.n_samples, warm_start=f.weights).eps_cv
        na = normalized_error_difference(acv(data, f).looe, loo)
        ns = normalized_error_difference(saacv(data, f).looe, loo)
        print(f"  lambda {f.hyper.lambda_tilde:9.3g}: NED acv {na:+.3f}  NED saacv {ns:+.3f}")


print("raw data")
compare(ds)

# factors near 1/100 for the amplified classes
rescaled, factors, _ = rescale_by_class(ds)
print("class factors:", np.round(factors / factors.max(), 4))
print("rescaled data with per-class penalties")
compare(rescaled, tuple(factors))
