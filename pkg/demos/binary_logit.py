"""
Two classes: logistic regression as a special case
==================================================

With two classes the multinomial model has a redundant direction. Pinning
one class's weights at zero gives ordinary logistic regression, and the
scalar leave-one-out formula must agree with the general one.
"""

import numpy as np

from acvmlr import HyperParams, SynthSpec, acv, acv_logit, fit_logit, generate, lambda_max
from acvmlr.binomial import as_mlr_fit

_, ds = generate(SynthSpec(N=50, L=2, alpha=3, sigma_xi2=0.1, seed=2))
lmax = lambda_max(ds, 0.5, fixed_zero_class=0)

# eta = 0.5 mixes in an l2 term, so the active-set Hessian is always invertible
for r in (0.3, 0.1, 0.03):
    lf = fit_logit(ds, HyperParams(r * lmax, 0.5))
    scalar = acv_logit(ds, lf).looe
    general = acv(ds, as_mlr_fit(lf)).looe
    print(f"lambda/lmax={r:5.2f} active={np.count_nonzero(lf.weights):3d} "
          f"logit {scalar:.10f} general {general:.10f} gap {abs(scalar - general):.1e}")
