"""
Cost of the two estimates versus feature count
==============================================

The exact-inverse estimate needs the active-set Hessian inverse, which grows
faster than linearly with the number of features. The self-averaging estimate
works on per-feature L x L blocks and stays linear. Counted operations make
the comparison independent of the machine.
"""

import time

import numpy as np

from acvmlr import SynthSpec, acv, fit, generate, lambda_max, saacv
from acvmlr import HyperParams

sizes = [100, 200, 400]
rows = []
for N in sizes:
    _, ds = generate(SynthSpec(N=N, L=8, alpha=2, sigma_xi2=0.01, seed=0))
    f = fit(ds, HyperParams(0.1 * lambda_max(ds)))
    t0 = time.perf_counter()
    a = acv(ds, f)
    t1 = time.perf_counter()
    s = saacv(ds, f)
    t2 = time.perf_counter()
    rows.append((N, a.active_size, a.ops, s.ops, t1 - t0, t2 - t1))
    print(f"N={N:4d} |A|={a.active_size:5d} ops acv={a.ops:.3g} saacv={s.ops:.3g} "
          f"time acv={t1 - t0:.3f}s saacv={t2 - t1:.3f}s")

logN = np.log(sizes)
for name, col in (("acv", 2), ("saacv", 3)):
    slope = np.polyfit(logN, np.log([r[col] for r in rows]), 1)[0]
    print(f"log-log slope of {name} op count: {slope:.2f}")
