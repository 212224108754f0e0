"""The 0/0 point of the unit-anchored ratio.

For phi(y) = ln y and f(z) = 1/(z+i) at p = 2 the mean is M(y) = pi/(1+y) and
the ratio h/phi = pi ln(2y/(1+y)) / ln y has a removable singularity at y = 1.
Run with ``python demos/unit_anchor.py``.
"""
# %%
import math

import numpy as np

from hardymeans import WeightedMean, make_function, make_weight, mean_profile
from hardymeans.means import anchor_limit, diagnostics, unit_anchor_patch

wm = WeightedMean(make_weight("unit-power:1"), mean_profile(make_function("cayley-1"), 2.0), p=2.0)

# %%
# limits at the anchor: r(1) = M(1), r'(1) = M'(1)/2, (log r)''(1) from the Taylor patch
patch = unit_anchor_patch(wm)
print(f"r(1)          = {float(patch.ratio(1.0)):.15f}   pi/2  = {math.pi / 2:.15f}")
print(f"r'(1)         = {float(patch.ratio_d1(1.0)):.15f}   -pi/8 = {-math.pi / 8:.15f}")
print(f"(log r)''(1)  = {anchor_limit(wm):.15f}   3/16  = {3 / 16:.15f}")

# %%
# the quotient route takes over at |y - 1| >= 1e-3; the two agree across the switch
ys = 1.0 + np.array([-0.1, -0.01, -2e-3, -5e-4, 0.0, 5e-4, 2e-3, 0.01, 0.1])
print(f"\n{'y':>8} {'ratio':>20} {'ratio_d1':>20} {'log_ratio_d2':>20}  flags")
for d in diagnostics(wm, ys):
    flags = ",".join(sorted(f.value for f in d.flags)) or "-"
    print(f"{d.y:8.4f} {d.ratio:20.15f} {d.ratio_d1:20.15f} {d.log_ratio_d2:20.15f}  {flags}")
