"""Signs of r', (log r)'' and the quadratic for every catalogue pairing.

Prints, per (weight, function, p), the extreme values over a log grid.  Every
row should show max r' < 0, min (log r)'' > 0 and max quadratic < 0 (the flat
tail weight is checked through h - C/B instead).
Run with ``python demos/sign_table.py`` (about ten seconds).
"""
# %%
import numpy as np

from hardymeans import WeightedMean, make_function, make_weight, mean_profile
from hardymeans.functions import FUNCTION_IDS
from hardymeans.means import Flag, diagnostics
from hardymeans.weights import WEIGHT_IDS

ys = np.geomspace(0.05, 20.0, 40)

# %%
print(f"{'weight':<16} {'function':<16} {'p':>3} {'max r_d1':>11} {'min logr_d2':>12} {'max quad':>11} "
      f"{'max h-C/B':>11}")
for wid in WEIGHT_IDS:
    w = make_weight(wid)
    if w.family is None:
        continue  # no theorem pairing
    for fid in FUNCTION_IDS:
        for p in (2.0, 4.0):
            ds = diagnostics(WeightedMean(w, mean_profile(make_function(fid), p), p=p), ys)
            off = [d for d in ds if Flag.NEAR_ANCHOR not in d.flags]
            hcb = [d.h_minus_CB for d in ds if d.h_minus_CB is not None]
            print(f"{wid:<16} {fid:<16} {p:3g} {max(d.ratio_d1 for d in ds):11.3e} "
                  f"{min(d.log_ratio_d2 for d in ds):12.3e} {max(d.quadratic for d in off):11.3e} "
                  f"{(max(hcb) if hcb else float('nan')):11.3e}")
