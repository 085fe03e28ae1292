"""Gradient extremal of ``xyz`` on the unit sphere in two stereographic charts.

The curve starts at the South pole, runs through critical points of ``xyz``
and is then retraced in the chart centred on the other pole.  Agreement on
the overlap shows the construction does not depend on the chart.
"""
# %%
import numpy as np

from gradex.cli import critical_points_hit, overlap_hausdorff, sphere_xyz_curves
from gradex.potentials import SphereXYZ

seg_s, P_s, seg_n, P_n = sphere_xyz_curves()
print(f"south-pole chart: {seg_s.termination}, {len(P_s)} points")
print(f"north-pole chart: {seg_n.termination}, {len(P_n)} points")

# %%
for cp in critical_points_hit(P_s):
    print("passes through critical point", np.round(cp, 4), " xyz =", round(SphereXYZ()(cp), 4))

# %%
print(f"Hausdorff distance on the overlap: {overlap_hausdorff(P_s, P_n):.2e}")
print(f"max | |p| - 1 | along both curves: {np.abs(np.linalg.norm(np.vstack([P_s, P_n]), axis=1) - 1).max():.1e}")
