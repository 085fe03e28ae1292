"""Gradient extremal on the planar Mueller-Brown surface.

Starting at the rightmost minimum and following the soft eigenvector, the
curve climbs the valley floor and ends on the neighbouring saddle.  At every
level it passes through the extremum of the gradient norm on that level set.
"""
# %%
import numpy as np

from gradex.comparison_paths import euclidean_ge
from gradex.continuation import turning_points
from gradex.fixtures import mb_nearby_saddle, mb_rightmost_minimum, mueller_brown_fixtures
from gradex.potentials import MuellerBrown

E = MuellerBrown()
for f in mueller_brown_fixtures():
    print(f"{f['kind']:<8} {f['point'].round(5)}  U = {f['energy']:.4f}")

# %%
# Trace the curve.  sign = -1 points the first tangent towards smaller x.
res = euclidean_ge(E, mb_rightmost_minimum(), "smallest", sign=-1.0)
seg = res.info["segment"]
print(f"termination: {seg.termination} after {len(seg.states)} states")
print(f"end point {res.end.round(6)}, |grad U| = {res.grad_norm:.2e}")
print(f"distance to the saddle fixture: {np.linalg.norm(res.end - mb_nearby_saddle()):.2e}")

# %%
# The level L rises monotonically: no turning points on this surface.
print("turning points:", turning_points(seg))
print("levels:", np.round(seg.levels[:: max(1, len(seg.levels) // 8)], 3))

# %%
# At each accepted state the gradient is an eigenvector of the Hessian.
sines = []
for x in seg.points[1:-1]:
    g, H = E.gradient(x), E.hessian(x)
    Hg = H @ g
    sines.append(abs(g[0] * Hg[1] - g[1] * Hg[0]) / (np.linalg.norm(g) * np.linalg.norm(Hg)))
print(f"max |sin(g, Hg)| along the curve: {max(sines):.1e}")
