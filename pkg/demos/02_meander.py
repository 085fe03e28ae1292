"""Gradient extremals on a four-Gaussian surface with a crossed exponent.

The soft-mode extremal leaving the saddle downhill winds back and forth in
energy (its level ``L`` has turning points).  The extremal started at the
bottom minimum is also traced in both directions for comparison.
"""
# %%
from gradex.cli import yannik_bottom_minimum
from gradex.comparison_paths import euclidean_ge
from gradex.continuation import ContinuationConfig, resolve_extremal_curve, turning_points
from gradex.fixtures import yannik_fixtures
from gradex.geometry import FlatChart
from gradex.potentials import YannikPotential

Y = YannikPotential()
for f in yannik_fixtures():
    print(f"{f['kind']:<8} {f['point'].round(4)}  E = {f['energy']:.4f}")

# %%
x0 = yannik_bottom_minimum()
for sign in (1.0, -1.0):
    res = euclidean_ge(Y, x0, "smallest", sign=sign)
    seg = res.info["segment"]
    print(f"from the bottom minimum, sign {sign:+.0f}: {seg.termination}, "
          f"{turning_points(seg)} turning point(s), end {res.end.round(3)}")

# %%
saddle = next(f["point"] for f in yannik_fixtures() if f["kind"] == "saddle")
seg = resolve_extremal_curve(FlatChart(Y), saddle, None, ContinuationConfig(max_steps=3000), sign=-1.0)
print(f"from the saddle: {seg.termination}, {turning_points(seg)} turning points in L")
