"""Gradient extremal of a squared vector field: the CSTR reactor.

For a non-gradient field ``X`` the energy ``E = X^T X`` vanishes exactly at
steady states.  The extremal leaves the stable state and reaches another.
"""
# %%
import numpy as np

from gradex.cli import cstr_curve

segs, states, F = cstr_curve()
for s in states:
    print(f"steady state {s['point'].round(6)}  stable={s['stable']}")

# %%
for k, seg in enumerate(segs):
    print(f"segment {k}: {seg.termination}, {len(seg.states)} states, ends at {seg.exit_point.round(6)}")
end = segs[-1].exit_point
print(f"|X(end)| = {np.linalg.norm(F(end)):.2e}")
