"""Four paths from a minimum towards a saddle on the Mueller-Brown surface.

Gradient extremal, Newton trajectory, gentlest ascent dynamics and the string
method are computed from the same start.  Only the string path has a tangent
parallel to the gradient; all four curves are distinct.
"""
# %%
import numpy as np

from gradex.cli import run_comparison
from gradex.comparison_paths import pairwise_distinctness, tangent_gradient_sines
from gradex.potentials import MuellerBrown

results, status = run_comparison("mb")
for name, s in status.items():
    print(f"{name:<7} ok={s['ok']}  nodes={s.get('nodes')}  end={np.round(s.get('end'), 5)}")

# %%
names = list(results)
D = pairwise_distinctness([results[n] for n in names])
print("Hausdorff distances:")
print("        " + "".join(f"{n:>9}" for n in names))
for n, row in zip(names, D):
    print(f"{n:<8}" + "".join(f"{v:9.4f}" for v in row))

# %%
E = MuellerBrown()
for name, res in results.items():
    print(f"{name:<7} max |sin(tangent, gradient)| = {tangent_gradient_sines(E, res.nodes).max():.3f}")
