"""Mean-field transition on the 2D square lattice at R_b/a = 1.4.

The steepest change of the time-averaged <Sz^2> should track the lower
astroid branch.  Runtime is about 20 s.
"""

import numpy as np

from rydquench.classical import (ClassicalParams, approximate_critical_delta, astroid_boundary,
                                 classical_sweep, steepest_change)
from rydquench.params import QuenchParams

P = QuenchParams()
a = P.spacing_for(1.4)
cp = ClassicalParams.for_geometry(P, a, "square2d", 3)
print(f"K = {cp.K / P.omega:.2f} Omega")

root = astroid_boundary(cp)[0] / P.omega
print(f"astroid lower branch {root:.3f}, approximation {approximate_critical_delta(cp) / P.omega:.3f}")

xs = np.round(np.arange(4.0, 5.5 + 1e-9, 0.05), 10)
rows = classical_sweep(P, a, xs, "square2d", 3, 50.0)
sz2 = [r["Sz2"] for r in rows]
for x, s in zip(xs[::5], sz2[::5]):
    print(f"  Delta/Omega = {x:.2f}  <Sz^2> = {s:.3f}")
print(f"steepest change at {steepest_change(xs, sz2):.3f}")
