"""Resonance peaks along the R_b/a = 1.4 cut of a 12-atom ring.

Quench from the vacuum, average 10 us, and locate the island-density peaks.
They sit near Delta = V1/3, V1/2 and 2V1/3.  Runtime is about half a minute.
"""

from rydquench.params import QuenchParams
from rydquench.sweep import GridSpec, LatticeTemplate, SweepPlan, dominant_peak, run_sweep

P = QuenchParams()
RB = 1.4
V1 = RB**6          # V1 / Omega

plan = SweepPlan(GridSpec(-2.0, 6.0, 0.1), GridSpec.point(RB),
                 observables=("O_nn", "O_L1", "O_L2", "O_L3"), t_final=10.0, dt=0.01)
grid = run_sweep(LatticeTemplate("ring1d", 12), P, plan)

for name, k in (("O_L1", 1 / 3), ("O_L2", 1 / 2), ("O_L3", 2 / 3)):
    x, y = grid.cut(name)
    pk = dominant_peak(x, y, lo=1.5)
    print(f"{name}: peak at Delta/Omega = {pk.location:.2f}, expected {k * V1:.2f}")

x, y = grid.cut("O_nn")
print("O_nn stays dark around Delta = 0:", max(y[(x >= -1) & (x <= 1)]) < 0.01)
