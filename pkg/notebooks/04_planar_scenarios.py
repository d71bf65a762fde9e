# # Users on a plane
#
# Two base stations sit on a 10 x 20 area. A user at distance `d` has channel
# offset `d**beta`, so a larger path-loss exponent ties users more firmly to
# the nearer station.

# ## Imports

import numpy as np

from provider_competition import (
    Region,
    asymmetric_density_scenario,
    region_grid,
    solve_nash,
    sweep_beta,
    uniform_scenario,
)
from provider_competition.scenario import provider1_users

# ## Competition fades as path loss grows

scenario = uniform_scenario(30, seed=42)
print(" beta   p1 duo     p1 mono    p2 duo     p2 mono    kind")
for r in sweep_beta(scenario, [2.0 + 0.5 * k for k in range(9)]):
    print(f"{r.beta:5.1f}  {r.p1_duo:.3e}  {r.p1_mono:.3e}  {r.p2_duo:.3e}  {r.p2_mono:.3e}  {r.kind}")

# ## More supply attracts more users

for factor in (1, 10):
    s = uniform_scenario(30, seed=42, Q1=factor * scenario.Q1)
    m = s.compile()
    print(f"Q1 x{factor}: provider 1 serves {provider1_users(m, solve_nash(m))} of 30 users")

# ## The provider with fewer nearby users charges less

dense = asymmetric_density_scenario(seed=42)
eq = solve_nash(dense.compile())
print("sparse side price", eq.p1, "dense side price", eq.p2)

# ## Where a probe user would buy
#
# `1`/`2` mark the provider a probe with `a = 1` would join; `.` marks cells
# where it would not buy at all.

grid = region_grid(dense, eq.p1, eq.p2, probe_a=1.0, resolution=(40, 20), three_region=True)
symbols = {Region.NO_DEMAND: ".", Region.PROVIDER1: "1", Region.PROVIDER2: "2"}
for row in grid.cells[::-1]:
    print("".join(symbols[Region(v)] for v in row))
