# # The equilibrium maximizes total utility
#
# Total utility is `sum_i a_i log(1 + q_i1/g_i1 + q_i2/g_i2)` subject to each
# provider's supply being used up. The welfare solver works from the dual
# side and shares no code with the equilibrium search.

# ## Imports

import numpy as np

from provider_competition import check_kkt, random_market, solve_nash, solve_system, total_utility
from provider_competition.welfare import batch_total_utility, random_clearing_allocations

# ## One market, two solvers

rng = np.random.default_rng(5)
market = random_market(rng, 10)
eq, sol = solve_nash(market), solve_system(market)
print("equilibrium:", eq.kind.value, np.round(eq.prices, 8))
print("welfare    :", np.round((sol.p1, sol.p2), 8))
print("largest allocation gap:", np.max(np.abs(eq.as_array(market) - sol.allocation.as_array(market))))
print(check_kkt(market, eq, eq.p1, eq.p2))

# ## No random clearing allocation does better

samples = batch_total_utility(market, random_clearing_allocations(market, 5000, rng))
print("equilibrium utility:", total_utility(market, eq))
print("best of 5000 random allocations:", samples.max())
