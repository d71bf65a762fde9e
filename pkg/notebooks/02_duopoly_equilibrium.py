# # Two providers competing on price
#
# Each user joins the provider with the smaller `p_j * g_j`. Sorting users by
# `alpha = g1/g2` turns every price ratio into a cut of that ordering, and the
# equilibrium is either a cut that reproduces its own price ratio or a split
# of one undecided user between both providers.

# ## Imports

import numpy as np

from provider_competition import Market, mu_table, solve_nash

# ## Integer outcome: two mirror-image users

pair = Market.from_arrays([1.0, 1.0], [1.0, 2.0], [2.0, 1.0], 1.0, 1.0)
eq = solve_nash(pair)
print(eq.kind.value, eq.prices, eq.allocations)

# ## Fractional outcome: one user, two providers
#
# Whoever serves the lone user alone would leave the other provider free, so
# the user splits its purchase until both unit costs are equal.

for Q2 in (1.0, 2.0):
    eq = solve_nash(Market.from_arrays([1.0], [1.0], [1.0], 1.0, Q2))
    print(f"Q2={Q2}: prices {eq.prices}, share on provider 1 {eq.undecided[1]:.6f}, allocation {eq.allocations[1]}")

# ## The table behind the search
#
# Row `k` puts the first `k` users (in alpha order) on provider 1. An integer
# equilibrium is a row whose price ratio falls strictly inside its interval.

rng = np.random.default_rng(11)
market = Market.from_arrays(*rng.uniform(0.2, 3, size=(3, 6)), 4.0, 2.0)
table = mu_table(market)
print(table.dump())
eq = solve_nash(market)
print("outcome:", eq.kind.value, "prices:", np.round(eq.prices, 6), "undecided:", eq.undecided)
