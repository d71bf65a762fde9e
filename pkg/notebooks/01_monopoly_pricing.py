# # Pricing a single provider
#
# A provider with supply `Q` sells to users whose demand at unit price `p`
# is `(a/p - g)^+`. Its revenue-maximizing price is the one at which total
# demand equals supply.

# ## Imports

import numpy as np

from provider_competition import User, bisection_price_oracle, demand, fictitious_price, optimal_price

# ## A weak user drops out
#
# The closed-form fictitious price treats every user as buying, even at a
# negative quantity. Users with negative demand are removed and the price is
# recomputed until nobody is left with negative demand.

users = [User(1, 1.0, (1.0, 1.0)), User(2, 0.01, (1.0, 1.0))]
print("fictitious price with both users:", fictitious_price(users, 1, 1.0))
res = optimal_price(users, 1, 1.0)
print("optimal price:", res.price, "active users:", sorted(res.active_set), "trace:", res.trace)

# ## Independent check by bisection

rng = np.random.default_rng(0)
a, g = rng.uniform(0.01, 10, 40), rng.uniform(0.01, 10, 40)
crowd = [User(i + 1, ai, (gi, gi)) for i, (ai, gi) in enumerate(zip(a, g))]
p = optimal_price(crowd, 1, 25.0).price
print("removal iteration:", p)
print("bisection        :", bisection_price_oracle(crowd, 1, 25.0, tol=1e-14))
print("demand at price  :", sum(demand(u.a, u.g[0], p) for u in crowd), "(supply 25)")

# ## More users never lower the price

prices = [optimal_price(crowd[:k], 1, 25.0).price for k in range(0, 41, 5)]
print("price as users are added:", np.round(prices, 4))
