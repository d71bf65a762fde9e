import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import markets, one_user_market
from provider_competition.duopoly import (
    ContractError,
    DegenerateBoundaryError,
    EquilibriumKind,
    alpha,
    epsilon_price,
    find_fractional_mce,
    find_integer_mce,
    mu,
    mu_table,
    partition_at,
    preferred_provider,
    solve_nash,
)
from provider_competition.market import Market, User, bisection_price_oracle, demand, optimal_price, utility
from provider_competition.welfare import exhaustive_stability_oracle


def three_alpha_market() -> Market:
    return Market.from_arrays([1, 1, 1], [0.5, 1.5, 3.0], [1, 1, 1], 1, 1)


@pytest.mark.parametrize("g, expected", [((2, 1), 2.0), ((1, 1), 1.0), ((0.5, 2), 0.25)])
def test_alpha(g, expected):
    assert alpha(User(1, 1.0, g)) == expected


@pytest.mark.parametrize("g, expected", [((1, 1), 1), ((3, 1), 2), ((2, 1), 1)])
def test_preferred_provider(g, expected):
    assert preferred_provider(User(1, 1.0, g), 1.0, 2.0) == expected


@pytest.mark.parametrize(
    "nu, set1, set2", [(2.0, (1, 2), (3,)), (0.0, (), (1, 2, 3)), (3.0, (1, 2, 3), ())]
)
def test_partition_at(nu, set1, set2):
    part = partition_at(three_alpha_market(), nu)
    assert (part.set1, part.set2) == (set1, set2)


class TestMu:
    def test_single_user(self, one_user):
        assert mu(one_user, 0.5) == math.inf
        assert mu(one_user, 1.0) == 0.0
        assert mu(one_user, 7.0) == 0.0

    @pytest.mark.parametrize("nu", [0.5, 1.0, 1.999])
    def test_two_users(self, two_users, nu):
        assert mu(two_users, nu) == pytest.approx(1.0, abs=1e-15)
        p2 = bisection_price_oracle([two_users.user(2)], 2, 1.0, tol=1e-14)
        p1 = bisection_price_oracle([two_users.user(1)], 1, 1.0, tol=1e-14)
        assert p2 / p1 == pytest.approx(1.0, abs=1e-12)

    def test_table_matches_pointwise_mu(self, two_users):
        table = mu_table(two_users)
        assert table.ratio.tolist() == [math.inf, 1.0, 0.0]
        assert table.integer_intervals() == [1]
        assert table.undecided_positions() == []


class TestInteger:
    def test_two_users(self, two_users):
        eq = find_integer_mce(two_users)
        assert eq.kind is EquilibriumKind.INTEGER
        assert eq.prices == pytest.approx((0.5, 0.5), abs=1e-15)
        assert eq.allocations[1] == pytest.approx((1.0, 0.0))
        assert eq.allocations[2] == pytest.approx((0.0, 1.0))
        oracle = exhaustive_stability_oracle(two_users)
        assert oracle.prices == pytest.approx(eq.prices, rel=1e-12)

    def test_single_user_has_none(self, one_user):
        assert find_integer_mce(one_user) is None

    def test_random_ten_users_match_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            m = Market.from_arrays(*rng.uniform(0.1, 5, size=(3, 10)), *rng.uniform(1, 10, size=2))
            eq, oracle = find_integer_mce(m), exhaustive_stability_oracle(m)
            assert (eq is None) == (oracle is None)
            if eq is not None:
                assert oracle.prices == pytest.approx(eq.prices, rel=1e-9)


class TestEpsilonPrice:
    def test_examples(self):
        scaled = User(9, 1.0, (1.0, 1.0))
        assert epsilon_price([], 1, 1.0, scaled, 0.5) == pytest.approx(1 / 3)
        assert epsilon_price([], 1, 1.0, scaled, 0.0) == 0.0
        assert epsilon_price([User(1, 1.0, (1.0, 1.0))], 1, 1.0, scaled, 1.0) == pytest.approx(2 / 3)

    def test_rejects_eps_out_of_range(self):
        with pytest.raises(ValueError):
            epsilon_price([], 1, 1.0, User(9, 1.0, (1.0, 1.0)), 1.5)


def piecewise_epsilon_price(a, g, Q, a_l, g_l, eps):
    """Reference price built from the breakpoint formulas.

    The active set at ``eps = 0`` comes from a water-level sweep over
    ``a/g`` in decreasing order. As ``eps`` grows the price rises, and the
    active user with the smallest ``a/g`` drops out at
    ``eps_i = (r_i (G + Q) - A) / (a_l - r_i g_l)``; users with ``r_i``
    at or above the scaled user's ratio never drop.
    """
    r = np.asarray(a) / np.asarray(g)
    A = G = 0.0
    active = []
    for i in np.argsort(-r):
        if A == 0.0 or r[i] > A / (G + Q):
            A, G = A + a[i], G + g[i]
            active.append(i)
        else:
            break
    if active and a_l / g_l <= A / (G + Q):
        return A / (G + Q), 0
    drops = 0
    while active:
        i = active[-1]
        if r[i] >= a_l / g_l:
            break
        brk = (r[i] * (G + Q) - A) / (a_l - r[i] * g_l)
        if brk >= eps:
            break
        A, G = A - a[i], G - g[i]
        active.pop()
        drops += 1
    return (A + eps * a_l) / (G + eps * g_l + Q), drops


@given(
    st.lists(st.tuples(st.floats(0.05, 2.0), st.floats(0.1, 5.0)), min_size=0, max_size=8),
    st.floats(1.0, 20.0),
    st.floats(0.1, 5.0),
    st.floats(0.0, 1.0),
    st.floats(0.5, 20.0),
)
def test_epsilon_price_matches_breakpoint_formulas(side, a_l, g_l, eps, Q):
    us = [User(i + 1, a, (g, g)) for i, (a, g) in enumerate(side)]
    scaled = User(99, a_l, (g_l, g_l))
    a = np.array([u.a for u in us])
    g = np.array([u.g[0] for u in us])
    expected, _ = piecewise_epsilon_price(a, g, Q, a_l, g_l, eps)
    assert epsilon_price(us, 1, Q, scaled, eps) == pytest.approx(expected, rel=1e-11, abs=1e-300)


def test_breakpoint_oracle_exercises_drops():
    a, g = np.array([1.0, 0.3, 0.2, 0.1]), np.array([1.0, 1.0, 1.0, 1.0])
    scaled = User(99, 10.0, (1.0, 1.0))
    us = [User(i + 1, ai, (gi, gi)) for i, (ai, gi) in enumerate(zip(a, g))]
    for eps in np.linspace(0, 1, 41):
        expected, drops = piecewise_epsilon_price(a, g, 5.0, 10.0, 1.0, eps)
        assert epsilon_price(us, 1, 5.0, scaled, eps) == pytest.approx(expected, rel=1e-12)
    assert drops == 3


class TestFractional:
    def test_symmetric_single_user(self, one_user):
        eq = find_fractional_mce(one_user, 1)
        assert eq.kind is EquilibriumKind.FRACTIONAL
        assert eq.undecided[0] == 1
        assert eq.undecided[1] == pytest.approx(0.5, abs=1e-12)
        assert eq.prices == pytest.approx((1 / 3, 1 / 3), abs=1e-12)
        assert eq.allocations[1] == pytest.approx((1.0, 1.0), abs=1e-10)

    def test_asymmetric_supply_single_user(self):
        # equal prices need eps / (eps + 1) == (1 - eps) / (3 - eps), i.e. 3 eps == 1
        eq = find_fractional_mce(one_user_market(1.0, 2.0), 1)
        eps = eq.undecided[1]
        assert eps == pytest.approx(1 / 3, abs=1e-10)
        assert eps / (eps + 1) == pytest.approx((1 - eps) / (3 - eps), abs=1e-12)
        assert eq.prices == pytest.approx((0.25, 0.25), abs=1e-12)
        assert eq.allocations[1] == pytest.approx((1.0, 2.0), abs=1e-10)

    def test_other_root_candidate_is_not_indifferent(self):
        eps = 2 - math.sqrt(3)
        assert abs(eps / (eps + 1) - (1 - eps) / (3 - eps)) > 0.05

    def test_wrong_user_is_rejected(self, two_users):
        with pytest.raises(ContractError):
            find_fractional_mce(two_users, 1)

    def test_unknown_user_is_rejected(self, one_user):
        with pytest.raises(ContractError):
            find_fractional_mce(one_user, 5)


def test_solve_nash_examples(two_users, one_user):
    assert solve_nash(two_users).kind is EquilibriumKind.INTEGER
    assert solve_nash(one_user).kind is EquilibriumKind.FRACTIONAL


def test_ratio_on_alpha_boundary_is_reported():
    # cut 1 gives ratio exactly 1, which is the second user's alpha
    m = Market.from_arrays([1, 1], [1, 1], [2, 1], 1, 1)
    with pytest.raises(DegenerateBoundaryError) as info:
        solve_nash(m)
    assert info.value.table.boundary_hits()


@given(
    st.floats(0.01, 10),
    st.floats(0.01, 10),
    st.floats(0.01, 10),
    st.floats(1e-3, 100),
    st.floats(1e-3, 100),
)
def test_preferred_provider_maximizes_utility(a, g1, g2, p1, p2):
    user = User(1, a, (g1, g2))
    u = [utility(user, j, p, demand(a, user.g[j - 1], p)) for j, p in ((1, p1), (2, p2))]
    pref = preferred_provider(user, p1, p2)
    assert u[pref - 1] >= max(u) - 1e-12 * a
    buys = [a > p1 * g1, a > p2 * g2]
    if buys[0] != buys[1]:
        assert pref == (1 if buys[0] else 2)
    if not any(buys):
        assert u == [0.0, 0.0]


@given(markets(max_users=10))
def test_mu_is_piecewise_constant_and_nonincreasing(market):
    table = mu_table(market)
    al = table.alpha
    points = [0.0]
    for k in range(len(al)):
        upper = al[k + 1] if k + 1 < len(al) else 2 * al[k]
        points += [al[k], 0.5 * (al[k] + upper)]
    values = [mu(market, nu) for nu in points]
    assert all(b <= a for a, b in zip(values, values[1:]))
    for k in range(len(al)):
        assert values[2 * k + 1] == values[2 * k + 2]
        assert values[2 * k + 1] == pytest.approx(table.ratio[k + 1], rel=1e-12)


@given(markets(max_users=12))
def test_exactly_one_outcome_type(market):
    table = mu_table(market)
    hits, undecided = table.integer_intervals(), table.undecided_positions()
    assert len(hits) <= 1
    assert (len(hits), len(undecided)) in {(1, 0), (0, 1)}


@given(markets(max_users=12))
def test_equilibrium_invariants(market):
    eq = solve_nash(market)
    q = eq.as_array(market)
    assert q.sum(axis=0) == pytest.approx([market.Q1, market.Q2], rel=1e-8)
    splitters = [i for i in range(market.n_users) if q[i, 0] > 0 and q[i, 1] > 0]
    assert len(splitters) <= 1
    undecided = eq.undecided[0] if eq.undecided else None
    for u in market.users:
        if u.id == undecided:
            continue
        j = preferred_provider(u, eq.p1, eq.p2)
        expected = [0.0, 0.0]
        expected[j - 1] = demand(u.a, u.g[j - 1], eq.prices[j - 1])
        assert eq.allocations[u.id] == pytest.approx(tuple(expected), rel=1e-12, abs=1e-12)
    if eq.kind is EquilibriumKind.INTEGER:
        assert not splitters
    else:
        g = market.user(undecided).g
        c1, c2 = eq.p1 * g[0], eq.p2 * g[1]
        assert abs(c1 - c2) <= 1e-9 * max(c1, c2)
        assert 0.0 <= eq.undecided[1] <= 1.0


@given(markets(max_users=12))
def test_integer_equilibrium_is_stable(market):
    eq = solve_nash(market)
    if eq.kind is not EquilibriumKind.INTEGER:
        return
    side = eq.affiliation(market)
    for j in (1, 2):
        attracted = [u for u in market.users if side[u.id] == j]
        p = optimal_price(attracted, j, market.supply(j)).price
        assert p == pytest.approx(eq.prices[j - 1], rel=1e-9)
    part = partition_at(market, eq.p2 / eq.p1)
    assert set(part.set1) == {i for i, j in side.items() if j == 1}
