"""Domain types and single-provider pricing.

A user with willingness to pay ``a`` and channel offset ``g`` facing a unit
price ``p`` buys ``(a/p - g)^+`` units of resource. A provider holding a fixed
supply ``Q`` maximizes revenue by charging the price at which aggregate demand
equals supply; that price is found by iterating the closed-form fictitious
price and discarding users with negative demand until none are left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .constants import TOLERANCES


class MarketValidationError(ValueError):
    """Raised when a user, provider or market violates its invariants."""


class OracleConvergenceError(RuntimeError):
    """Raised when a bisection cannot reach the requested tolerance."""


@dataclass(frozen=True)
class User:
    """A price-taking user.

    Attributes:
        id: Identifier, unique within a market (1-based by convention).
        a: Willingness to pay.
        g: Channel quality offsets ``(g1, g2)`` toward providers 1 and 2;
            larger means a worse channel.
    """

    id: int
    a: float
    g: tuple[float, float]

    def __post_init__(self) -> None:
        g = tuple(float(x) for x in self.g)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "g", g)
        if len(g) != 2:
            raise MarketValidationError(f"user {self.id}: g must have 2 entries, got {len(g)}")
        if not (np.isfinite(self.a) and self.a > 0):
            raise MarketValidationError(f"user {self.id}: a must be positive, got {self.a}")
        if not all(np.isfinite(x) and x > 0 for x in g):
            raise MarketValidationError(f"user {self.id}: g must be positive, got {g}")

    @property
    def alpha(self) -> float:
        return self.g[0] / self.g[1]


@dataclass(frozen=True)
class Provider:
    id: int
    supply: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "supply", float(self.supply))
        if self.id not in (1, 2):
            raise MarketValidationError(f"provider id must be 1 or 2, got {self.id}")
        if not (np.isfinite(self.supply) and self.supply > 0):
            raise MarketValidationError(f"provider {self.id}: supply must be positive, got {self.supply}")


@dataclass(frozen=True)
class Market:
    """A two-provider market instance.

    Users keep the order they were given in; solvers work on the
    alpha-sorted view exposed by :attr:`order`.
    """

    users: tuple[User, ...]
    providers: tuple[Provider, Provider]

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "providers", tuple(self.providers))
        if not self.users:
            raise MarketValidationError("market needs at least one user")
        ids = [u.id for u in self.users]
        if len(set(ids)) != len(ids):
            raise MarketValidationError("user ids must be unique")
        if len(self.providers) != 2 or [p.id for p in self.providers] != [1, 2]:
            raise MarketValidationError("market needs providers with ids (1, 2) in that order")
        alpha = np.sort(self.alpha)
        ties = np.flatnonzero(alpha[1:] == alpha[:-1])
        if ties.size:
            raise MarketValidationError(
                f"users share the same alpha = g1/g2 = {alpha[ties[0]]!r}; ties are not supported"
            )

    @classmethod
    def from_arrays(cls, a, g1, g2, Q1: float, Q2: float, ids: Iterable[int] | None = None) -> Market:
        a, g1, g2 = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (a, g1, g2))
        if not (a.shape == g1.shape == g2.shape):
            raise MarketValidationError("a, g1 and g2 must have the same length")
        ids = list(ids) if ids is not None else list(range(1, a.size + 1))
        users = tuple(User(int(i), ai, (x1, x2)) for i, ai, x1, x2 in zip(ids, a, g1, g2))
        return cls(users, (Provider(1, Q1), Provider(2, Q2)))

    @property
    def Q1(self) -> float:
        return self.providers[0].supply

    @property
    def Q2(self) -> float:
        return self.providers[1].supply

    @property
    def n_users(self) -> int:
        return len(self.users)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([u.id for u in self.users])

    @cached_property
    def a(self) -> np.ndarray:
        return np.array([u.a for u in self.users])

    @cached_property
    def g(self) -> np.ndarray:
        """Array of shape ``(n_users, 2)``."""
        return np.array([u.g for u in self.users])

    @cached_property
    def alpha(self) -> np.ndarray:
        return self.g[:, 0] / self.g[:, 1]

    @cached_property
    def order(self) -> np.ndarray:
        """Indices of :attr:`users` sorted by increasing alpha."""
        return np.argsort(self.alpha, kind="stable")

    def supply(self, provider: int) -> float:
        return self.providers[provider - 1].supply

    def user(self, user_id: int) -> User:
        for u in self.users:
            if u.id == user_id:
                return u
        raise KeyError(user_id)


@dataclass(frozen=True)
class PriceResult:
    """Monopoly optimal price over a user set.

    Attributes:
        price: Market-clearing price (0 for an empty user set).
        active_set: Ids of users with strictly positive demand at ``price``.
        trace: Fictitious price after each removal round.
    """

    price: float
    active_set: frozenset[int]
    trace: tuple[float, ...] = field(default=(), compare=False)


def demand(a: float, g: float, p: float) -> float:
    """Utility-maximizing purchase ``max(a/p - g, 0)`` at unit price ``p``."""
    if not p > 0:
        raise ValueError(f"price must be positive, got {p}")
    return max(a / p - g, 0.0)


def utility(user: User, provider_index: int, p: float, q: float) -> float:
    """Utility ``a log(1 + q/g_j) - p q`` of buying ``q`` from provider ``j``."""
    if not p > 0:
        raise ValueError(f"price must be positive, got {p}")
    if q < 0:
        raise ValueError(f"quantity must be nonnegative, got {q}")
    g = user.g[provider_index - 1]
    return user.a * np.log1p(q / g) - p * q


def _columns(users: Sequence[User], g_selector: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if g_selector not in (1, 2):
        raise ValueError(f"g_selector must be 1 or 2, got {g_selector}")
    ids = np.array([u.id for u in users], dtype=int)
    a = np.array([u.a for u in users], dtype=float)
    g = np.array([u.g[g_selector - 1] for u in users], dtype=float)
    return ids, a, g


def _check_supply(Q: float) -> None:
    if not Q > 0:
        raise ValueError(f"supply must be positive, got {Q}")


def fictitious_price(users: Sequence[User], g_selector: int, Q: float) -> float:
    """Price ``sum(a) / (sum(g) + Q)`` that clears supply if negative demand were allowed."""
    _check_supply(Q)
    _, a, g = _columns(users, g_selector)
    return float(a.sum() / (g.sum() + Q))


def clearing_price(a: np.ndarray, g: np.ndarray, Q: float) -> tuple[float, np.ndarray, list[float]]:
    """Clearing price by iterated removal of negative-demand users, on raw arrays.

    Entries with ``a == g == 0`` are allowed (a user scaled to nothing) and
    never affect the result.

    Returns:
        ``(price, kept, trace)`` where ``kept`` masks the users left in the
        fictitious-price sums at termination.
    """
    guard = TOLERANCES["demand_guard"]
    kept = np.ones(a.shape, dtype=bool)
    trace: list[float] = []
    if a.size == 0 or not np.any(a > 0):
        return 0.0, kept & (a > 0), trace
    while True:
        price = a[kept].sum() / (g[kept].sum() + Q)
        trace.append(float(price))
        surplus = a / price - g
        bad = kept & (surplus < -guard * np.maximum(g, a / price))
        if not bad.any():
            return float(price), kept, trace
        kept &= ~bad


def optimal_price(users: Sequence[User], g_selector: int, Q: float) -> PriceResult:
    """Revenue-maximizing (market-clearing) price of a single provider."""
    _check_supply(Q)
    ids, a, g = _columns(users, g_selector)
    price, _, trace = clearing_price(a, g, Q)
    if price == 0.0:
        return PriceResult(0.0, frozenset(), tuple(trace))
    active = frozenset(int(i) for i in ids[a / price - g > 0])
    return PriceResult(price, active, tuple(trace))


def bisect_increasing(f, lo: float, hi: float, xtol: float = 0.0, max_iter: int = 2000) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` around the sign change of a nondecreasing ``f``.

    Requires ``f(lo) < 0 <= f(hi)``. Stops when the bracket is narrower than
    ``xtol`` or when the midpoint is no longer representable between the ends.

    Raises:
        OracleConvergenceError: if ``max_iter`` halvings do not reach ``xtol``.
    """
    for _ in range(max_iter):
        if hi - lo <= xtol:
            return lo, hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            if xtol > 0:
                raise OracleConvergenceError(
                    f"bisection stalled at width {hi - lo:.3e} above tolerance {xtol:.3e}"
                )
            return lo, hi
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    raise OracleConvergenceError(f"bisection did not reach width {xtol:.3e} in {max_iter} steps")


def _clearing_excess(a: np.ndarray, g: np.ndarray, Q: float):
    def excess(p: float) -> float:
        return p * Q - np.maximum(a - p * g, 0.0).sum()

    return excess


def bisection_price_oracle(users: Sequence[User], g_selector: int, Q: float, tol: float) -> float:
    """Independent check of :func:`optimal_price`.

    Solves ``p Q = sum((a - p g)^+)`` by plain bisection on ``(0, max a/g]``.
    The left side increases and the right side does not, so the root is
    unique.
    """
    _check_supply(Q)
    if not users:
        raise ValueError("bisection oracle needs at least one user")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    _, a, g = _columns(users, g_selector)
    lo, hi = bisect_increasing(_clearing_excess(a, g, Q), 0.0, float(np.max(a / g)), xtol=tol, max_iter=400)
    return 0.5 * (lo + hi)


def bisect_clearing_price(a: np.ndarray, g: np.ndarray, Q: float) -> float:
    """Clearing price by bisection down to floating-point resolution (0 if empty)."""
    if a.size == 0:
        return 0.0
    lo, hi = bisect_increasing(_clearing_excess(a, g, Q), 0.0, float(np.max(a / g)))
    return 0.5 * (lo + hi)


def random_market(
    rng: np.random.Generator,
    n_users: int,
    a_range: tuple[float, float] = (0.01, 10.0),
    g_range: tuple[float, float] = (0.01, 10.0),
    q_range: tuple[float, float] = (0.1, 100.0),
) -> Market:
    """Market with parameters drawn uniformly from the given ranges."""
    a = rng.uniform(*a_range, size=n_users)
    g = rng.uniform(*g_range, size=(n_users, 2))
    Q = rng.uniform(*q_range, size=2)
    return Market.from_arrays(a, g[:, 0], g[:, 1], Q[0], Q[1])
