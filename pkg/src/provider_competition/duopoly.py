"""Two-provider price competition.

Users are ranked by ``alpha = g1/g2``. For a price ratio ``nu = p2/p1`` the
users with ``alpha <= nu`` buy from provider 1 and the rest from provider 2,
so every candidate equilibrium is a cut of the sorted user list. The
optimal price ratio ``mu(nu)`` is the ratio of the monopoly prices each side
would charge over its own cut; it is piecewise constant and non-increasing,
and the equilibrium is either its fixed point (integer equilibrium) or a
split of the single user at which ``mu`` jumps over the identity
(fractional equilibrium).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constants import TOLERANCES
from .market import Market, User, clearing_price, demand, optimal_price


class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""


class InvariantError(RuntimeError):
    """Raised when a result that theory guarantees fails to materialize."""


class DegenerateBoundaryError(RuntimeError):
    """The optimal price ratio lands exactly on some user's alpha.

    This is a measure-zero configuration the equilibrium theory does not
    cover; it is reported rather than resolved by convention.
    """

    def __init__(self, message: str, table: MuTable) -> None:
        super().__init__(message)
        self.table = table


class EquilibriumKind(str, enum.Enum):
    INTEGER = "Integer"
    FRACTIONAL = "Fractional"


@dataclass(frozen=True)
class Partition:
    """Users preferring provider 1 (``set1``) and provider 2 (``set2``), in alpha order."""

    set1: tuple[int, ...]
    set2: tuple[int, ...]


@dataclass(frozen=True)
class Equilibrium:
    """Outcome of the competition game.

    Attributes:
        kind: Integer (every user buys from one provider) or Fractional.
        p1, p2: Equilibrium unit prices.
        allocations: User id -> ``(q1, q2)``.
        undecided: ``(user id, epsilon)`` for a fractional equilibrium, where
            ``epsilon`` is the share of the user's demand routed to provider 1.
    """

    kind: EquilibriumKind
    p1: float
    p2: float
    allocations: dict[int, tuple[float, float]]
    undecided: Optional[tuple[int, float]] = None

    @property
    def prices(self) -> tuple[float, float]:
        return self.p1, self.p2

    def as_array(self, market: Market) -> np.ndarray:
        """Allocations as an ``(n_users, 2)`` array in ``market.users`` order."""
        return np.array([self.allocations[u.id] for u in market.users], dtype=float)

    def affiliation(self, market: Market) -> dict[int, int]:
        """Provider each user is attached to at the equilibrium prices.

        The undecided user is indifferent and reported on provider 1, the
        tie convention.
        """
        out = {u.id: preferred_provider(u, self.p1, self.p2) for u in market.users}
        if self.undecided is not None:
            out[self.undecided[0]] = 1
        return out


@dataclass(frozen=True)
class MuTable:
    """Optimal price ratio on every interval ``[alpha_k, alpha_{k+1})``.

    Index ``k`` (0..I) is the number of alpha-sorted users on provider 1's
    side. ``ratio[0]`` is ``inf`` (provider 1 has nobody) and ``ratio[I]`` is
    0 (provider 2 has nobody).
    """

    ids: np.ndarray
    alpha: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    ratio: np.ndarray

    def lower(self, k: int) -> float:
        return 0.0 if k == 0 else float(self.alpha[k - 1])

    def upper(self, k: int) -> float:
        return np.inf if k == len(self.alpha) else float(self.alpha[k])

    def integer_intervals(self) -> list[int]:
        """Cuts whose ratio lies strictly inside their own interval."""
        return [k for k in range(len(self.ratio)) if self.lower(k) < self.ratio[k] < self.upper(k)]

    def undecided_positions(self) -> list[int]:
        """0-based sorted positions ``l`` with ``ratio[l] > alpha[l] > ratio[l+1]``."""
        return [
            i for i in range(len(self.alpha)) if self.ratio[i] > self.alpha[i] > self.ratio[i + 1]
        ]

    def boundary_hits(self) -> list[int]:
        return [k for k in range(len(self.ratio)) if self.ratio[k] in (self.lower(k), self.upper(k))]

    def dump(self) -> str:
        lines = ["k  interval                     p1*            p2*            ratio"]
        for k in range(len(self.ratio)):
            lines.append(
                f"{k:<3d}[{self.lower(k):.6g}, {self.upper(k):.6g})".ljust(32)
                + f"{self.p1[k]:<15.9g}{self.p2[k]:<15.9g}{self.ratio[k]:.9g}"
            )
        return "\n".join(lines)


def alpha(user: User) -> float:
    """Preference metric ``g1/g2``; low alpha leans toward provider 1."""
    return user.g[0] / user.g[1]


def preferred_provider(user: User, p1: float, p2: float) -> int:
    """Provider minimizing ``p_j * g_j``; ties go to provider 1."""
    if not (p1 > 0 and p2 > 0):
        raise ValueError(f"prices must be positive, got ({p1}, {p2})")
    return 1 if p1 * user.g[0] <= p2 * user.g[1] else 2


def partition_at(market: Market, nu: float) -> Partition:
    """Cut at ``nu``: ``alpha <= nu`` goes to provider 1."""
    if nu < 0:
        raise ValueError(f"cut must be nonnegative, got {nu}")
    ids = market.ids[market.order]
    k = int(np.searchsorted(market.alpha[market.order], nu, side="right"))
    return Partition(tuple(int(i) for i in ids[:k]), tuple(int(i) for i in ids[k:]))


def _sorted_columns(market: Market) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    o = market.order
    return market.ids[o], market.a[o], market.g[o, 0], market.g[o, 1]


def mu_table(market: Market) -> MuTable:
    """Side-wise optimal prices and their ratio for all ``I + 1`` cuts."""
    ids, a, g1, g2 = _sorted_columns(market)
    n = len(ids)
    p1 = np.zeros(n + 1)
    p2 = np.zeros(n + 1)
    for k in range(1, n + 1):
        p1[k] = clearing_price(a[:k], g1[:k], market.Q1)[0]
        p2[n - k] = clearing_price(a[n - k :], g2[n - k :], market.Q2)[0]
    with np.errstate(divide="ignore"):
        ratio = np.where(p1 > 0, p2 / np.where(p1 > 0, p1, 1.0), np.inf)
    return MuTable(ids, market.alpha[market.order], p1, p2, ratio)


def mu(market: Market, nu: float) -> float:
    """Optimal price ratio ``p2*(set2(nu)) / p1*(set1(nu))`` (``inf`` if set1 is empty)."""
    part = partition_at(market, nu)
    p1 = optimal_price([market.user(i) for i in part.set1], 1, market.Q1).price
    p2 = optimal_price([market.user(i) for i in part.set2], 2, market.Q2).price
    if p1 == 0.0:
        return np.inf
    return p2 / p1


def _single_side_allocations(market: Market, k: int, p1: float, p2: float) -> dict[int, tuple[float, float]]:
    ids, a, g1, g2 = _sorted_columns(market)
    alloc: dict[int, tuple[float, float]] = {}
    for i in range(len(ids)):
        if i < k:
            alloc[int(ids[i])] = (demand(a[i], g1[i], p1), 0.0)
        else:
            alloc[int(ids[i])] = (0.0, demand(a[i], g2[i], p2))
    return alloc


def find_integer_mce(market: Market, table: MuTable | None = None) -> Optional[Equilibrium]:
    """Scan the ``I + 1`` cuts for a fixed point of the optimal price ratio.

    Returns:
        The integer equilibrium, or ``None`` when no cut's ratio falls
        strictly inside its own interval.
    """
    table = table if table is not None else mu_table(market)
    hits = table.integer_intervals()
    if not hits:
        return None
    if len(hits) > 1:
        raise InvariantError(f"several cuts pass the fixed-point test: {hits}\n{table.dump()}")
    k = hits[0]
    p1, p2 = float(table.p1[k]), float(table.p2[k])
    return Equilibrium(EquilibriumKind.INTEGER, p1, p2, _single_side_allocations(market, k, p1, p2))


def epsilon_price(users: Sequence[User], g_selector: int, Q: float, scaled_user: User, eps: float) -> float:
    """Optimal price when ``scaled_user`` contributes ``(eps*a, eps*g)``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if not Q > 0:
        raise ValueError(f"supply must be positive, got {Q}")
    j = g_selector - 1
    a = np.array([u.a for u in users] + [eps * scaled_user.a])
    g = np.array([u.g[j] for u in users] + [eps * scaled_user.g[j]])
    return clearing_price(a, g, Q)[0]


class _SplitPrices:
    """Prices on both sides as the undecided user's share on side 1 moves from 0 to 1."""

    def __init__(self, market: Market, pos: int) -> None:
        ids, a, g1, g2 = _sorted_columns(market)
        self.a_l, self.g1_l, self.g2_l = a[pos], g1[pos], g2[pos]
        self.a1, self.g1 = np.append(a[:pos], 0.0), np.append(g1[:pos], 0.0)
        self.a2, self.g2 = np.append(a[pos + 1 :], 0.0), np.append(g2[pos + 1 :], 0.0)
        self.Q1, self.Q2 = market.Q1, market.Q2

    def prices(self, eps: float) -> tuple[float, float]:
        self.a1[-1], self.g1[-1] = eps * self.a_l, eps * self.g1_l
        self.a2[-1], self.g2[-1] = (1 - eps) * self.a_l, (1 - eps) * self.g2_l
        return clearing_price(self.a1, self.g1, self.Q1)[0], clearing_price(self.a2, self.g2, self.Q2)[0]

    def gap(self, eps: float) -> float:
        p1, p2 = self.prices(eps)
        return p1 * self.g1_l - p2 * self.g2_l


def _sorted_position(market: Market, user_id: int) -> int:
    ids = market.ids[market.order]
    hits = np.flatnonzero(ids == user_id)
    if hits.size == 0:
        raise ContractError(f"no user with id {user_id}")
    return int(hits[0])


def find_fractional_mce(market: Market, l: int, table: MuTable | None = None) -> Equilibrium:
    """Split the undecided user ``l`` (a user id) between the two providers.

    The share ``epsilon`` routed to provider 1 is found by bisection on
    ``p1(eps) * g_l1 - p2(1 - eps) * g_l2``, which increases in ``eps``.

    Raises:
        ContractError: ``l`` is not the undecided user of this market, or its
            demand toward one provider is already zero.
        InvariantError: the bisection does not bracket a root.
    """
    table = table if table is not None else mu_table(market)
    pos = _sorted_position(market, l)
    if not table.ratio[pos] > table.alpha[pos] > table.ratio[pos + 1]:
        raise ContractError(
            f"user {l} is not undecided: need mu(alpha_(l-1)) > alpha_l > mu(alpha_l), got "
            f"{table.ratio[pos]:.9g} > {table.alpha[pos]:.9g} > {table.ratio[pos + 1]:.9g}"
        )
    ids, a, g1, g2 = _sorted_columns(market)
    if a[pos] <= table.p1[pos] * g1[pos] or a[pos] <= table.p2[pos + 1] * g2[pos]:
        raise ContractError(f"undecided user {l} has zero demand toward one provider at the bracketing prices")

    split = _SplitPrices(market, pos)
    lo, hi = 0.0, 1.0
    if not (split.gap(lo) < 0 < split.gap(hi)):
        raise InvariantError(f"indifference gap does not change sign on [0, 1] for user {l}\n{table.dump()}")
    tol = TOLERANCES["epsilon"]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if split.gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    eps = lo if abs(split.gap(lo)) <= abs(split.gap(hi)) else hi
    p1, p2 = split.prices(eps)

    alloc = _single_side_allocations(market, pos, p1, p2)
    alloc[int(ids[pos])] = (
        eps * max(a[pos] / p1 - g1[pos], 0.0),
        (1 - eps) * max(a[pos] / p2 - g2[pos], 0.0),
    )
    return Equilibrium(EquilibriumKind.FRACTIONAL, p1, p2, alloc, (int(ids[pos]), eps))


def solve_nash(market: Market) -> Equilibrium:
    """Unique equilibrium of the two-provider game.

    Raises:
        DegenerateBoundaryError: the optimal price ratio sits exactly on a
            user's alpha, a case outside the equilibrium theory.
        InvariantError: neither or both outcome types are found otherwise.
    """
    table = mu_table(market)
    integer = find_integer_mce(market, table)
    undecided = table.undecided_positions()
    if integer is not None and not undecided:
        return integer
    if integer is None and len(undecided) == 1:
        return find_fractional_mce(market, int(table.ids[undecided[0]]), table)
    if integer is None and not undecided and table.boundary_hits():
        raise DegenerateBoundaryError(
            f"optimal price ratio lands on an alpha boundary at cut(s) {table.boundary_hits()}\n{table.dump()}",
            table,
        )
    raise InvariantError(
        f"expected exactly one of integer fixed point / undecided user, got "
        f"integer={integer is not None}, undecided positions={undecided}\n{table.dump()}"
    )
