"""Social welfare: total utility, KKT checks and independent solvers.

Instantiated for logarithmic valuations ``v_i(x) = a_i log(1 + x)`` where
``x_i = q_i1/g_i1 + q_i2/g_i2``. The solvers here do not reuse the
fictitious-price iteration or the optimal-ratio table from
:mod:`provider_competition.duopoly`; they are meant to check it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .constants import ORACLE_FULL_SCAN_MAX_USERS, ORACLE_MAX_USERS, TOLERANCES
from .duopoly import Equilibrium, EquilibriumKind, InvariantError
from .market import Market, bisect_clearing_price


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget."""


class OracleCapError(ValueError):
    """Raised when an instance is too large for exhaustive enumeration."""


@dataclass(frozen=True)
class Allocation:
    """Resource bought by each user from each provider: user id -> ``(q1, q2)``."""

    q: dict[int, tuple[float, float]]

    def __post_init__(self) -> None:
        for uid, pair in self.q.items():
            if len(pair) != 2 or min(pair) < 0:
                raise ValueError(f"allocation of user {uid} must be two nonnegative numbers, got {pair}")

    @classmethod
    def from_array(cls, market: Market, q: np.ndarray) -> Allocation:
        return cls({u.id: (float(q[i, 0]), float(q[i, 1])) for i, u in enumerate(market.users)})

    @classmethod
    def of(cls, eq: Equilibrium) -> Allocation:
        return cls({uid: (float(q1), float(q2)) for uid, (q1, q2) in eq.allocations.items()})

    def as_array(self, market: Market) -> np.ndarray:
        return np.array([self.q.get(u.id, (0.0, 0.0)) for u in market.users], dtype=float)

    def feasible(self, Q1: float, Q2: float) -> bool:
        arr = np.array(list(self.q.values()), dtype=float).reshape(-1, 2)
        return bool(arr[:, 0].sum() <= Q1 and arr[:, 1].sum() <= Q2)


@dataclass(frozen=True)
class KktReport:
    p1: float
    p2: float
    max_stationarity_residual: float
    max_complementarity_residual: float
    clearing_residual: tuple[float, float]
    feasible: bool
    passes: bool
    tol: float

    def as_dict(self) -> dict:
        return {
            "p1": self.p1,
            "p2": self.p2,
            "max_stationarity_residual": self.max_stationarity_residual,
            "max_complementarity_residual": self.max_complementarity_residual,
            "clearing_residual": list(self.clearing_residual),
            "feasible": self.feasible,
            "passes": self.passes,
            "tol": self.tol,
        }


class SystemSolution(NamedTuple):
    allocation: Allocation
    p1: float
    p2: float


def _as_array(market: Market, alloc) -> np.ndarray:
    if isinstance(alloc, Allocation):
        return alloc.as_array(market)
    if isinstance(alloc, Equilibrium):
        return alloc.as_array(market)
    return np.asarray(alloc, dtype=float)


def effective_rate(market: Market, q: np.ndarray) -> np.ndarray:
    """``x_i = q_i1/g_i1 + q_i2/g_i2``; ``q`` may carry leading batch axes."""
    return (q / market.g).sum(axis=-1)


def total_utility(market: Market, alloc) -> float:
    """Total network utility ``sum_i a_i log(1 + x_i)``; payments cancel out."""
    q = _as_array(market, alloc)
    if np.any(q < 0):
        raise ValueError("allocation must be nonnegative")
    return float(np.sum(market.a * np.log1p(effective_rate(market, q))))


def batch_total_utility(market: Market, q: np.ndarray) -> np.ndarray:
    """Total utility of a stack of allocations shaped ``(n, n_users, 2)``."""
    return np.sum(market.a * np.log1p(effective_rate(market, q)), axis=-1)


def check_kkt(market: Market, alloc, p1: float, p2: float, tol: float | None = None) -> KktReport:
    """Evaluate the optimality conditions of the welfare problem at ``(alloc, p1, p2)``.

    Stationarity and complementarity are absolute residuals; clearing is
    relative to each provider's supply.
    """
    tol = TOLERANCES["kkt"] if tol is None else tol
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    q = _as_array(market, alloc)
    x = effective_rate(market, np.maximum(q, 0.0))
    prices = np.array([p1, p2], dtype=float)
    slack = (market.a / (1.0 + x))[:, None] / market.g - prices
    stationarity = float(max(np.max(slack), 0.0))
    complementarity = float(np.max(np.abs(q * slack)))
    supply = np.array([market.Q1, market.Q2])
    clearing = np.abs(q.sum(axis=0) - supply) / supply
    feasible = bool(np.all(q >= 0) and p1 > 0 and p2 > 0)
    passes = feasible and stationarity <= tol and complementarity <= tol and bool(np.all(clearing <= tol))
    return KktReport(
        float(p1), float(p2), stationarity, complementarity,
        (float(clearing[0]), float(clearing[1])), feasible, passes, tol,
    )


class _SortedMarket:
    def __init__(self, market: Market) -> None:
        o = market.order
        self.order = o
        self.a = market.a[o]
        self.g1 = market.g[o, 0]
        self.g2 = market.g[o, 1]
        self.alpha = market.alpha[o]
        self.Q1, self.Q2 = market.Q1, market.Q2
        self.n = len(o)
        self._p2: dict[int, float] = {}

    def p2_of_suffix(self, k: int) -> float:
        """Clearing price of provider 2 over sorted users ``k..n-1``."""
        if k not in self._p2:
            self._p2[k] = bisect_clearing_price(self.a[k:], self.g2[k:], self.Q2)
        return self._p2[k]

    def excess1(self, nu: float) -> float:
        """Provider 1's excess demand when the price ratio is ``nu`` and provider 2 clears."""
        k = int(np.searchsorted(self.alpha, nu, side="right"))
        if k == 0:
            return -self.Q1
        if k == self.n:
            return np.inf
        p1 = self.p2_of_suffix(k) / nu
        return float(np.maximum(self.a[:k] / p1 - self.g1[:k], 0.0).sum() - self.Q1)


def solve_system(market: Market, tol: float | None = None, max_iters: int = 400) -> SystemSolution:
    """Maximize total utility subject to exact clearing, by dual bisection.

    At multipliers ``(p1, p2)`` each user buys only from the provider with the
    smaller ``p_j g_ij`` and its closed-form demand there. The outer loop
    bisects (geometrically) on the ratio ``nu = p2/p1``, with ``p2`` set to
    clear provider 2; provider 1's excess demand is nondecreasing in ``nu``.
    If the sign change happens across a jump at some user's alpha, that user
    is split: the common marginal cost ``c = p1 g_l1 = p2 g_l2`` is bisected
    so the residual supplies exactly cover the user's optimal effective rate.

    Raises:
        ConvergenceError: if either bisection exhausts ``max_iters``.
    """
    tol = TOLERANCES["kkt"] if tol is None else tol
    sm = _SortedMarket(market)
    lo, hi = sm.alpha[0] / 2.0, sm.alpha[-1] * 2.0
    for _ in range(max_iters):
        mid = np.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if sm.excess1(mid) < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError(f"ratio bisection did not converge: bracket [{lo:.17g}, {hi:.17g}]")

    k_lo = int(np.searchsorted(sm.alpha, lo, side="right"))
    k_hi = int(np.searchsorted(sm.alpha, hi, side="right"))
    q = np.zeros((sm.n, 2))
    if k_lo == k_hi:
        k = k_lo
        p1 = bisect_clearing_price(sm.a[:k], sm.g1[:k], sm.Q1)
        p2 = sm.p2_of_suffix(k)
        q[:k, 0] = np.maximum(sm.a[:k] / p1 - sm.g1[:k], 0.0)
        q[k:, 1] = np.maximum(sm.a[k:] / p2 - sm.g2[k:], 0.0)
    elif k_hi == k_lo + 1:
        p1, p2 = _split_fill(sm, k_lo, q, max_iters)
    else:
        raise ConvergenceError(f"ratio bracket [{lo:.17g}, {hi:.17g}] still spans several users")

    out = np.empty_like(q)
    out[sm.order] = q
    solution = SystemSolution(Allocation.from_array(market, out), float(p1), float(p2))
    report = check_kkt(market, solution.allocation, solution.p1, solution.p2, tol)
    if not report.passes:
        raise ConvergenceError(f"welfare solution fails KKT at tol={tol}: {report}")
    return solution


def _split_fill(sm: _SortedMarket, l: int, q: np.ndarray, max_iters: int) -> tuple[float, float]:
    a_l, g1_l, g2_l = sm.a[l], sm.g1[l], sm.g2[l]
    a1, g1 = sm.a[:l], sm.g1[:l]
    a2, g2 = sm.a[l + 1 :], sm.g2[l + 1 :]

    def residuals(c: float) -> tuple[float, float, np.ndarray, np.ndarray]:
        d1 = np.maximum(a1 * g1_l / c - g1, 0.0)
        d2 = np.maximum(a2 * g2_l / c - g2, 0.0)
        return sm.Q1 - d1.sum(), sm.Q2 - d2.sum(), d1, d2

    def balance(c: float) -> float:
        r1, r2, _, _ = residuals(c)
        return r1 / g1_l + r2 / g2_l - max(a_l / c - 1.0, 0.0)

    # at c_hi nobody else buys and the split user wants nothing, so balance > 0
    c_hi = float(np.max(np.concatenate([[a_l], g1_l * a1 / g1, g2_l * a2 / g2])))
    lo, hi = 0.0, c_hi
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if balance(mid) < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError("split-user bisection did not converge")
    c = 0.5 * (lo + hi)
    r1, r2, d1, d2 = residuals(c)
    q[:l, 0] = d1
    q[l + 1 :, 1] = d2
    q[l] = max(r1, 0.0), max(r2, 0.0)
    return c / g1_l, c / g2_l


def _bisect_prices(a: np.ndarray, g: np.ndarray, masks: np.ndarray, Q: float, iters: int = 90) -> np.ndarray:
    """Clearing price of every masked user subset at once (0 for empty subsets)."""
    ratio = np.where(masks, a / g, 0.0)
    hi = ratio.max(axis=1)
    lo = np.zeros_like(hi)
    wa, wg = np.where(masks, a, 0.0), np.where(masks, g, 0.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        excess = mid * Q - np.maximum(wa - mid[:, None] * wg, 0.0).sum(axis=1)
        below = excess < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def stable_partitions(market: Market, masks: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Test user-provider partitions for stability.

    A partition is stable when, at the clearing prices each provider charges
    its own users, every user on side ``j`` strictly prefers ``j`` (smaller
    ``p_j g_ij``). Empty sides charge 0.

    Args:
        masks: Boolean ``(n_partitions, n_users)``; True puts a user on
            provider 1. Defaults to all ``2^I`` partitions.

    Returns:
        ``(masks, prices, stable)`` with prices shaped ``(n_partitions, 2)``.
    """
    n = market.n_users
    if masks is None:
        if n > ORACLE_FULL_SCAN_MAX_USERS:
            raise OracleCapError(f"full partition scan is capped at {ORACLE_FULL_SCAN_MAX_USERS} users, got {n}")
        masks = np.array(list(itertools.product([False, True], repeat=n)), dtype=bool).reshape(-1, n)
    a, g1, g2 = market.a, market.g[:, 0], market.g[:, 1]
    p1 = _bisect_prices(a, g1, masks, market.Q1)
    p2 = _bisect_prices(a, g2, ~masks, market.Q2)
    cost1 = p1[:, None] * g1
    cost2 = p2[:, None] * g2
    stable = np.all(np.where(masks, cost1 < cost2, cost2 < cost1), axis=1)
    return masks, np.column_stack([p1, p2]), stable


def is_contiguous(market: Market, mask: np.ndarray) -> bool:
    """Whether provider 1's users form a prefix of the alpha order."""
    m = np.asarray(mask)[market.order]
    return not np.any(~m[:-1] & m[1:])


def exhaustive_stability_oracle(market: Market) -> Optional[Equilibrium]:
    """Brute-force search for a stable single-provider assignment.

    Every one of the ``I + 1`` alpha cuts is tested; for up to 12 users all
    ``2^I`` partitions are tested as well, and a stable partition that is
    not a cut raises :class:`InvariantError`.

    Returns:
        The stable integer outcome, or ``None`` if no assignment is stable.
    """
    n = market.n_users
    if n > ORACLE_MAX_USERS:
        raise OracleCapError(f"exhaustive oracle is capped at {ORACLE_MAX_USERS} users, got {n}")
    rank = np.empty(n, dtype=int)
    rank[market.order] = np.arange(n)
    cuts = rank[None, :] < np.arange(n + 1)[:, None]
    if n <= ORACLE_FULL_SCAN_MAX_USERS:
        masks, prices, stable = stable_partitions(market)
        for mask in masks[stable]:
            if not is_contiguous(market, mask):
                raise InvariantError(f"stable partition is not an alpha cut: {mask.astype(int)}")
    masks, prices, stable = stable_partitions(market, cuts)
    hits = np.flatnonzero(stable)
    if hits.size == 0:
        return None
    if hits.size > 1:
        raise InvariantError(f"several stable cuts: {hits.tolist()}")
    mask = masks[hits[0]]
    p1, p2 = prices[hits[0]]
    q = np.zeros((n, 2))
    q[mask, 0] = np.maximum(market.a[mask] / p1 - market.g[mask, 0], 0.0)
    q[~mask, 1] = np.maximum(market.a[~mask] / p2 - market.g[~mask, 1], 0.0)
    alloc = {u.id: (float(q[i, 0]), float(q[i, 1])) for i, u in enumerate(market.users)}
    return Equilibrium(EquilibriumKind.INTEGER, float(p1), float(p2), alloc)


def random_clearing_allocations(market: Market, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random allocations that each clear both providers exactly, shaped ``(n, I, 2)``."""
    q = rng.exponential(size=(n, market.n_users, 2))
    # sparsify so some samples sit on faces of the feasible polytope
    q *= rng.random(size=q.shape) < 0.7
    empty = q.sum(axis=1, keepdims=True) == 0
    q = np.where(empty, 1.0, q)
    return q / q.sum(axis=1, keepdims=True) * np.array([market.Q1, market.Q2])
