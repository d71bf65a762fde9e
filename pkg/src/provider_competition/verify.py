"""Cross-checks of the equilibrium solver against the independent oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import ORACLE_MAX_USERS, TOLERANCES
from .duopoly import Equilibrium, EquilibriumKind, solve_nash
from .market import Market, bisection_price_oracle, optimal_price
from .welfare import OracleCapError, check_kkt, exhaustive_stability_oracle, solve_system, total_utility


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name} residual={self.residual:.3e}"
        return f"{text} {self.detail}" if self.detail else text


def clearing_residuals(market: Market, eq: Equilibrium) -> np.ndarray:
    q = eq.as_array(market)
    supply = np.array([market.Q1, market.Q2])
    return np.abs(q.sum(axis=0) - supply) / supply


def splitters(eq: Equilibrium) -> list[int]:
    return [uid for uid, (q1, q2) in eq.allocations.items() if q1 > 0 and q2 > 0]


def check_equilibrium_kkt(market: Market, eq: Equilibrium, tol: float | None = None) -> CheckResult:
    report = check_kkt(market, eq, eq.p1, eq.p2, tol)
    residual = max(
        report.max_stationarity_residual, report.max_complementarity_residual, *report.clearing_residual
    )
    return CheckResult("kkt", report.passes, residual, f"feasible={report.feasible}")


def verify_market(market: Market, exhaustive: Optional[bool] = None) -> list[CheckResult]:
    """Run every oracle comparison on one market.

    Args:
        exhaustive: Run the brute-force stability oracle. ``None`` runs it
            only when the market is within the oracle's size cap; ``True``
            raises :class:`OracleCapError` beyond the cap.
    """
    if exhaustive and market.n_users > ORACLE_MAX_USERS:
        raise OracleCapError(f"exhaustive oracle is capped at {ORACLE_MAX_USERS} users, got {market.n_users}")
    results = []
    price_tol = TOLERANCES["price"]
    for j in (1, 2):
        fast = optimal_price(market.users, j, market.supply(j)).price
        slow = bisection_price_oracle(market.users, j, market.supply(j), tol=1e-14 * max(fast, 1e-300))
        res = abs(fast - slow) / fast
        results.append(CheckResult(f"monopoly_price[{j}]", res <= price_tol, res))

    eq = solve_nash(market)
    clear = float(clearing_residuals(market, eq).max())
    results.append(CheckResult("clearing", clear <= TOLERANCES["clearing"], clear, f"kind={eq.kind.value}"))
    n_split = len(splitters(eq))
    results.append(CheckResult("at_most_one_splitter", n_split <= 1, float(n_split)))
    if eq.kind is EquilibriumKind.FRACTIONAL:
        uid = eq.undecided[0]
        g = market.user(uid).g
        c1, c2 = eq.p1 * g[0], eq.p2 * g[1]
        res = abs(c1 - c2) / max(c1, c2)
        results.append(CheckResult("indifference", res <= TOLERANCES["indifference"], res))

    if exhaustive or (exhaustive is None and market.n_users <= ORACLE_MAX_USERS):
        oracle = exhaustive_stability_oracle(market)
        agree = (oracle is not None) == (eq.kind is EquilibriumKind.INTEGER)
        res = 0.0
        if agree and oracle is not None:
            res = max(abs(oracle.p1 - eq.p1) / eq.p1, abs(oracle.p2 - eq.p2) / eq.p2)
        results.append(CheckResult("stability_oracle", agree and res <= price_tol, res))

    system = solve_system(market)
    scale = max(1.0, market.Q1, market.Q2)
    diff = float(np.max(np.abs(system.allocation.as_array(market) - eq.as_array(market)))) / scale
    results.append(CheckResult("system_allocation", diff <= TOLERANCES["allocation"], diff))
    u_eq, u_sys = total_utility(market, eq), total_utility(market, system.allocation)
    res = (u_sys - u_eq) / max(abs(u_sys), 1e-300)
    results.append(CheckResult("system_utility", res <= 1e-8, max(res, 0.0)))
    results.append(check_equilibrium_kkt(market, eq))
    return results


def verify_replay(market: Market, eq: Equilibrium) -> list[CheckResult]:
    """Checks for an equilibrium read back from a file."""
    results = [check_equilibrium_kkt(market, eq)]
    fresh = solve_nash(market)
    res = max(abs(fresh.p1 - eq.p1) / fresh.p1, abs(fresh.p2 - eq.p2) / fresh.p2)
    results.append(CheckResult("matches_fresh_solve", res <= 1e-9 and fresh.kind == eq.kind, res))
    return results
