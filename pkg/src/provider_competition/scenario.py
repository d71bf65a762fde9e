"""Planar deployments: two base stations, users on a rectangle, path loss.

A user at distance ``d`` from a base station has channel offset
``g = d**beta``. Random draws use PCG64 streams keyed by
``SeedSequence(seed, spawn_key=(user_index, stream))``, so each user's
position and willingness to pay depend only on the seed and the user's own
index: growing a scenario never reshuffles existing users.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .duopoly import Equilibrium, solve_nash
from .market import Market, MarketValidationError, optimal_price

log = logging.getLogger(__name__)

DEFAULT_AREA = (10.0, 20.0)
DEFAULT_BS = ((2.5, 10.0), (7.5, 10.0))
DEFAULT_A_RANGE = (0.5, 1.5)
# Large enough that users a few units from a base station still buy at beta = 3.
DEFAULT_SUPPLY = 1000.0

_STREAM_POSITION = 0
_STREAM_WTP = 1
_STREAM_JITTER = 2
_MAX_JITTER_ROUNDS = 8


class ScenarioValidationError(MarketValidationError):
    pass


class Region(enum.IntEnum):
    """Cell labels of a :class:`RegionGrid` (the integers are written to CSV)."""

    NO_DEMAND = 0
    PROVIDER1 = 1
    PROVIDER2 = 2
    NO_DEMAND1 = 3
    NO_DEMAND2 = 4


def user_rng(seed: int, index: int, stream: int, *extra: int) -> np.random.Generator:
    """Generator owned by one user index and one purpose."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index, stream, *extra))))


@dataclass(frozen=True)
class PlanarScenario:
    """A deployment on a ``width x height`` rectangle.

    Attributes:
        a_values: Explicit willingness to pay per user; drawn uniformly from
            ``a_range`` with the user's own stream when ``None``.
    """

    user_positions: tuple[tuple[float, float], ...]
    area: tuple[float, float] = DEFAULT_AREA
    bs_positions: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_BS
    a_range: tuple[float, float] = DEFAULT_A_RANGE
    beta: float = 3.0
    Q1: float = DEFAULT_SUPPLY
    Q2: float = DEFAULT_SUPPLY
    seed: int = 42
    a_values: Optional[tuple[float, ...]] = field(default=None)

    def __post_init__(self) -> None:
        pos = tuple((float(x), float(y)) for x, y in self.user_positions)
        object.__setattr__(self, "user_positions", pos)
        object.__setattr__(self, "area", tuple(float(v) for v in self.area))
        object.__setattr__(self, "bs_positions", tuple((float(x), float(y)) for x, y in self.bs_positions))
        object.__setattr__(self, "a_range", tuple(float(v) for v in self.a_range))
        if self.a_values is not None:
            object.__setattr__(self, "a_values", tuple(float(v) for v in self.a_values))
        w, h = self.area
        if not (w > 0 and h > 0):
            raise ScenarioValidationError(f"area must be positive, got {self.area}")
        if len(self.bs_positions) != 2:
            raise ScenarioValidationError("exactly two base stations are supported")
        if not pos:
            raise ScenarioValidationError("scenario needs at least one user")
        for x, y in pos + self.bs_positions:
            if not (0 <= x <= w and 0 <= y <= h):
                raise ScenarioValidationError(f"point ({x}, {y}) lies outside the {w} x {h} area")
        if not self.beta >= 0:
            raise ScenarioValidationError(f"beta must be nonnegative, got {self.beta}")
        lo, hi = self.a_range
        if not (0 < lo <= hi):
            raise ScenarioValidationError(f"a_range must satisfy 0 < low <= high, got {self.a_range}")
        if not (self.Q1 > 0 and self.Q2 > 0):
            raise ScenarioValidationError("supplies must be positive")
        if self.a_values is not None and len(self.a_values) != len(pos):
            raise ScenarioValidationError("a_values must have one entry per user")
        if np.min(self.distances()) <= 1e-9:
            raise ScenarioValidationError("a user coincides with a base station")

    @property
    def n_users(self) -> int:
        return len(self.user_positions)

    def distances(self, positions: np.ndarray | None = None) -> np.ndarray:
        """Euclidean distances ``(n_users, 2)`` to the two base stations."""
        pos = np.asarray(self.user_positions if positions is None else positions, dtype=float)
        bs = np.asarray(self.bs_positions)
        return np.linalg.norm(pos[:, None, :] - bs[None, :, :], axis=-1)

    def willingness(self) -> np.ndarray:
        if self.a_values is not None:
            return np.asarray(self.a_values)
        lo, hi = self.a_range
        return np.array([user_rng(self.seed, i, _STREAM_WTP).uniform(lo, hi) for i in range(self.n_users)])

    def compile(self) -> Market:
        return compile_scenario(self)


def uniform_scenario(n_users: int = 30, seed: int = 42, **kwargs) -> PlanarScenario:
    """Users placed uniformly over the area, one substream per user."""
    w, h = kwargs.get("area", DEFAULT_AREA)
    pos = tuple(tuple(user_rng(seed, i, _STREAM_POSITION).uniform((0, 0), (w, h))) for i in range(n_users))
    return PlanarScenario(user_positions=pos, seed=seed, **kwargs)


def asymmetric_density_scenario(
    n_sparse: int = 10, n_dense: int = 20, seed: int = 42, a: float = 1.0, **kwargs
) -> PlanarScenario:
    """Few users on provider 1's half of the area, many on provider 2's.

    All users share the same willingness to pay ``a``.
    """
    w, h = kwargs.get("area", DEFAULT_AREA)
    pos = []
    for i in range(n_sparse + n_dense):
        x0 = 0.0 if i < n_sparse else w / 2
        pos.append(tuple(user_rng(seed, i, _STREAM_POSITION).uniform((x0, 0), (x0 + w / 2, h))))
    return PlanarScenario(
        user_positions=tuple(pos), seed=seed, a_range=(a, a), a_values=(a,) * len(pos), **kwargs
    )


def _alpha_ties(g: np.ndarray) -> np.ndarray:
    alpha = g[:, 0] / g[:, 1]
    order = np.argsort(alpha, kind="stable")
    dup = np.flatnonzero(alpha[order][1:] == alpha[order][:-1])
    return np.unique(np.concatenate([order[dup], order[dup + 1]]))


def compile_scenario(scenario: PlanarScenario) -> Market:
    """Map a deployment to a market with ``g_ij = d_ij ** beta``.

    Users whose alpha values coincide exactly are nudged by at most 1e-9
    (deterministically, from their own streams) until the tie breaks.

    Raises:
        ScenarioValidationError: the ties survive every nudge, e.g. when
            ``beta == 0`` makes every alpha equal to 1.
    """
    pos = np.asarray(scenario.user_positions, dtype=float)
    g = scenario.distances(pos) ** scenario.beta
    ties = _alpha_ties(g)
    rounds = 0
    while ties.size and rounds < _MAX_JITTER_ROUNDS:
        rounds += 1
        log.info("alpha tie among users %s; perturbing positions (round %d)", (ties + 1).tolist(), rounds)
        for i in ties:
            pos[i] += user_rng(scenario.seed, int(i), _STREAM_JITTER, rounds).uniform(-1e-9, 1e-9, size=2)
        g = scenario.distances(pos) ** scenario.beta
        ties = _alpha_ties(g)
    if ties.size:
        raise ScenarioValidationError(
            f"users {(ties + 1).tolist()} keep identical alpha after {rounds} perturbations "
            f"(beta = {scenario.beta})"
        )
    return Market.from_arrays(scenario.willingness(), g[:, 0], g[:, 1], scenario.Q1, scenario.Q2)


@dataclass(frozen=True)
class RegionGrid:
    """Preference labels on cell centers; ``cells[iy, ix]``, row 0 at ``y`` near 0."""

    resolution: tuple[int, int]
    cells: np.ndarray
    prices: tuple[float, float]
    probe_a: float


def classify_points(
    points: np.ndarray,
    bs_positions: Sequence[Sequence[float]],
    beta: float,
    p1: float,
    p2: float,
    a,
    three_region: bool = False,
) -> np.ndarray:
    """Region label of a probe user at each point.

    The probe joins the provider minimizing ``p_j d_j**beta`` (ties to
    provider 1). A probe with zero demand there is labelled
    ``NO_DEMAND1``/``NO_DEMAND2``, or ``NO_DEMAND`` in three-region mode.
    """
    if not (p1 > 0 and p2 > 0):
        raise ValueError(f"prices must be positive, got ({p1}, {p2})")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.linalg.norm(pts[:, None, :] - np.asarray(bs_positions, dtype=float)[None], axis=-1)
    cost = d**beta * np.array([p1, p2])
    first = cost[:, 0] <= cost[:, 1]
    buys = np.asarray(a, dtype=float) > np.minimum(cost[:, 0], cost[:, 1])
    labels = np.where(first, Region.PROVIDER1, Region.PROVIDER2)
    if three_region:
        idle = np.full(labels.shape, Region.NO_DEMAND)
    else:
        idle = np.where(first, Region.NO_DEMAND1, Region.NO_DEMAND2)
    return np.where(buys, labels, idle).astype(np.int8)


def cell_centers(area: tuple[float, float], resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    nx, ny = resolution
    if nx < 1 or ny < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    w, h = area
    return (np.arange(nx) + 0.5) * (w / nx), (np.arange(ny) + 0.5) * (h / ny)


def region_grid(
    scenario: PlanarScenario,
    p1: float,
    p2: float,
    probe_a: float = 1.0,
    resolution: tuple[int, int] = (100, 200),
    three_region: bool = False,
) -> RegionGrid:
    """Label every grid cell by the provider a probe user there would join."""
    xs, ys = cell_centers(scenario.area, resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    labels = classify_points(pts, scenario.bs_positions, scenario.beta, p1, p2, probe_a, three_region)
    return RegionGrid(tuple(resolution), labels.reshape(len(ys), len(xs)), (float(p1), float(p2)), float(probe_a))


@dataclass(frozen=True)
class SweepRow:
    beta: float
    p1_duo: float
    p2_duo: float
    p1_mono: float
    p2_mono: float
    kind: str
    error: str = ""


def monopoly_prices(market: Market) -> tuple[float, float]:
    """Price each provider would charge if it served every user alone."""
    return (
        optimal_price(market.users, 1, market.Q1).price,
        optimal_price(market.users, 2, market.Q2).price,
    )


def sweep_beta(scenario: PlanarScenario, betas: Sequence[float]) -> list[SweepRow]:
    """Duopoly and monopoly prices for each path-loss exponent.

    The user draw is fixed by the scenario's seed and reused for every
    ``beta``. A failing row is recorded with its error message and the
    sweep continues.
    """
    if len(betas) == 0:
        raise ValueError("betas must be non-empty")
    rows = []
    for beta in betas:
        try:
            market = compile_scenario(replace(scenario, beta=float(beta)))
            eq = solve_nash(market)
            m1, m2 = monopoly_prices(market)
            rows.append(SweepRow(float(beta), eq.p1, eq.p2, m1, m2, eq.kind.value))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.warning("sweep row beta=%s failed: %s", beta, exc)
            nan = float("nan")
            rows.append(SweepRow(float(beta), nan, nan, nan, nan, "", f"{type(exc).__name__}: {exc}"))
    return rows


def provider1_users(market: Market, eq: Equilibrium) -> int:
    """Number of users attached to provider 1 at the equilibrium."""
    return sum(1 for j in eq.affiliation(market).values() if j == 1)
