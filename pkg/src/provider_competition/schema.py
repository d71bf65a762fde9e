"""File formats: scenario JSON in, equilibrium JSON and CSV tables out.

Scenario files carry ``"schema": 1`` and come in two shapes.

Planar form (fields of :class:`~provider_competition.scenario.PlanarScenario`)::

    {"schema": 1, "area": [10, 20], "bs_positions": [[2.5, 10], [7.5, 10]],
     "user_positions": [[1, 2], ...], "a_range": [0.5, 1.5], "beta": 3,
     "Q1": 1000, "Q2": 1000, "seed": 42}

``users: [{"x", "y", "a"}]`` may replace ``user_positions`` to pin each
user's willingness to pay, and ``n_users`` may replace both to place users
uniformly from ``seed``.

Direct market form, bypassing geometry::

    {"schema": 1, "users": [{"a": 1, "g1": 1, "g2": 2}, ...], "Q1": 1, "Q2": 1}

Users are numbered from 1 in file order. Unknown fields are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from .constants import OUTPUT_DIGITS
from .duopoly import Equilibrium, EquilibriumKind
from .market import Market
from .scenario import PlanarScenario, RegionGrid, SweepRow, uniform_scenario
from .welfare import Allocation, KktReport

SCHEMA_VERSION = 1

_PLANAR_FIELDS = {
    "schema", "area", "bs_positions", "user_positions", "a_range", "beta",
    "Q1", "Q2", "seed", "users", "n_users",
}
_MARKET_FIELDS = {"schema", "users", "Q1", "Q2"}
_EQUILIBRIUM_FIELDS = {
    "schema", "kind", "p1", "p2", "allocations", "undecided", "total_utility", "kkt", "market",
}


class SchemaError(ValueError):
    """Input document does not match schema version 1."""


def rounded(x: float) -> float:
    """``x`` rounded to the output precision (12 significant digits)."""
    x = float(x)
    if not math.isfinite(x):
        return x
    return float(f"{x:.{OUTPUT_DIGITS}g}")


def _require(doc: dict, allowed: set[str], required: Sequence[str], what: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"unknown field(s) in {what}: {unknown}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise SchemaError(f"missing field(s) in {what}: {missing}")
    if doc.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"expected schema {SCHEMA_VERSION}, got {doc.get('schema')!r}")


def _is_market_form(doc: dict) -> bool:
    users = doc.get("users")
    return isinstance(users, list) and bool(users) and isinstance(users[0], dict) and "g1" in users[0]


def read_document(source: Union[str, Path, dict]) -> dict:
    if isinstance(source, dict):
        return source
    try:
        doc = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    return doc


def market_from_dict(doc: dict) -> Market:
    _require(doc, _MARKET_FIELDS, ["users", "Q1", "Q2"], "market")
    users = doc["users"]
    if not isinstance(users, list) or not users:
        raise SchemaError("market needs a non-empty users array")
    for u in users:
        if not isinstance(u, dict) or set(u) != {"a", "g1", "g2"}:
            raise SchemaError(f"market user entries need exactly a, g1, g2; got {u!r}")
    return Market.from_arrays(
        [u["a"] for u in users], [u["g1"] for u in users], [u["g2"] for u in users], doc["Q1"], doc["Q2"]
    )


def scenario_from_dict(doc: dict, seed: int | None = None) -> PlanarScenario:
    """Planar scenario document to :class:`PlanarScenario`; ``seed`` overrides the file's."""
    _require(doc, _PLANAR_FIELDS, [], "planar scenario")
    sources = [k for k in ("user_positions", "users", "n_users") if k in doc]
    if len(sources) != 1:
        raise SchemaError(f"give exactly one of user_positions, users, n_users; got {sources}")
    kwargs: dict[str, Any] = {}
    for key in ("area", "bs_positions", "a_range", "beta", "Q1", "Q2"):
        if key in doc:
            kwargs[key] = doc[key]
    kwargs["seed"] = int(seed if seed is not None else doc.get("seed", 42))
    if "n_users" in doc:
        n = doc["n_users"]
        if not isinstance(n, int) or n < 1:
            raise SchemaError(f"n_users must be a positive integer, got {n!r}")
        return uniform_scenario(n, **kwargs)
    if "users" in doc:
        users = doc["users"]
        if not isinstance(users, list) or not users:
            raise SchemaError("users must be a non-empty array")
        for u in users:
            if not isinstance(u, dict) or set(u) != {"x", "y", "a"}:
                raise SchemaError(f"planar user entries need exactly x, y, a; got {u!r}")
        kwargs["user_positions"] = [(u["x"], u["y"]) for u in users]
        kwargs["a_values"] = [u["a"] for u in users]
    else:
        kwargs["user_positions"] = doc["user_positions"]
    try:
        return PlanarScenario(**kwargs)
    except TypeError as exc:
        raise SchemaError(f"malformed planar scenario: {exc}") from exc


def load_input(source: Union[str, Path, dict], seed: int | None = None) -> Union[Market, PlanarScenario]:
    """Parse a scenario file into a :class:`Market` or a :class:`PlanarScenario`."""
    doc = read_document(source)
    if _is_market_form(doc):
        return market_from_dict(doc)
    return scenario_from_dict(doc, seed)


def market_to_dict(market: Market) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "users": [{"a": rounded(u.a), "g1": rounded(u.g[0]), "g2": rounded(u.g[1])} for u in market.users],
        "Q1": rounded(market.Q1),
        "Q2": rounded(market.Q2),
    }


def scenario_to_dict(scenario: PlanarScenario) -> dict:
    doc: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "area": list(scenario.area),
        "bs_positions": [list(p) for p in scenario.bs_positions],
        "a_range": list(scenario.a_range),
        "beta": scenario.beta,
        "Q1": scenario.Q1,
        "Q2": scenario.Q2,
        "seed": scenario.seed,
    }
    if scenario.a_values is None:
        doc["user_positions"] = [list(p) for p in scenario.user_positions]
    else:
        doc["users"] = [{"x": x, "y": y, "a": a} for (x, y), a in zip(scenario.user_positions, scenario.a_values)]
    return doc


def _round_field(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return rounded(v)
    if isinstance(v, list):
        return [rounded(x) for x in v]
    return v


def equilibrium_to_dict(market: Market, eq: Equilibrium, total_utility: float, kkt: KktReport) -> dict:
    """Equilibrium document; the market is embedded so the file can be replayed."""
    undecided = None
    if eq.undecided is not None:
        undecided = {"user": eq.undecided[0], "epsilon": rounded(eq.undecided[1])}
    return {
        "schema": SCHEMA_VERSION,
        "kind": eq.kind.value,
        "p1": rounded(eq.p1),
        "p2": rounded(eq.p2),
        "allocations": {str(u.id): [rounded(q) for q in eq.allocations[u.id]] for u in market.users},
        "undecided": undecided,
        "total_utility": rounded(total_utility),
        "kkt": {k: _round_field(v) for k, v in kkt.as_dict().items()},
        "market": market_to_dict(market),
    }


def is_equilibrium_document(doc: dict) -> bool:
    return "kind" in doc and "allocations" in doc


def equilibrium_from_dict(doc: dict) -> tuple[Market, Equilibrium]:
    _require(doc, _EQUILIBRIUM_FIELDS, ["kind", "p1", "p2", "allocations", "market"], "equilibrium")
    market = market_from_dict(doc["market"])
    try:
        kind = EquilibriumKind(doc["kind"])
        alloc = {int(k): (float(v[0]), float(v[1])) for k, v in doc["allocations"].items()}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"malformed equilibrium document: {exc}") from exc
    if set(alloc) != {u.id for u in market.users}:
        raise SchemaError("allocations must list every market user exactly once")
    und = doc.get("undecided")
    undecided = None if und is None else (int(und["user"]), float(und["epsilon"]))
    Allocation(alloc)
    return market, Equilibrium(kind, float(doc["p1"]), float(doc["p2"]), alloc, undecided)


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


SWEEP_HEADER = ["beta", "p1_duo", "p2_duo", "p1_mono", "p2_mono", "kind"]


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    """Sweep table; an ``errors`` column is appended only when some row failed."""
    with_errors = any(r.error for r in rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER + (["errors"] if with_errors else []))
    for r in rows:
        line = [
            f"{r.beta:.{OUTPUT_DIGITS}g}",
            *(f"{v:.{OUTPUT_DIGITS}g}" for v in (r.p1_duo, r.p2_duo, r.p1_mono, r.p2_mono)),
            r.kind,
        ]
        writer.writerow(line + ([r.error] if with_errors else []))
    return buf.getvalue()


def grid_to_csv(grid: RegionGrid) -> str:
    """Row-major integer labels, one CSV row per grid row (increasing y)."""
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in np.asarray(grid.cells))
