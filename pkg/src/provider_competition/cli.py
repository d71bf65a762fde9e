"""Command-line front end.

Subcommands ``solve``, ``sweep``, ``regions`` and ``verify``. Exit codes:
0 success, 1 input error, 2 degenerate boundary, 3 oracle cap exceeded.
Input errors are reported on standard error as a JSON object.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .constants import ORACLE_MAX_USERS, TOLERANCES
from .duopoly import DegenerateBoundaryError, solve_nash
from .market import Market, MarketValidationError, random_market
from .scenario import PlanarScenario, region_grid, sweep_beta
from .schema import (
    SchemaError,
    dumps_json,
    equilibrium_from_dict,
    equilibrium_to_dict,
    grid_to_csv,
    is_equilibrium_document,
    load_input,
    read_document,
    sweep_to_csv,
)
from .verify import CheckResult, verify_market, verify_replay
from .welfare import OracleCapError, check_kkt, total_utility

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DEGENERATE = 2
EXIT_CAP = 3

log = logging.getLogger(__name__)


class InputError(ValueError):
    """Bad command-line arguments or input file."""


def _error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")


def parse_tolerances(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or name not in TOLERANCES:
            raise InputError(f"--tol expects NAME=VALUE with NAME in {sorted(TOLERANCES)}, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise InputError(f"--tol {name}: not a number: {value!r}") from None
        if not out[name] > 0:
            raise InputError(f"--tol {name}: must be positive")
    return out


@contextlib.contextmanager
def tolerance_overrides(overrides: dict[str, float]) -> Iterator[None]:
    saved = dict(TOLERANCES)
    TOLERANCES.update(overrides)
    try:
        yield
    finally:
        TOLERANCES.clear()
        TOLERANCES.update(saved)


def parse_betas(text: str) -> list[float]:
    """``"2,3,4"`` or an inclusive range ``"2:6:0.5"``."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if not step > 0 or stop < start:
                raise InputError(f"--betas range needs start <= stop and step > 0, got {text!r}")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(n)]
        betas = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--betas: cannot parse {text!r}") from None
    if not betas:
        raise InputError("--betas is empty")
    return betas


def parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InputError(f"--grid expects NXxNY, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise InputError(f"--grid must be positive, got {text!r}")
    return nx, ny


def parse_prices(text: str) -> tuple[float, float]:
    try:
        p1, p2 = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"--prices expects P1,P2, got {text!r}") from None
    if not (p1 > 0 and p2 > 0):
        raise InputError("--prices must be positive")
    return p1, p2


def _write(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _require_input(args) -> str:
    if args.input is None:
        raise InputError(f"{args.command} needs --input")
    return args.input


def _load(args):
    try:
        return load_input(_require_input(args), args.seed)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (InputError, SchemaError, MarketValidationError)):
            raise
        raise InputError(f"malformed input: {exc}") from exc


def _market(args) -> Market:
    obj = _load(args)
    return obj.compile() if isinstance(obj, PlanarScenario) else obj


def _planar(args) -> PlanarScenario:
    obj = _load(args)
    if not isinstance(obj, PlanarScenario):
        raise InputError(f"{args.command} needs a planar scenario, not a direct market")
    return obj


def cmd_solve(args) -> int:
    market = _market(args)
    eq = solve_nash(market)
    report = check_kkt(market, eq, eq.p1, eq.p2)
    _write(dumps_json(equilibrium_to_dict(market, eq, total_utility(market, eq), report)), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.betas:
        raise InputError("sweep needs --betas")
    rows = sweep_beta(_planar(args), parse_betas(args.betas))
    _write(sweep_to_csv(rows), args.output)
    failed = [r for r in rows if r.error]
    if failed:
        _error("SweepRowFailed", f"{len(failed)} of {len(rows)} rows failed", betas=[r.beta for r in failed])
        return EXIT_INPUT
    return EXIT_OK


def cmd_regions(args) -> int:
    scenario = _planar(args)
    if args.prices:
        p1, p2 = parse_prices(args.prices)
    else:
        eq = solve_nash(scenario.compile())
        p1, p2 = eq.p1, eq.p2
    grid = region_grid(scenario, p1, p2, args.probe_a, parse_grid(args.grid), args.three_region)
    _write(grid_to_csv(grid), args.output)
    return EXIT_OK


def _verify_batch(args) -> list[CheckResult]:
    if args.users < 1 or args.batch < 1:
        raise InputError("--users and --batch must be positive")
    if args.exhaustive and args.users > ORACLE_MAX_USERS:
        raise OracleCapError(f"exhaustive oracle is capped at {ORACLE_MAX_USERS} users, got {args.users}")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    results = []
    for k in range(args.batch):
        market = random_market(rng, args.users)
        results.extend(
            CheckResult(f"market[{k}].{r.name}", r.passed, r.residual, r.detail)
            for r in verify_market(market, args.exhaustive or None)
        )
    return results


def cmd_verify(args) -> int:
    if args.input is None:
        results = _verify_batch(args)
    else:
        doc = read_document(args.input)
        if is_equilibrium_document(doc):
            results = verify_replay(*equilibrium_from_dict(doc))
        else:
            results = verify_market(_market(args), args.exhaustive or None)
    lines = [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{'PASS' if n_fail == 0 else 'FAIL'} summary {len(results) - n_fail}/{len(results)} checks passed")
    _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK if n_fail == 0 else EXIT_INPUT


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "regions": cmd_regions, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", metavar="PATH", help="scenario, market or equilibrium JSON")
    common.add_argument("--output", metavar="PATH", help="output file (default: standard output)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument(
        "--tol", action="append", default=[], metavar="NAME=VALUE", help="override a numerical tolerance"
    )

    parser = argparse.ArgumentParser(prog="provider-competition", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="equilibrium of one market as JSON")

    sweep = sub.add_parser("sweep", parents=[common], help="duopoly vs monopoly prices over beta, as CSV")
    sweep.add_argument("--betas", metavar="LIST", help="comma list or inclusive START:STOP:STEP")

    regions = sub.add_parser("regions", parents=[common], help="provider preference grid as CSV")
    regions.add_argument("--grid", default="100x200", metavar="NXxNY")
    regions.add_argument("--probe-a", type=float, default=1.0, metavar="VALUE")
    regions.add_argument("--prices", metavar="P1,P2", help="fixed prices (default: equilibrium prices)")
    regions.add_argument("--three-region", action="store_true", help="merge both no-demand labels")

    verify = sub.add_parser("verify", parents=[common], help="oracle agreement checks")
    verify.add_argument("--batch", type=int, default=100, help="random markets when no --input is given")
    verify.add_argument("--users", type=int, default=8, help="users per random market")
    verify.add_argument("--exhaustive", action="store_true", help="require the brute-force stability oracle")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with tolerance_overrides(parse_tolerances(args.tol)):
            return COMMANDS[args.command](args)
    except OracleCapError as exc:
        _error("OracleCapError", str(exc))
        return EXIT_CAP
    except DegenerateBoundaryError as exc:
        _error("DegenerateBoundaryError", str(exc), table=exc.table.dump())
        return EXIT_DEGENERATE
    except (InputError, SchemaError, MarketValidationError, OSError) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
