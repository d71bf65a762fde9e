import csv
import io
import json

import pytest

from provider_competition.cli import main, parse_betas, parse_grid
from provider_competition.constants import TOLERANCES
from provider_competition.schema import (
    SchemaError,
    equilibrium_from_dict,
    load_input,
    market_from_dict,
    rounded,
    scenario_from_dict,
)
from provider_competition.scenario import PlanarScenario

TWO_USERS = {"schema": 1, "users": [{"a": 1, "g1": 1, "g2": 2}, {"a": 1, "g1": 2, "g2": 1}], "Q1": 1, "Q2": 1}
ONE_USER = {"schema": 1, "users": [{"a": 1, "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1}
PLANAR = {"schema": 1, "n_users": 30, "seed": 42}


@pytest.fixture
def write(tmp_path):
    def _write(doc, name="in.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSchema:
    def test_market_form(self):
        m = market_from_dict(TWO_USERS)
        assert m.n_users == 2 and m.ids.tolist() == [1, 2]

    def test_planar_forms(self):
        s = scenario_from_dict({"schema": 1, "users": [{"x": 1, "y": 2, "a": 0.9}], "beta": 2})
        assert s.a_values == (0.9,) and s.beta == 2.0
        s = load_input({"schema": 1, "user_positions": [[1, 2], [3, 4]]}, seed=5)
        assert isinstance(s, PlanarScenario) and s.seed == 5
        assert load_input(PLANAR).n_users == 30

    @pytest.mark.parametrize(
        "doc",
        [
            {"schema": 2, "users": [{"a": 1, "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1},
            {"schema": 1, "users": [{"a": 1, "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1, "extra": 0},
            {"schema": 1, "users": [{"a": 1, "g1": 1}], "Q1": 1, "Q2": 1},
            {"schema": 1, "users": [], "Q1": 1, "Q2": 1},
            {"schema": 1, "n_users": 3, "user_positions": [[1, 1]]},
            {"schema": 1, "n_users": 0},
        ],
    )
    def test_rejections(self, doc):
        with pytest.raises(SchemaError):
            load_input(doc)

    def test_rounding(self):
        assert rounded(1 / 3) == 0.333333333333
        assert rounded(123456789.123456789) == 123456789.123


class TestParsers:
    def test_betas(self):
        assert parse_betas("2:6:0.5") == [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]
        assert parse_betas("3, 4") == [3.0, 4.0]
        assert parse_betas("0:0.3:0.1") == [0.0, 0.1, 0.2, 0.3]

    @pytest.mark.parametrize("text", ["", "a,b", "6:2:1", "1:2:0"])
    def test_bad_betas(self, text):
        with pytest.raises(ValueError):
            parse_betas(text)

    def test_grid(self):
        assert parse_grid("200x100") == (200, 100)
        with pytest.raises(ValueError):
            parse_grid("200")


class TestSolve:
    def test_two_users(self, capsys, write):
        code, out, _ = run(capsys, "solve", "--input", write(TWO_USERS))
        doc = json.loads(out)
        assert code == 0
        assert (doc["kind"], doc["p1"], doc["p2"]) == ("Integer", 0.5, 0.5)
        assert doc["kkt"]["passes"] is True and doc["undecided"] is None
        assert doc["allocations"] == {"1": [1.0, 0.0], "2": [0.0, 1.0]}

    def test_one_user(self, capsys, write):
        code, out, _ = run(capsys, "solve", "--input", write(ONE_USER))
        doc = json.loads(out)
        assert doc["kind"] == "Fractional"
        assert doc["undecided"] == {"user": 1, "epsilon": 0.5}

    def test_empty_users(self, capsys, write):
        code, out, err = run(capsys, "solve", "--input", write({"schema": 1, "users": [], "Q1": 1, "Q2": 1}))
        assert code == 1 and out == ""
        assert json.loads(err)["error"] == "SchemaError"

    @pytest.mark.parametrize(
        "doc",
        [
            {"schema": 1, "users": [{"a": "x", "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1},
            {"schema": 1, "users": [{"a": -1, "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1},
            {"schema": 1, "user_positions": [[50, 50]]},
        ],
    )
    def test_bad_values_exit_1(self, capsys, write, doc):
        code, _, err = run(capsys, "solve", "--input", write(doc))
        assert code == 1 and "error" in json.loads(err)

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", "--input", str(tmp_path / "nope.json"))
        assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"

    def test_invalid_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(capsys, "solve", "--input", str(path))[0] == 1

    def test_degenerate_boundary_exit_2(self, capsys, write):
        doc = {"schema": 1, "users": [{"a": 1, "g1": 1, "g2": 2}, {"a": 1, "g1": 1, "g2": 1}], "Q1": 1, "Q2": 1}
        code, _, err = run(capsys, "solve", "--input", write(doc))
        assert code == 2
        assert "ratio" in json.loads(err)["table"]

    def test_output_file(self, capsys, write, tmp_path):
        out_path = tmp_path / "eq.json"
        code, out, _ = run(capsys, "solve", "--input", write(TWO_USERS), "--output", str(out_path))
        assert code == 0 and out == ""
        market, eq = equilibrium_from_dict(json.loads(out_path.read_text()))
        assert eq.prices == (0.5, 0.5) and market.n_users == 2

    def test_tolerance_override_is_scoped(self, capsys, write):
        before = dict(TOLERANCES)
        code, out, _ = run(capsys, "solve", "--input", write(PLANAR), "--tol", "kkt=1e-30")
        assert code == 0 and json.loads(out)["kkt"]["tol"] == 1e-30
        assert TOLERANCES == before

    def test_unknown_tolerance(self, capsys, write):
        code, _, err = run(capsys, "solve", "--input", write(TWO_USERS), "--tol", "speed=1")
        assert code == 1 and "speed" in json.loads(err)["message"]


class TestVerify:
    def test_random_batch_passes(self, capsys):
        code, out, _ = run(capsys, "verify", "--batch", "100", "--users", "8", "--seed", "3")
        lines = out.splitlines()
        assert code == 0
        assert all(line.startswith("PASS") for line in lines)
        assert any(".stability_oracle" in line for line in lines)

    def test_replay_round_trip(self, capsys, write, tmp_path):
        eq_path = tmp_path / "eq.json"
        run(capsys, "solve", "--input", write(PLANAR), "--output", str(eq_path))
        code, out, _ = run(capsys, "verify", "--input", str(eq_path))
        assert code == 0 and "PASS kkt" in out

    def test_corrupted_replay_fails_kkt(self, capsys, write, tmp_path):
        eq_path = tmp_path / "eq.json"
        run(capsys, "solve", "--input", write(ONE_USER), "--output", str(eq_path))
        doc = json.loads(eq_path.read_text())
        doc["p1"] *= 1.2
        code, out, _ = run(capsys, "verify", "--input", write(doc, "bad.json"))
        assert code == 1 and "FAIL kkt" in out

    def test_market_input(self, capsys, write):
        code, out, _ = run(capsys, "verify", "--input", write(TWO_USERS))
        assert code == 0 and "PASS stability_oracle" in out

    def test_cap_exit_3(self, capsys, write):
        assert run(capsys, "verify", "--users", "25", "--exhaustive")[0] == 3
        code, _, err = run(capsys, "verify", "--input", write({"schema": 1, "n_users": 25}), "--exhaustive")
        assert code == 3 and json.loads(err)["error"] == "OracleCapError"


class TestSweepRegions:
    def test_sweep_table(self, capsys, write):
        code, out, _ = run(capsys, "sweep", "--input", write(PLANAR), "--betas", "2:6:0.5")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 9
        assert list(rows[0]) == ["beta", "p1_duo", "p2_duo", "p1_mono", "p2_mono", "kind"]
        gaps = [
            max(float(r["p1_mono"]) - float(r["p1_duo"]), float(r["p2_mono"]) - float(r["p2_duo"]))
            for r in rows
        ]
        assert all(b <= a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < gaps[0]

    def test_missing_betas(self, capsys, write):
        code, _, err = run(capsys, "sweep", "--input", write(PLANAR))
        assert code == 1 and "betas" in json.loads(err)["message"]

    def test_failed_rows(self, capsys, write):
        code, out, _ = run(capsys, "sweep", "--input", write(PLANAR), "--betas", "0,3")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 1
        assert rows[0]["errors"].startswith("ScenarioValidationError") and rows[1]["errors"] == ""

    def test_sweep_needs_planar_input(self, capsys, write):
        assert run(capsys, "sweep", "--input", write(TWO_USERS), "--betas", "3")[0] == 1

    def test_regions_symmetric_at_equal_prices(self, capsys, write):
        code, out, _ = run(
            capsys, "regions", "--input", write(PLANAR), "--grid", "200x100", "--prices", "0.004,0.004"
        )
        grid = [list(map(int, line.split(","))) for line in out.splitlines()]
        assert code == 0 and len(grid) == 100 and len(grid[0]) == 200
        swap = {0: 0, 1: 2, 2: 1, 3: 4, 4: 3}
        assert all(row[::-1] == [swap[v] for v in row] for row in grid)

    def test_regions_at_equilibrium(self, capsys, write):
        code, out, _ = run(capsys, "regions", "--input", write(PLANAR), "--grid", "20x40", "--three-region")
        values = {int(v) for line in out.splitlines() for v in line.split(",")}
        assert code == 0 and values <= {0, 1, 2}


def test_outputs_are_deterministic(capsys, write):
    planar = write(PLANAR)
    for argv in (
        ["solve", "--input", planar],
        ["sweep", "--input", planar, "--betas", "2:6:1"],
        ["regions", "--input", planar, "--grid", "40x80"],
    ):
        first = run(capsys, *argv)
        assert first == run(capsys, *argv)
