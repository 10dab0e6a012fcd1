import json
import math

import pytest

from incompat import cli, repro
from incompat.sdp import SolverFailure

SQ2 = math.sqrt(2)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def eta_of(out, measure):
    data = json.loads(out)
    return next(r["eta"] for r in data["results"] if r["measure"] == measure)


class TestCompute:
    def test_mub3(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "mub:3", "--measure", "d")
        assert code == 0
        assert eta_of(out, "d") == pytest.approx(0.5 * (1 + 1 / (math.sqrt(3) + 1)), abs=1e-6)
        assert eta_of(out, "d") == pytest.approx(0.68301, abs=1e-5)

    def test_commuting_pair(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "theta:0", "--measure", "g")
        assert code == 0 and eta_of(out, "g") == pytest.approx(1.0, abs=1e-7)

    def test_qmub5(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "qMUB:5", "--measure", "d")
        assert code == 0
        assert eta_of(out, "d") == pytest.approx(0.5 * (1 + SQ2 / (5 + SQ2)), abs=1e-6)
        assert eta_of(out, "d") == pytest.approx(0.610240604606, abs=1e-6)

    def test_all_measures_verified(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "primemubs:3:2")
        data = json.loads(out)
        assert code == 0 and [r["measure"] for r in data["results"]] == ["d", "r", "p", "jm", "g"]
        assert all(r["verified"] for r in data["results"])

    def test_csv(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "dev:3", "--measure", "p", "--format", "csv")
        header, row = out.strip().splitlines()
        assert header == "measure,eta,dual_bound,gap,status,verified"
        assert row.startswith("p,0.6812")

    def test_full_output(self, capsys):
        code, out, _ = run(capsys, "compute", "--pair", "mub:2", "--measure", "jm", "--full")
        res = json.loads(out)["results"][0]
        assert "parent" in res and "dual" in res

    def test_file_input(self, capsys, tmp_path):
        from incompat.povm import mub_pair

        path = tmp_path / "pair.json"
        mub_pair(2).save(path)
        code, out, _ = run(capsys, "compute", "--pair", f"file:{path}", "--measure", "d")
        assert code == 0 and eta_of(out, "d") == pytest.approx(1 / SQ2, abs=1e-6)


class TestExitCodes:
    @pytest.mark.parametrize("spec", ["foo:1", "mub:x", "dev:4", "file:/nonexistent.json", "theta:2"])
    def test_parse_error(self, capsys, spec):
        code, _, err = run(capsys, "compute", "--pair", spec)
        assert code == 2 and "error" in err

    def test_bad_flag(self, capsys):
        assert run(capsys, "compute", "--pair", "mub:2", "--measure", "x")[0] == 2

    def test_solver_failure(self, capsys, monkeypatch):
        class Sol:
            status, primal_residual, dual_residual, gap = "MaxIter", 1e-3, 2e-3, 5e-2

        def fail(*a, **k):
            raise SolverFailure("did not converge", Sol())

        monkeypatch.setattr(cli, "solve_robustness", fail)
        code, _, err = run(capsys, "compute", "--pair", "mub:2", "--measure", "d")
        assert code == 3
        assert "MaxIter" in err and "primal_residual" in err

    def test_reproduction_mismatch(self, capsys, monkeypatch):
        real = repro.run_target

        def broken(target, out_dir=None):
            res = real(target, out_dir)
            res.add("forced", 0.0, 1.0, 1e-9)
            return res

        monkeypatch.setattr(repro, "run_target", broken)
        code, out, _ = run(capsys, "reproduce", "ctrex-4")
        assert code == 4 and "FAIL ctrex-4" in out and "MISMATCH" in out


class TestOtherCommands:
    def test_bounds(self, capsys):
        code, out, _ = run(capsys, "bounds", "--pair", "mub:2", "--measure", "d")
        data = json.loads(out)
        assert code == 0
        assert data["best"]["d"]["lower"] == pytest.approx(1 / SQ2, abs=1e-12)
        assert data["best"]["d"]["upper"] == pytest.approx(1 / SQ2, abs=1e-12)

    def test_bounds_csv(self, capsys):
        code, out, _ = run(capsys, "bounds", "--pair", "mub:3", "--format", "csv")
        assert code == 0 and out.splitlines()[0] == "measure,side,value,source"

    def test_search(self, capsys, tmp_path):
        out_file = tmp_path / "rec.json"
        code, out, _ = run(capsys, "search", "--d", "2", "--samples", "5", "--measure", "d",
                           "--seed", "1", "--out", str(out_file))
        assert code == 0
        data = json.loads(out)
        assert data["samples_done"] == 5 and data["best_eta"]["d"] >= 1 / SQ2 - 1e-6
        assert "best_set" in json.loads(out_file.read_text())

    def test_reproduce(self, capsys, tmp_path):
        code, out, _ = run(capsys, "reproduce", "ctrex-4", "--out", str(tmp_path))
        assert code == 0 and out.strip() == "PASS ctrex-4"
        assert any(tmp_path.iterdir())

    def test_reproduce_closed_form_target(self, capsys):
        code, out, _ = run(capsys, "reproduce", "fig-chi")
        assert code == 0 and "PASS fig-chi" in out

    def test_round_sig(self):
        assert cli.round_sig({"a": [1 / 3, 2]}) == {"a": [0.333333333333, 2]}
