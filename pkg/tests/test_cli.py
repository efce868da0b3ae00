import csv
import io
import json

import numpy as np
import pytest

from sobolis import cli
from sobolis.densities import Box, SupportError
from sobolis.givendata import write_dataset
from sobolis.models import Dataset
from sobolis.validation import CheckResult


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(4)
    x = rng.random((3000, 4))
    path = tmp_path / "d.csv"
    write_dataset(Dataset(x, x[:, 3] ** 2 + 0.1 * x[:, 0], Box.unit(4)), path)
    return path


class TestParsers:
    def test_grid_inclusive(self):
        np.testing.assert_array_equal(cli.parse_grid("0:1:11"), np.round(np.linspace(0, 1, 11), 12))
        assert cli.parse_grid("0.4:2:17")[3] == 0.7

    @pytest.mark.parametrize("text", ["0:1", "0:1:x", "0:1:1", "0:1:0"])
    def test_grid_rejects(self, text):
        with pytest.raises(cli.ConfigError):
            cli.parse_grid(text)

    def test_theta_item(self):
        assert cli.parse_theta_item("2=0.5,1.5") == (2, 0.5, 1.5)
        with pytest.raises(cli.ConfigError):
            cli.parse_theta_item("2:0.5,1.5")


class TestEstimate:
    def test_gfunction_u1(self, capsys):
        code, out, _ = run(capsys, "estimate", "--model", "gfun", "--a", "1,2,3", "--u", "1", "--n", "100000", "--seed", "7")
        assert code == 0
        rep = json.loads(out)
        assert rep["eta_exact"] == pytest.approx(13 / 12)
        assert abs(rep["value"] - 13 / 12) <= 4 * rep["stderr"]
        assert rep["estimator"] == "rank" and rep["seed"] == 7
        assert rep["sobol_index"] is not None

    def test_byte_identical_with_seed(self, capsys):
        argv = ("estimate", "--model", "gfun", "--u", "1,2", "--n", "5000", "--seed", "3", "--beta", "0.7,0.7")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_dataset_baseline(self, capsys, dataset):
        from sobolis.estimators import rank_eta
        from sobolis.givendata import load_dataset

        code, out, _ = run(capsys, "estimate", "--data", str(dataset), "--lower", "0,0,0,0", "--upper", "1,1,1,1", "--u", "4", "--theta-all", "1,1")
        assert code == 0
        rep = json.loads(out)
        data = load_dataset(dataset)
        assert rep["value"] == rank_eta(data.y, data.x[:, 3]).value
        assert rep["ess"] == 3000

    def test_missing_u(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["estimate", "--model", "gfun", "--n", "10", "--seed", "1"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_seed(self, capsys):
        code, _, err = run(capsys, "estimate", "--model", "gfun", "--u", "1", "--n", "100")
        assert code == 2 and "--seed" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "estimate", "--data", str(tmp_path / "none.csv"), "--u", "1")
        assert code == 2

    def test_rows_out_of_bounds(self, capsys, dataset):
        code, _, err = run(capsys, "estimate", "--data", str(dataset), "--lower", "0,0,0,0", "--upper", "1,1,1,0.5", "--u", "4")
        assert code == 2 and "outside" in err

    def test_support_error_exit_3(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise SupportError("sampling density vanishes")

        monkeypatch.setattr(cli, "reweighted_outputs", boom)
        code, _, err = run(capsys, "estimate", "--model", "gfun", "--u", "1", "--n", "100", "--seed", "1")
        assert code == 3 and "support" in err

    def test_non_finite_exit_3(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise FloatingPointError("2 non-finite values")

        monkeypatch.setattr(cli, "rank_eta", boom)
        code, _, _ = run(capsys, "estimate", "--model", "gfun", "--u", "1", "--n", "100", "--seed", "1")
        assert code == 3


class TestVariance:
    def test_reference(self, capsys):
        code, out, _ = run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--dist", "p")
        assert code == 0
        rep = json.loads(out)
        assert rep["result"]["sigma_sq"] == pytest.approx(0.7445526596555, rel=1e-9)

    def test_zero(self, capsys):
        rep = json.loads(run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--case", "zero")[1])
        assert abs(rep["result"]["sigma_sq"]) <= 1e-8
        assert rep["max_rel_deviation"] < 1e-10

    def test_beta_reduction(self, capsys):
        rep = json.loads(run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--beta", "0.7,0.7")[1])
        assert rep["reduction"] >= 0.40
        assert rep["divergent"] is False

    def test_divergent_beta_flagged(self, capsys):
        rep = json.loads(run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--beta", "2.5,2.5")[1])
        assert rep["divergent"] is True and rep["reduction"] is None

    def test_compare_constant(self, capsys):
        rep = json.loads(run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--beta", "0.7,0.7", "--compare-constant", str(99 / 96))[1])
        assert rep["compare_constant"]["reference"]["sigma_sq"] == pytest.approx(0.8217337, rel=1e-6)
        assert rep["compare_constant"]["result"]["sigma_sq"] == pytest.approx(0.44796, rel=1e-4)

    def test_case_a_below_reference(self, capsys):
        rep = json.loads(run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--case", "A")[1])
        assert rep["result"]["sigma_sq"] < rep["reference"]["sigma_sq"]

    def test_mc_needs_seed(self, capsys):
        code, _, _ = run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--beta", "0.7,0.7", "--method", "mc", "--n", "100")
        assert code == 2

    def test_case_and_beta_exclusive(self, capsys):
        code, _, _ = run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--case", "A", "--beta", "1,1")
        assert code == 2

    def test_zero_needs_deterministic(self, capsys):
        code, _, _ = run(capsys, "variance", "--model", "gfun", "--u", "1,2", "--case", "zero", "--alt-constant")
        assert code == 2


class TestSweep:
    def test_marginal_25_rows(self, capsys, dataset, tmp_path):
        out_csv = tmp_path / "s.csv"
        code, out, _ = run(
            capsys, "sweep", "--data", str(dataset), "--lower", "0,0,0,0", "--upper", "1,1,1,1",
            "--u", "4", "--marginal", "1", "--alpha-grid", "0.5:2:5", "--beta-grid", "0.5:2:5", "--out", str(out_csv),
        )  # fmt: skip
        assert code == 0
        assert json.loads(out)["rows"] == 25
        with open(out_csv) as fh:
            assert len(list(csv.DictReader(fh))) == 25

    def test_stdout_csv_and_stderr_summary(self, capsys):
        code, out, err = run(
            capsys, "sweep", "--model", "gfun", "--u", "1", "--n", "2000", "--seed", "1",
            "--global", "--alpha-grid", "1:2:2", "--beta-grid", "1:1:1",
        )  # fmt: skip
        assert code == 0
        assert len(list(csv.DictReader(io.StringIO(out)))) == 2
        assert json.loads(err)["mode"] == "global"

    def test_surface(self, capsys, tmp_path):
        out_csv = tmp_path / "surf.csv"
        code, out, _ = run(capsys, "sweep", "--model", "gfun", "--u", "1,2", "--surface", "--grid", "0.4:2:17", "--out", str(out_csv))
        assert code == 0
        summary = json.loads(out)
        assert summary["argmin"] == [0.7, 0.7]
        with open(out_csv) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 289
        (best,) = [r for r in rows if r["argmin"] == "1"]
        assert (float(best["alpha"]), float(best["beta"])) == (0.7, 0.7)

    def test_cv_curve(self, capsys):
        code, out, err = run(capsys, "sweep", "--model", "gfun", "--u", "1,2", "--cv-curve", "--t-grid", "0:1:11")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 11
        cv = [float(r["cv"]) for r in rows]
        assert all(b < a for a, b in zip(cv, cv[1:]))
        assert json.loads(err)["strictly_decreasing"] is True

    def test_mode_required(self, capsys):
        code, _, _ = run(capsys, "sweep", "--model", "gfun", "--u", "1,2")
        assert code == 2

    def test_byte_identical(self, capsys):
        argv = ("sweep", "--model", "gfun", "--u", "1", "--n", "3000", "--seed", "9", "--marginal", "2", "--alpha-grid", "0.5:2:3", "--beta-grid", "1:1:1")
        assert run(capsys, *argv)[1:] == run(capsys, *argv)[1:]


class TestValidate:
    def test_quick_pass(self, capsys, tmp_path):
        report = tmp_path / "r.json"
        code, out, _ = run(capsys, "validate", "--quick", "--report", str(report))
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 10 and all(line.startswith("PASS") for line in lines)
        data = json.loads(report.read_text())
        assert data["quick"] is True and len(data["checks"]) == 10

    def test_failure_exit_4(self, capsys, monkeypatch):
        import sobolis.validation as val

        monkeypatch.setattr(val, "run_suite", lambda seed, quick: [CheckResult("ok", True), CheckResult("bad", False)])
        code, out, _ = run(capsys, "validate", "--quick")
        assert code == 4
        assert "FAIL  bad" in out
