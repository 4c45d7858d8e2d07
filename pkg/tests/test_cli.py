import json
from importlib import resources

import pytest

from adaptive_median.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def bundled_path(name):
    return resources.files("adaptive_median").joinpath(f"specs/{name}")


def tiny_spec(tmp_path, metric="joint_violation_rate"):
    spec = {
        "schema_version": 1,
        "name": "tiny",
        "seed": 11,
        "trials": 3,
        "distribution": {"kind": "bernoulli_product", "features": 49, "p": 0.5},
        "adversary": {"kind": "overfit_boost", "features": 49, "t": 16},
        "mechanism": {"kind": "naive-empirical", "t": 16, "n": 320},
        "assertions": [{"name": "guard", "metric": metric, "op": ">=", "value": 0.0}],
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(spec))
    return path


class TestCalibrate:
    def test_table(self, capsys):
        code, out, _ = run_cli(capsys, "calibrate", "--k", "16", "--r", "64", "--beta", "0.05", "--t", "10")
        assert code == 0
        assert "74271" in out and "742710" in out

    def test_byte_identical(self, capsys):
        argv = ("calibrate", "--k", "50", "--r", "17", "--beta", "0.05", "--t", "16",
                "--rho", "0.2", "--alpha", "0.1", "--ell", "2", "--universe-size", "64")
        first = run_cli(capsys, *argv)[1]
        assert first == run_cli(capsys, *argv)[1]
        for m in ("128831", "3479", "662773", "3602479"):
            assert m in first

    @pytest.mark.parametrize("argv", [
        ("--k", "16", "--r", "64", "--beta", "1.5", "--t", "10"),
        ("--k", "0", "--r", "64", "--beta", "0.05", "--t", "10"),
        ("--k", "16", "--r", "64", "--beta", "0.05"),
    ])
    def test_usage_errors(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", *argv])
        assert exc.value.code == 2


class TestRun:
    def test_missing_spec(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "run", "--spec", str(tmp_path / "none.json"))
        assert code == 2 and err

    def test_passing_spec(self, capsys, tmp_path):
        path = tiny_spec(tmp_path)
        code, out, _ = run_cli(capsys, "run", "--spec", str(path), "--out", str(tmp_path / "rep"))
        assert code == 0 and "PASS guard" in out
        assert any(tmp_path.glob("rep*.json"))

    def test_failing_spec_names_assertion(self, capsys, tmp_path):
        # A naive run never produces this metric, so the assertion cannot hold.
        path = tiny_spec(tmp_path, metric="mad_violation_rate")
        code, out, _ = run_cli(capsys, "run", "--spec", str(path))
        assert code == 1 and "FAIL guard" in out

    def test_bundled_engine_spec_small(self, capsys, tmp_path):
        spec = bundled_path("engine_protection.json")
        code, out, _ = run_cli(capsys, "run", "--spec", str(spec), "--trials", "1",
                               "--transcripts", str(tmp_path / "tr"))
        assert code in (0, 1) and "joint_violation_rate" in out
        assert list((tmp_path / "tr").glob("*.jsonl"))


class TestAudit:
    def test_em(self, capsys):
        code, out, _ = run_cli(capsys, "audit", "--m", "4", "--range-size", "6", "--epsilon", "1")
        assert code == 0 and json.loads(out)["passed"]

    def test_broken(self, capsys):
        code, out, _ = run_cli(capsys, "audit", "--m", "3", "--range-size", "4", "--epsilon", "1",
                               "--mechanism", "broken")
        assert code == 1 and not json.loads(out)["passed"]


class TestReplay:
    @pytest.fixture
    def transcript(self, capsys, tmp_path):
        spec = bundled_path("engine_protection.json")
        run_cli(capsys, "run", "--spec", str(spec), "--trials", "1", "--transcripts", str(tmp_path))
        return next(tmp_path.glob("*.jsonl"))

    def test_fresh(self, capsys, transcript):
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(transcript))
        assert code == 0 and "replay matches" in out

    def test_wrong_seed(self, capsys, transcript):
        code, out, _ = run_cli(capsys, "replay", "--transcript", str(transcript), "--seed", "5")
        assert code == 1 and "seed_stamp" in out

    def test_truncated(self, capsys, transcript):
        lines = transcript.read_text().splitlines()
        transcript.write_text("\n".join(lines[:-1]) + "\n")
        code, _, _ = run_cli(capsys, "replay", "--transcript", str(transcript))
        assert code == 2
