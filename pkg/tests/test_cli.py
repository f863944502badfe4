import json

import pytest
from typer.testing import CliRunner

from ldpfl.cli import app
from ldpfl.export.metrics import read_metrics

runner = CliRunner()


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config.to_dict()))
    return path


def prepare(config_file, out, *extra):
    return runner.invoke(app, ["prepare", "--config", str(config_file), "--out", str(out), *extra])


def simulate(out, *extra):
    return runner.invoke(app, ["simulate", "--out", str(out), *extra])


class TestPrepare:
    def test_writes_client_files(self, tmp_path, config_file):
        out = tmp_path / "run"
        result = prepare(config_file, out)
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in (out / "clients").iterdir()) == ["client_000.ldpfld", "client_001.ldpfld"]
        saved = json.loads((out / "config.json").read_text())
        assert saved["out_dir"] == str(out)
        assert "60" in result.output

    def test_raw_features_only_with_debug(self, tmp_path, config_file):
        prepare(config_file, tmp_path / "plain")
        assert not (tmp_path / "plain" / "debug").exists()
        result = prepare(config_file, tmp_path / "debug", "--debug")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "debug" / "debug" / "client_000_features.csv").exists()

    def test_baseline(self, tmp_path, config_file):
        out = tmp_path / "run"
        result = prepare(config_file, out, "--no-randomize")
        assert result.exit_code == 0, result.output
        assert json.loads((out / "config.json").read_text())["randomizer"]["enabled"] is False

    def test_unknown_mechanism(self, tmp_path, config_file):
        assert prepare(config_file, tmp_path / "run", "--mechanism", "laplace").exit_code == 1

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"codec": {"m": -1}}')
        assert prepare(path, tmp_path / "run").exit_code == 1

    def test_missing_data_file(self, tmp_path):
        path = tmp_path / "csv.json"
        path.write_text(json.dumps({"data": {"kind": "csv", "csv_path": str(tmp_path / "nope.csv")}}))
        assert prepare(path, tmp_path / "run").exit_code == 1

    def test_config_from_environment(self, tmp_path, config_file, monkeypatch):
        monkeypatch.setenv("LDPFL_CONFIG", str(config_file))
        result = runner.invoke(app, ["prepare", "--out", str(tmp_path / "run")])
        assert result.exit_code == 0, result.output
        assert len(list((tmp_path / "run" / "clients").iterdir())) == 2


class TestSimulate:
    def test_metrics_and_checkpoint(self, tmp_path, config_file):
        out = tmp_path / "run"
        prepare(config_file, out)
        result = simulate(out)
        assert result.exit_code == 0, result.output
        records = read_metrics(out / "metrics.jsonl")
        assert [r["round"] for r in records] == [0, 1]
        assert (out / "model.ldpfl").read_bytes()[:6] == b"LDPFL1"

    def test_single_round(self, tmp_path, config_file):
        out = tmp_path / "run"
        prepare(config_file, out)
        assert simulate(out, "--rounds", "1").exit_code == 0
        assert len((out / "metrics.jsonl").read_text().splitlines()) == 1

    def test_needs_prepared_data(self, tmp_path, config_file):
        result = runner.invoke(
            app, ["simulate", "--config", str(config_file), "--out", str(tmp_path / "empty")]
        )
        assert result.exit_code == 2

    def test_client_count_mismatch(self, tmp_path, config_file):
        out = tmp_path / "run"
        prepare(config_file, out)
        assert simulate(out, "--clients", "3").exit_code == 2

    def test_reruns_are_byte_identical(self, tmp_path, config_file):
        for name in ("a", "b"):
            prepare(config_file, tmp_path / name)
            assert simulate(tmp_path / name).exit_code == 0
        for relative in ("clients/client_000.ldpfld", "clients/client_001.ldpfld", "metrics.jsonl", "model.ldpfl"):
            assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


class TestVerify:
    def test_exact_checks(self):
        result = runner.invoke(app, ["verify", "--trials", "0"])
        assert result.exit_code == 0, result.output
        assert "all checks passed" in result.output

    def test_with_monte_carlo(self):
        result = runner.invoke(app, ["verify", "--mechanism", "alpha-oue", "--epsilon", "1.0"])
        assert result.exit_code == 0, result.output

    def test_split_monte_carlo(self):
        result = runner.invoke(app, ["verify", "--mechanism", "split-oue", "--epsilon", "1.0"])
        assert result.exit_code == 0, result.output
        assert "monte carlo" in result.output

    def test_oue(self):
        result = runner.invoke(app, ["verify", "--mechanism", "oue", "--epsilon", "1.0"])
        assert result.exit_code == 0, result.output

    def test_bad_epsilon(self):
        assert runner.invoke(app, ["verify", "--epsilon", "0"]).exit_code == 1


class TestReport:
    def test_needs_inputs(self, tmp_path):
        assert runner.invoke(app, ["report", "--out", str(tmp_path)]).exit_code == 1

    def test_two_runs(self, tmp_path, config_file):
        for name in ("alpha4", "alpha10"):
            prepare(config_file, tmp_path / name)
            simulate(tmp_path / name)
        report_dir = tmp_path / "report"
        result = runner.invoke(
            app,
            [
                "report",
                str(tmp_path / "alpha4" / "metrics.jsonl"),
                str(tmp_path / "alpha10" / "metrics.jsonl"),
                "--out",
                str(report_dir),
            ],
        )
        assert result.exit_code == 0, result.output
        assert len((report_dir / "alpha4.csv").read_text().splitlines()) == 1 + 2
        summary = (report_dir / "summary.md").read_text()
        assert "alpha4" in summary and "alpha10" in summary

    def test_malformed(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text("not json\n")
        result = runner.invoke(app, ["report", str(path), "--out", str(tmp_path / "report")])
        assert result.exit_code == 2
