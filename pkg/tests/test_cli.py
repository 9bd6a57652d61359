import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from efi import __version__
from efi.cli import app
from efi.schemas.experiment import dump_config, parse_config
from efi.services.presets import list_presets

from tests.helpers import tiny_linear_dict

runner = CliRunner()


def _invoke(*args):
    return runner.invoke(app, ["--log-level", "ERROR", *map(str, args)])


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(dump_config(parse_config(tiny_linear_dict())), encoding="utf-8")
    return path


@pytest.fixture
def data_file(tmp_path, config_file):
    path = tmp_path / "data.csv"
    result = _invoke("simulate", "--config", config_file, "--out", path)
    assert result.exit_code == 0
    return path


def test_version():
    result = _invoke("version")
    assert result.exit_code == 0
    assert result.stdout.strip() == __version__


class TestPresets:
    def test_list(self):
        result = _invoke("presets", "list")
        assert result.exit_code == 0
        assert result.stdout.split() == list_presets()

    def test_show(self):
        result = _invoke("presets", "show", "linear_known_sigma")
        assert result.exit_code == 0
        assert "linear_known_sigma" in result.stdout
        assert "lambda:" in result.stdout

    def test_show_unknown(self):
        assert _invoke("presets", "show", "nope").exit_code == 2


class TestSimulate:
    def test_same_seed_same_file(self, tmp_path, config_file, data_file):
        again = tmp_path / "again.csv"
        assert _invoke("simulate", "--config", config_file, "--out", again).exit_code == 0
        assert again.read_text() == data_file.read_text()
        frame = pd.read_csv(data_file)
        assert list(frame.columns) == ["y", "x1", "x2"]
        assert len(frame) == 30

    def test_seed_override(self, tmp_path, config_file, data_file):
        other = tmp_path / "other.csv"
        assert _invoke("simulate", "--config", config_file, "--seed", 99, "--out", other).exit_code == 0
        assert other.read_text() != data_file.read_text()

    def test_empty_dataset_keeps_header(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text(dump_config(parse_config(tiny_linear_dict(n=0))), encoding="utf-8")
        out = tmp_path / "empty.csv"
        assert _invoke("simulate", "--config", path, "--out", out).exit_code == 0
        assert out.read_text().strip() == "y,x1,x2"

    def test_config_and_preset_are_exclusive(self, tmp_path, config_file):
        result = _invoke(
            "simulate", "--config", config_file, "--preset", "logistic", "--out", tmp_path / "x.csv"
        )
        assert result.exit_code == 2


class TestFit:
    def test_outputs_and_determinism(self, tmp_path, config_file, data_file):
        first, second = tmp_path / "a", tmp_path / "b"
        assert _invoke("fit", data_file, "--config", config_file, "--out-dir", first).exit_code == 0
        assert _invoke("fit", data_file, "--config", config_file, "--out-dir", second).exit_code == 0
        assert (first / "samples.csv").read_text() == (second / "samples.csv").read_text()
        for name in ("trace.csv", "summary.json", "plotdata_qq.csv", "plotdata_intervals.csv"):
            assert (first / name).exists()
        summary = json.loads((first / "summary.json").read_text())
        assert summary["n_draws"] == 10
        assert summary["method"] == "efi"
        assert [row["name"] for row in summary["intervals"]] == ["beta0", "beta1"]

    def test_thread_count_leaves_samples_unchanged(self, tmp_path):
        path = tmp_path / "two_group.yaml"
        two_group = tiny_linear_dict(
            family={"name": "behrens_fisher", "group_sizes": [10, 10]},
            n=20,
            network={"layer_widths": [2, 6, 2], "activation": "tanh"},
        )
        path.write_text(dump_config(parse_config(two_group)), encoding="utf-8")
        data = tmp_path / "groups.csv"
        assert _invoke("simulate", "--config", path, "--out", data).exit_code == 0
        runs = {}
        for threads in (1, 2):
            out = tmp_path / f"threads{threads}"
            result = _invoke("fit", data, "--config", path, "--out-dir", out, "--threads", threads)
            assert result.exit_code == 0
            runs[threads] = (out / "samples.csv").read_bytes()
        assert runs[1] == runs[2]

    def test_no_collected_draws(self, tmp_path, data_file):
        path = tmp_path / "short.yaml"
        short = tiny_linear_dict(run={"burnin": 3, "iterations": 0, "thin": 1})
        path.write_text(dump_config(parse_config(short)), encoding="utf-8")
        out = tmp_path / "run"
        assert _invoke("fit", data_file, "--config", path, "--out-dir", out).exit_code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_draws"] == 0
        assert all(row["lower"] is None for row in summary["intervals"])

    def test_bad_config_exits_2(self, tmp_path, data_file):
        path = tmp_path / "bad.yaml"
        path.write_text("name: broken\nn: -1\n", encoding="utf-8")
        result = _invoke("fit", data_file, "--config", path, "--out-dir", tmp_path / "run")
        assert result.exit_code == 2

    def test_mismatched_data_exits_3(self, tmp_path, data_file):
        path = tmp_path / "wide.yaml"
        wide = tiny_linear_dict(
            family={"name": "linear_known_sigma", "p": 3, "sigma": 1.0},
            network={"layer_widths": [5, 8, 3], "activation": "tanh"},
        )
        path.write_text(dump_config(parse_config(wide)), encoding="utf-8")
        result = _invoke("fit", data_file, "--config", path, "--out-dir", tmp_path / "run")
        assert result.exit_code == 3


class TestReplicate:
    def test_coverage_table(self, tmp_path, config_file):
        out = tmp_path / "rep"
        result = _invoke("replicate", "--config", config_file, "--method", "ols", "--out-dir", out)
        assert result.exit_code == 0
        frame = pd.read_csv(out / "coverage.csv")
        assert set(frame["method"]) == {"ols"}
        assert frame["count"].sum() == 4


class TestBaseline:
    def test_json_summary(self, config_file, data_file):
        result = _invoke("baseline", data_file, "--config", config_file, "--method", "ols")
        assert result.exit_code == 0
        summary = json.loads(result.stdout)
        assert summary["method"] == "ols"
        assert summary["n_draws"] == 0
        assert {row["name"] for row in summary["intervals"]} == {"beta0", "beta1"}

    def test_unsupported_method(self, config_file, data_file):
        result = _invoke("baseline", data_file, "--config", config_file, "--method", "welch")
        assert result.exit_code == 2
