import json

import pytest

from app.cli import build_parser, main
from app.errors import (
    EXIT_ASSERTION,
    EXIT_ERROR,
    EXIT_OK,
    AssertionFailure,
    BudgetMismatchError,
    ConfigurationError,
    error_handler,
)
from app.tracking import RunTracker


def _write_config(path, **values):
    config = {"p": 2, "norm1": "Linf", "attack": "cf-nondiff", "trials": 2, "seed": 1}
    config.update(values)
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        args = parser.parse_args(["raster", "--figure", "3", "--resolution", "10"])
        assert args.command == "raster"
        assert args.resolution == 10
        assert args.out_dir == "rasters"

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_unknown_figure(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["raster", "--figure", "4"])


class TestExtractCommand:
    def test_report_on_stdout(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        assert main(["extract", "--config", str(config)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "extract"
        assert report["passed"] is True
        assert report["counts"]["cf"] == 6

    def test_out_file_is_reproducible(self, tmp_path):
        config = _write_config(tmp_path / "config.json")
        assert main(["extract", "--config", str(config), "--out", str(tmp_path / "a.json")]) == EXIT_OK
        assert main(["extract", "--config", str(config), "--out", str(tmp_path / "b.json")]) == EXIT_OK
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_missing_config(self, tmp_path):
        assert main(["extract", "--config", str(tmp_path / "nope.json")]) == EXIT_ERROR

    def test_invalid_config(self, tmp_path):
        config = _write_config(tmp_path / "config.json", attack="rcf-nondiff")
        assert main(["extract", "--config", str(config)]) == EXIT_ERROR

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["extract", "--config", str(path)]) == EXIT_ERROR


class TestRegionsCommand:
    def test_round_trip(self, tmp_path, capsys):
        config = _write_config(
            tmp_path / "config.json",
            model={"a": [2.0, -1.0], "b": 3.0},
            trials=1,
            raster={"lo": [-4.0, -5.0], "hi": [6.0, 5.0], "resolution": 4},
        )
        ledger = tmp_path / "ledger.jsonl"
        assert main(["extract", "--config", str(config), "--ledger-out", str(ledger)]) == EXIT_OK
        capsys.readouterr()
        code = main(["regions", "--config", str(config), "--ledger", str(ledger),
                     "--raster", str(tmp_path / "grid.csv")])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["regions"][0]["kind"] == "cf"
        assert (tmp_path / "grid.csv").read_text(encoding="utf-8").startswith("x1,x2,label\n")

    def test_contradicted_hidden_model(self, tmp_path, hidden, linf, make_cf_ledger):
        ledger = tmp_path / "ledger.jsonl"
        make_cf_ledger(hidden, linf).write_jsonl(ledger)
        config = _write_config(
            tmp_path / "config.json",
            model={"a": [1.0, 1.0], "b": 0.0},
            raster={"lo": [-1.0, -1.0], "hi": [1.0, 1.0], "resolution": 2},
        )
        assert main(["regions", "--config", str(config), "--ledger", str(ledger)]) == EXIT_ASSERTION

    def test_inconsistent_ledger(self, tmp_path):
        ledger = tmp_path / "ledger.jsonl"
        ledger.write_text(
            '{"seq": 0, "kind": "factual", "input": [1.0, 1.0], "output": 1, "label": 1}\n'
            '{"seq": 1, "kind": "factual", "input": [1.0, 1.0], "output": -1, "label": -1}\n',
            encoding="utf-8",
        )
        config = _write_config(
            tmp_path / "config.json",
            raster={"lo": [-1.0, -1.0], "hi": [1.0, 1.0], "resolution": 2},
        )
        assert main(["regions", "--config", str(config), "--ledger", str(ledger)]) == EXIT_ERROR


class TestDemoAndRaster:
    def test_demo(self, capsys):
        assert main(["demo"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("Counterfactual example")
        assert "Full rcf-nondiff attack" in out

    def test_raster(self, tmp_path, capsys):
        code = main(["raster", "--figure", "2", "--out-dir", str(tmp_path), "--resolution", "5"])
        assert code == EXIT_OK
        assert (tmp_path / "fig2.csv").exists()
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "raster"

    def test_log_file(self, tmp_path, capsys):
        log_file = tmp_path / "logs" / "run.log"
        assert main(["--log-file", str(log_file), "demo"]) == EXIT_OK
        lines = log_file.read_text(encoding="utf-8").splitlines()
        entries = [json.loads(line) for line in lines]
        assert any(entry.get("command") == "demo" for entry in entries)


class TestErrorHandling:
    def test_exit_codes(self):
        assert error_handler(ConfigurationError("bad")) == EXIT_ERROR
        assert error_handler(AssertionFailure("off")) == EXIT_ASSERTION
        assert error_handler(BudgetMismatchError(["cf: expected 3, observed 4"])) == EXIT_ASSERTION
        assert error_handler(RuntimeError("boom")) == EXIT_ERROR

    def test_tracker(self):
        tracker = RunTracker("extract", run_id="run-1")
        with tracker:
            tracker.record("cf", 3)
            tracker.record("cf")
        snapshot = tracker.snapshot()
        assert snapshot["counts"] == {"cf": 4}
        assert snapshot["error_count"] == 0
        assert snapshot["duration_ms"] is not None

    def test_tracker_counts_failures(self):
        tracker = RunTracker("regions")
        with pytest.raises(ValueError):
            with tracker:
                raise ValueError("bad")
        assert tracker.error_count == 1
