import json
import os

import pytest

from pblab import cli


def run_cli(argv, tmp_path, name):
    out = tmp_path / name
    env_backup = os.environ.pop("PBLAB_OUT", None)
    try:
        code = cli.main(argv + ["--out", str(out)])
    finally:
        if env_backup is not None:
            os.environ["PBLAB_OUT"] = env_backup
    return code, out


class TestCli:
    def test_coarea_small_passes(self, tmp_path):
        code, out = run_cli(["coarea-check", "--resolution", "128"], tmp_path, "a")
        assert code == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["experiment"] == "coarea-check"
        assert all(c["pass"] for c in rep["checks"])
        assert (out / "tables" / "coarea.csv").exists()
        assert (out / "report_meta.json").exists()

    def test_reports_byte_identical(self, tmp_path):
        _, out1 = run_cli(["coarea-check", "--resolution", "64"], tmp_path, "r1")
        _, out2 = run_cli(["coarea-check", "--resolution", "64"], tmp_path, "r2")
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_failing_check_exit_one(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"tolerance": 1e-9}))
        code, _ = run_cli(
            ["coarea-check", "--resolution", "64", "--config", str(cfg)],
            tmp_path, "f",
        )
        assert code == 1

    def test_unknown_key_exit_two(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"resolutio": 64}))
        code, _ = run_cli(["coarea-check", "--config", str(cfg)], tmp_path, "u")
        assert code == 2

    def test_bad_type_exit_two(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"resolution": "big"}))
        code, _ = run_cli(["coarea-check", "--config", str(cfg)], tmp_path, "t")
        assert code == 2

    def test_randomized_needs_seed(self, tmp_path):
        code, _ = run_cli(["division-demo"], tmp_path, "s")
        assert code == 2

    def test_env_out_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "env-out"
        monkeypatch.setenv("PBLAB_OUT", str(target))
        code = cli.main(["coarea-check", "--resolution", "64"])
        assert code == 0
        assert (target / "report.json").exists()

    def test_plots_emitted(self, tmp_path):
        code, out = run_cli(
            ["coarea-check", "--resolution", "64", "--plots"], tmp_path, "p"
        )
        assert code == 0
        svg = out / "plots" / "contours.svg"
        assert svg.exists() and svg.read_text().startswith("<svg")

    def test_optimize_trace_table(self, tmp_path):
        code, out = run_cli(
            ["optimize", "--seed", "3", "--resolution", "64"], tmp_path, "o"
        )
        assert code == 0
        trace = (out / "tables" / "optimizer_trace.csv").read_text().splitlines()
        assert trace[0] == "step,objective"
        assert len(trace) > 2

    def test_schema_file_in_sync(self):
        here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        with open(os.path.join(here, "docs", "config-schema.json")) as fh:
            on_disk = json.load(fh)
        assert on_disk == cli.command_schema()

    def test_provenance_fields(self, tmp_path):
        _, out = run_cli(["coarea-check", "--resolution", "64"], tmp_path, "v")
        rep = json.loads((out / "report.json").read_text())
        prov = rep["provenance"]
        assert {"git_hash", "package_version", "backend", "seed", "resolution"} \
            <= set(prov)
        assert "wall_time_s" not in json.dumps(rep)
