import json
from pathlib import Path

import numpy as np
import pytest

from chaoskit import cli
from chaoskit.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ScenarioSpec,
    build_spec,
    emit_report,
    main,
    make_parser,
)
from chaoskit.model import ConfigError

DATA = Path(__file__).parent / "data"


class TestEmitReport:
    def test_empty_rows_header_only(self, tmp_path):
        path = emit_report([], ["x", "y"], tmp_path / "empty.csv")
        assert path.read_text() == "x,y\n"

    def test_schema_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="schema"):
            emit_report([{"x": 1.0}], ["x", "y"], tmp_path / "bad.csv")
        with pytest.raises(ValueError, match="schema"):
            emit_report([{"x": 1.0, "y": 2.0, "z": 3.0}], ["x", "y"], tmp_path / "bad.csv")

    def test_cell_formatting(self, tmp_path):
        rows = [{"f": 0.1, "i": 7, "b": True, "none": None, "s": "tag"}]
        path = emit_report(rows, ["f", "i", "b", "none", "s"], tmp_path / "fmt.csv")
        assert path.read_text().splitlines()[1] == "0.10000000000000001,7,true,,tag"

    def test_lf_line_endings(self, tmp_path):
        path = emit_report([{"x": 1}], ["x"], tmp_path / "lf.csv")
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")


class TestSpecBuilding:
    def parse(self, argv):
        return make_parser().parse_args(argv)

    def test_flags_only(self, tmp_path):
        spec = build_spec(self.parse(
            ["--scenario", "gaussian_rate", "--out", str(tmp_path), "--seed", "5"]
        ))
        assert spec.scenario == "gaussian_rate"
        assert spec.seed == 5
        assert spec.params["k"] == [2, 3]

    def test_missing_scenario_rejected(self):
        with pytest.raises(ConfigError, match="no scenario"):
            build_spec(self.parse([]))

    def test_unknown_param_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[scenario]\nname = gaussian_rate\n\n[gaussian_rate]\nzz = 3\n")
        with pytest.raises(ConfigError, match="unknown key"):
            build_spec(self.parse(["--config", str(cfg)]))

    def test_unknown_section_rejected(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[scenario]\nname = gaussian_rate\n\n[mystery]\nzz = 3\n")
        with pytest.raises(ConfigError, match="unknown section"):
            build_spec(self.parse(["--config", str(cfg)]))

    def test_config_values_and_flag_overrides(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(
            "[scenario]\nname = gaussian_rate\nseed = 9\nworkers = 3\n\n"
            "[gaussian_rate]\nn = 100,1000\nk = 2\n"
        )
        spec = build_spec(self.parse(["--config", str(cfg), "--out", str(tmp_path)]))
        assert spec.seed == 9 and spec.workers == 3
        assert spec.params["n"] == [100, 1000] and spec.params["k"] == [2]
        spec2 = build_spec(self.parse(
            ["--config", str(cfg), "--seed", "1", "--workers", "2", "--out", str(tmp_path)]
        ))
        assert spec2.seed == 1 and spec2.workers == 2

    def test_workers_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("CHAOSKIT_WORKERS", "6")
        spec = build_spec(self.parse(["--scenario", "gaussian_rate", "--out", str(tmp_path)]))
        assert spec.workers == 6


class TestMainExitCodes:
    def test_ok_run(self, tmp_path, capsys):
        code = main([
            "--scenario", "gaussian_rate", "--out", str(tmp_path), "--seed", "3",
            "--quiet",
        ])
        assert code == EXIT_OK
        assert (tmp_path / "gaussian_rate.csv").exists()
        assert (tmp_path / "run_manifest.json").exists()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[scenario]\nname = not_a_scenario\n")
        assert main(["--config", str(cfg), "--quiet"]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file_is_io_error(self, tmp_path, capsys):
        code = main(["--config", str(tmp_path / "nope.ini"), "--quiet"])
        assert code == cli.EXIT_IO

    def test_empty_grid_rejected(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[scenario]\nname = gaussian_rate\n\n[gaussian_rate]\nn =\n")
        assert main(["--config", str(cfg), "--quiet"]) == EXIT_CONFIG

    def test_numerical_error_exit_writes_diagnostic(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text(
            "[scenario]\nname = simulate_validate\n\n"
            "[simulate_validate]\nn = 8\ndt = 1000\nT = 200000\nreplicas = 2\n"
            "coupling_n = 8\ncoupling_replicas = 2\nrank_n = 8\nrank_replicas = 2\n"
        )
        code = main(["--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"])
        assert code == EXIT_NUMERICAL
        assert (tmp_path / "out" / "error.txt").exists()


class TestDeterminism:
    def run_twice(self, tmp_path, extra):
        outs = []
        for sub in ("one", "two"):
            out = tmp_path / sub
            assert main(extra + ["--out", str(out), "--quiet"]) == EXIT_OK
            outs.append(out)
        return outs

    def test_gaussian_rate_byte_identical(self, tmp_path):
        a, b = self.run_twice(
            tmp_path, ["--scenario", "gaussian_rate", "--seed", "21"]
        )
        assert (a / "gaussian_rate.csv").read_bytes() == (b / "gaussian_rate.csv").read_bytes()

    def test_worker_count_does_not_change_output(self, tmp_path):
        outs = []
        for workers in ("1", "4"):
            out = tmp_path / f"w{workers}"
            code = main([
                "--scenario", "bound_tables", "--seed", "21", "--workers", workers,
                "--out", str(out), "--quiet",
            ])
            assert code == EXIT_OK
            outs.append((out / "bound_tables.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_ab_identities_workers_do_not_change_output(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(
            "[scenario]\nname = ab_identities\nseed = 5\n\n"
            "[ab_identities]\na = 1.0\nb = 1.0,2.0\nt = 0.5\nlevel_max = 2\n"
            "mc_samples = 20000\n"
        )
        outs = []
        for workers in ("1", "3"):
            out = tmp_path / f"w{workers}"
            assert main([
                "--config", str(cfg), "--workers", workers, "--out", str(out),
                "--quiet",
            ]) == EXIT_OK
            outs.append((out / "ab_identities.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_simulate_validate_workers_do_not_change_output(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(
            "[scenario]\nname = simulate_validate\nseed = 31\n"
            "\n[simulate_validate]\nn = 32\ndt = 0.01\nT = 0.2\nreplicas = 4\n"
            "band_times = 3\ncoupling_n = 16,32\ncoupling_replicas = 4\n"
            "rank_n = 8,16\nrank_reference_n = 32\nrank_replicas = 8\nrank_T = 0.1\n"
            "rank_dt = 0.01\n"
        )
        outputs = []
        for workers in ("1", "4"):
            out = tmp_path / f"w{workers}"
            assert main([
                "--config", str(cfg), "--workers", workers, "--out", str(out),
                "--quiet",
            ]) == EXIT_OK
            blob = b"".join(
                (out / name).read_bytes()
                for name in ("simulate_bands.csv", "simulate_coupling.csv",
                             "simulate_rank_w1.csv")
            )
            outputs.append(blob)
        assert outputs[0] == outputs[1]

    def test_golden_bound_tables(self, tmp_path):
        code = main([
            "--config", str(DATA / "golden_bound_tables.ini"),
            "--out", str(tmp_path), "--quiet",
        ])
        assert code == EXIT_OK
        produced = (tmp_path / "bound_tables.csv").read_bytes()
        golden = (DATA / "golden_bound_tables.csv").read_bytes()
        assert produced == golden


class TestManifest:
    def test_manifest_contents(self, tmp_path):
        assert main([
            "--scenario", "infrange_sweep", "--out", str(tmp_path), "--seed", "77",
            "--quiet",
        ]) == EXIT_OK
        manifest = json.loads((tmp_path / "run_manifest.json").read_text())
        assert manifest["scenario"] == "infrange_sweep"
        assert manifest["seed"] == 77
        assert manifest["backend"] in ("cython", "python")
        assert "infrange_sweep.csv" in manifest["files"]
        assert manifest["versions"]["numpy"] == np.__version__


class TestScenarioBehaviors:
    def test_gaussian_rate_final_row_matches_limit(self, tmp_path):
        spec = ScenarioSpec(
            scenario="gaussian_rate",
            params=cli.load_scenario_params("gaussian_rate", {}),
            out_dir=tmp_path, seed=0, quiet=True,
        )
        files = cli.run_scenario(spec)
        lines = (tmp_path / "gaussian_rate.csv").read_text().splitlines()
        header = lines[0].split(",")
        last = dict(zip(header, lines[-1].split(",")))
        assert int(last["n"]) == 10**6
        scaled = float(last["scaled_w2"])
        limit = float(last["w2_limit"])
        assert abs(scaled - limit) / limit < 1e-3

    def test_ab_identities_summary_row(self, tmp_path):
        params = cli.load_scenario_params("ab_identities", {
            "a": "1.0", "b": "1.0", "t": "0.5,1.0", "mc_samples": "10000",
            "level_max": "2",
        })
        spec = ScenarioSpec(
            scenario="ab_identities", params=params, out_dir=tmp_path, seed=4,
            quiet=True,
        )
        cli.run_scenario(spec)
        lines = (tmp_path / "ab_identities.csv").read_text().splitlines()
        header = lines[0].split(",")
        summary = dict(zip(header, lines[-1].split(",")))
        assert summary["kind"] == "summary"
        assert float(summary["abs_diff"]) <= 1e-8
        assert summary["dominated"] == "true"

    def test_bound_tables_zero_constants(self, tmp_path):
        params = cli.load_scenario_params("bound_tables", {
            "C0": "0", "M": "0", "b_sup": "0", "n": "100", "k": "1,2",
        })
        spec = ScenarioSpec(
            scenario="bound_tables", params=params, out_dir=tmp_path, seed=0,
            quiet=True,
        )
        cli.run_scenario(spec)
        lines = (tmp_path / "bound_tables.csv").read_text().splitlines()
        header = lines[0].split(",")
        for line in lines[1:]:
            row = dict(zip(header, line.split(",")))
            if row["bound"] in ("pairwise", "reversed") and row["total"]:
                assert float(row["total"]) == 0.0
