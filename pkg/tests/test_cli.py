import json
import math
from pathlib import Path

import pytest

from meterwork.cli import load_config_file, main


def read_json(path: Path) -> dict:
    return json.loads(path.read_text())


class TestConfigFile:
    def test_parse_key_values(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nseed = 9\n\nsamples= 100  # trailing\n")
        assert load_config_file(cfg) == {"seed": "9", "samples": "100"}

    def test_malformed_line_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just words\n")
        with pytest.raises(ValueError, match="key = value"):
            load_config_file(cfg)

    def test_unknown_key_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("volume = 11\n")
        code = main(["relaxation", "--config", str(cfg), "--output", str(tmp_path / "o")])
        assert code == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("steps = 10\ndt = 1.0\n")
        out = tmp_path / "o"
        code = main(
            ["relaxation", "--config", str(cfg), "--steps", "20", "--output", str(out)]
        )
        assert code == 0
        rows = (out / "relaxation_direct.csv").read_text().splitlines()
        assert len(rows) - 1 in (21, 22)  # 20 steps, dt inserted if off-grid


class TestRelaxationCommand:
    def test_default_summary_has_statistical_plateau(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["relaxation", "--output", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "0.36787944117144233" in printed
        summary = read_json(out / "relaxation_summary.json")
        assert summary["statistical"]["rho_at_dt"] == math.exp(-1.0)
        assert summary["statistical"]["sigma_at_dt"] == 1.0

    def test_direct_description_zero(self, tmp_path):
        out = tmp_path / "o"
        assert main(["relaxation", "--description", "direct", "--output", str(out)]) == 0
        summary = read_json(out / "relaxation_summary.json")
        assert summary["direct"]["rho_at_dt"] == 0.0
        assert "statistical" not in summary

    def test_step_count_leaves_plateaus_fixed(self, tmp_path):
        vals = []
        for steps in (10, 10000):
            out = tmp_path / f"o{steps}"
            assert main(
                ["relaxation", "--steps", str(steps), "--output", str(out)]
            ) == 0
            summary = read_json(out / "relaxation_summary.json")
            vals.append(
                (summary["direct"]["rho_at_dt"], summary["statistical"]["rho_at_dt"])
            )
        assert vals[0] == vals[1]

    def test_csv_columns(self, tmp_path):
        out = tmp_path / "o"
        main(["relaxation", "--output", str(out)])
        header = (out / "relaxation_poisson.csv").read_text().splitlines()[0]
        assert header == "t,rho,sigma"


class TestJarzynskiCommand:
    def test_constant_scenario_exact_pass(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            ["jarzynski", "--scenario", "constant", "--samples", "200", "--output", str(out)]
        )
        assert code == 0
        report = read_json(out / "jarzynski_report.json")
        assert report["estimator_mean"] == 1.0
        assert report["passed"] is True

    def test_commuting_quench_passes(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "jarzynski",
                "--scenario",
                "commuting-quench",
                "--samples",
                "20000",
                "--seed",
                "42",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        samples = (out / "work_samples.csv").read_text().splitlines()
        assert samples[0] == "initial_energy,final_energy,work,stream_id,draw_id"
        assert len(samples) == 20001

    def test_wrong_delta_f_fails_nonzero(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "jarzynski",
                "--scenario",
                "commuting-quench",
                "--samples",
                "20000",
                "--seed",
                "42",
                "--delta-f",
                "0.2050",  # about 10% off the closed form
                "--output",
                str(out),
            ]
        )
        assert code == 1
        report = read_json(out / "jarzynski_report.json")
        assert report["passed"] is False
        assert report["delta_f_overridden"] is True

    def test_json_format_export(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "jarzynski",
                "--scenario",
                "constant",
                "--samples",
                "50",
                "--format",
                "json",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        samples = read_json(out / "work_samples.json")
        assert len(samples) == 50 and samples[0]["work"] == 0.0

    def test_custom_scenario_from_file(self, tmp_path):
        sched = tmp_path / "drive.json"
        sched.write_text(
            json.dumps(
                {
                    "t_f": 1.0,
                    "n_steps": 30,
                    "h_initial": [[0.0, 0.0], [0.0, 1.0]],
                    "h_final": [[0.5, 0.2], [0.2, 1.5]],
                }
            )
        )
        out = tmp_path / "o"
        code = main(
            [
                "jarzynski",
                "--scenario",
                "custom",
                "--schedule-file",
                str(sched),
                "--samples",
                "30000",
                "--output",
                str(out),
            ]
        )
        assert code == 0

    def test_driven_qubit_scenario(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "jarzynski",
                "--scenario",
                "driven-qubit",
                "--samples",
                "20000",
                "--seed",
                "7",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        report = read_json(out / "jarzynski_report.json")
        assert abs(report["exact_evaluation"] - report["exact_value"]) <= 1e-8


class TestSchemeCommand:
    def test_default_run_passes(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            ["scheme", "--samples", "500", "--seed", "7", "--output", str(out)]
        )
        assert code == 0
        summary = read_json(out / "scheme_summary.json")
        assert summary["passed"] is True
        assert summary["ledger_per_run"] == {
            "experimenter": 2.0,
            "measured": -3.0,
            "reader": 1.0,
        }
        lines = (out / "scheme_records.jsonl").read_text().splitlines()
        assert len(lines) == 500
        first = json.loads(lines[0])
        assert first["sigma_reader"] == "1"

    def test_eigenstate_prep_all_zero(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "scheme",
                "--samples",
                "100",
                "--eigenstate-prep",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        summary = read_json(out / "scheme_summary.json")
        assert summary["checks"]["eigenstate_all_zero"] is True
        assert summary["sigma_total"] == 0.0
        assert summary["ledger_per_run"] == {
            "experimenter": 0.0,
            "measured": 0.0,
            "reader": 0.0,
        }

    def test_verify_appendix_b_four_stages(self, tmp_path):
        out = tmp_path / "o"
        code = main(
            [
                "scheme",
                "--samples",
                "50",
                "--verify-appendix-b",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        report = read_json(out / "roundtrip_report.json")
        assert [s["stage"] for s in report["stages"]] == ["a", "b", "c", "d"]
        assert all(s["passed"] for s in report["stages"])

    def test_summary_csv_columns(self, tmp_path):
        out = tmp_path / "o"
        main(["scheme", "--samples", "20", "--output", str(out)])
        header = (out / "scheme_summary.csv").read_text().splitlines()[0]
        assert header.split(",") == [
            "stream",
            "draw",
            "initial_energy",
            "final_energy",
            "work_drive",
            "work_total",
            "event_outcome",
            "sigma_experimenter",
            "sigma_reader",
            "sigma_measured",
        ]


class TestPolicyOverrides:
    def test_impossible_unitary_tolerance_surfaces_cleanly(self, tmp_path, capsys):
        # float rounding in the coupling unitary (~1e-15) violates a 1e-30 bound
        cfg = tmp_path / "strict.cfg"
        cfg.write_text("policy_unitary_tol = 1e-30\nsamples = 10\n")
        code = main(["scheme", "--config", str(cfg), "--output", str(tmp_path / "o")])
        assert code == 2
        assert "unitary assertion" in capsys.readouterr().err

    def test_loosened_tolerance_passes_through(self, tmp_path):
        cfg = tmp_path / "loose.cfg"
        cfg.write_text("policy_hermitian_tol = 1e-9\nsamples = 20\n")
        assert main(["scheme", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0


class TestReproducibility:
    def test_worker_counts_yield_identical_bytes(self, tmp_path, monkeypatch):
        outputs = {}
        for workers in ("1", "8"):
            monkeypatch.setenv("METERWORK_THREADS", workers)
            out = tmp_path / f"w{workers}"
            assert main(
                ["scheme", "--samples", "6000", "--seed", "11", "--output", str(out)]
            ) == 0
            outputs[workers] = {
                p.name: p.read_bytes() for p in sorted(out.iterdir())
            }
        assert outputs["1"] == outputs["8"]
