import json
import os

import numpy as np
import pytest

from robmean.harness import (CSV_HEADER, ConfigError, ExperimentConfig, Spec,
                             emit_svg, fit_scaling, parse_config,
                             run_experiment, serialize_config)
from robmean.harness.cli import main
from robmean.harness.runner import rows_to_csv_text

MINIMAL = """
epsilon = 0.1
T = 2
d = 1
n = 100
trials = 3
seed = 7
gamma = 0.4
tau = 0.1

[generator]
name = "gaussian"

[adversary]
name = "mean_shift"
magnitude = 5.0

[tail_profile]
name = "gaussian"

[[estimators]]
name = "online_filter"
"""


class TestConfig:
    def test_parse_minimal(self):
        cfg = parse_config(MINIMAL, env={})
        assert cfg.epsilon == 0.1 and cfg.T == 2 and cfg.trials == 3
        assert cfg.adversary.name == "mean_shift"
        assert cfg.adversary.params["magnitude"] == 5.0

    def test_round_trip_identity(self):
        cfg = parse_config(MINIMAL, env={})
        again = parse_config(serialize_config(cfg), env={})
        assert again == cfg

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="bogus_key"):
            parse_config("bogus_key = 1\n" + MINIMAL, env={})

    def test_invalid_epsilon_named(self):
        with pytest.raises(ConfigError, match="epsilon"):
            parse_config(MINIMAL.replace("epsilon = 0.1", "epsilon = 0.7"),
                         env={})

    def test_env_override(self):
        cfg = parse_config(MINIMAL, env={"ROBMEAN_EPSILON": "0.2",
                                         "ROBMEAN_ADVERSARY__MAGNITUDE": "9"})
        assert cfg.epsilon == 0.2
        assert cfg.adversary.params["magnitude"] == 9

    def test_estimator_requires_name(self):
        with pytest.raises(ConfigError, match="estimators"):
            parse_config(MINIMAL + "\n[[estimators]]\nfoo = 1\n", env={})


class TestRunExperiment:
    @pytest.fixture(scope="class")
    def report(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("rep")
        cfg = parse_config(MINIMAL, env={})
        return run_experiment(cfg, out_dir=str(out)), out

    def test_csv_schema_frozen(self, report):
        _, out = report
        with open(out / "report.csv") as fh:
            header = fh.readline().strip()
        assert header == "trial,t,estimator,err_sq,cum_err,total_weight,potential,cov_norm,ms"
        assert header == ",".join(CSV_HEADER)

    def test_row_count(self, report):
        rep, out = report
        lines = (out / "report.csv").read_text().strip().split("\n")
        # header + trials*T data rows + 2*T aggregate rows
        assert len(lines) == 1 + 3 * 2 + 2 * 2

    def test_cumulative_error_column(self, report):
        rep, _ = report
        per_trial = {}
        for row in rep["rows"]:
            if isinstance(row["trial"], str):
                continue
            per_trial.setdefault(row["trial"], []).append(
                (row["t"], float(row["err_sq"]), float(row["cum_err"])))
        for rows in per_trial.values():
            rows.sort()
            acc = 0.0
            for _, e2, cum in rows:
                acc += e2
                assert abs(cum - np.sqrt(acc)) <= 1e-9

    def test_json_aggregates(self, report):
        rep, out = report
        data = json.loads((out / "report.json").read_text())
        assert data["aggregates"][0]["trials"] == 3
        assert "config" in data

    def test_svg_written(self, report):
        _, out = report
        text = (out / "curves.svg").read_text()
        assert text.startswith("<svg") and "polyline" in text

    def test_deterministic_reports(self, tmp_path):
        cfg = parse_config(MINIMAL, env={})
        a = run_experiment(cfg, out_dir=str(tmp_path / "a"))
        b = run_experiment(cfg, out_dir=str(tmp_path / "b"))
        ta = (tmp_path / "a" / "report.csv").read_bytes()
        tb = (tmp_path / "b" / "report.csv").read_bytes()
        assert ta == tb

    def test_missing_diagnostics_serialize_empty(self, report):
        rep, _ = report
        data_rows = [r for r in rep["rows"] if not isinstance(r["trial"], str)]
        assert all(r["potential"] == "" for r in data_rows)  # filter runs


class TestWorkers:
    def test_parallel_matches_serial(self, tmp_path):
        cfg = parse_config(MINIMAL, env={})
        serial = run_experiment(cfg, out_dir=None)
        cfg2 = parse_config(MINIMAL, env={})
        cfg2.workers = 2
        parallel = run_experiment(cfg2, out_dir=None)
        assert rows_to_csv_text(serial["rows"]) == rows_to_csv_text(parallel["rows"])


class TestSvg:
    def test_single_point(self, tmp_path):
        path = str(tmp_path / "one.svg")
        text = emit_svg([("a", [10], [0.5])], path)
        assert "circle" in text and os.path.exists(path)

    def test_two_series_with_legend(self, tmp_path):
        text = emit_svg([("alpha", [1, 10], [1, 2]), ("beta", [1, 10], [2, 3])],
                        str(tmp_path / "two.svg"))
        assert text.count("polyline") == 2
        assert "alpha" in text and "beta" in text

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_svg([("bad", [1, 2], [1, float("nan")])],
                     str(tmp_path / "nan.svg"))

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_svg([], str(tmp_path / "none.svg"))


class TestFitScaling:
    def test_needs_three_points(self):
        with pytest.raises(ConfigError):
            fit_scaling([4, 16], np.ones((5, 2)))

    def test_recovers_power_law(self):
        rng = np.random.default_rng(0)
        T = [16, 64, 256]
        errors = np.array([[0.1 * np.sqrt(t) * np.exp(rng.normal(0, 0.02))
                            for t in T] for _ in range(20)])
        fit = fit_scaling(T, errors)
        assert 0.45 <= fit["slope"] <= 0.55
        assert fit["winner"] == "power"

    def test_flat_prefers_polylog(self):
        rng = np.random.default_rng(1)
        T = [16, 64, 256]
        errors = np.array([[0.5 + 0.05 * np.log(np.log(t))
                            + rng.normal(0, 0.002) for t in T]
                           for _ in range(10)])
        fit = fit_scaling(T, errors)
        assert fit["winner"] == "polylog"
        assert abs(fit["slope"]) < 0.2


class TestCli:
    def test_run_exit_codes(self, tmp_path):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(MINIMAL)
        assert main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "report.csv").exists()

    def test_config_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text(MINIMAL.replace("epsilon = 0.1", "epsilon = 0.9"))
        assert main(["run", "--config", str(bad), "--out",
                     str(tmp_path / "o")]) == 2

    def test_assumption_violation_exit_3(self, tmp_path):
        # correlated blocks put the clean covariance norm at 1 + rho(d-1),
        # which no reweighting can certify at a tiny lambda: the filter
        # mass collapses and the run aborts
        text = MINIMAL.replace('[generator]\nname = "gaussian"',
                               '[generator]\nname = "gaussian_blocks"\nrho = 0.95')
        text = text.replace("d = 1", "d = 10")
        text = text.replace('name = "mean_shift"\nmagnitude = 5.0',
                            'name = "identity"')
        text = text.replace("tau = 0.1", "tau = 0.1\nlam = 1e-6")
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(text)
        assert main(["run", "--config", str(cfg_path), "--out",
                     str(tmp_path / "o")]) == 3

    def test_gen_writes_stream(self, tmp_path):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(MINIMAL)
        assert main(["gen", "--config", str(cfg_path), "--out",
                     str(tmp_path / "g")]) == 0
        data = np.load(tmp_path / "g" / "stream.npz")
        assert data["data"].shape == (100, 2)

    def test_stability_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(MINIMAL)
        assert main(["stability", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "delta_required" in out

    def test_selftest(self):
        assert main(["selftest"]) == 0
