"""Tests for config parsing, experiment dispatch, and stable emission."""

import json

import pytest

from dgblab.cli import main, parse_config, run
from dgblab.errors import ConfigError

BENJAMIN_CFG = """
# canonical parameter set
experiment = lemmas
params.alpha = 1.0
params.beta = 1.0
params.m = 1.0
params.r = 0.5
params.mu = 0.0
params.delta = 1.0
grid.n = 64
"""

STABILIZE_CFG = """
experiment = stabilize
grid.n = 16
time.dt = 0.005
time.t_final = 40.0
record.every = 20
init.kind = cosine
init.mode = 1
init.amplitude = 0.01
fit.t0 = 10.0
fit.t1 = 40.0
seed = 3
"""


class TestParseConfig:
    def test_benjamin_accepted(self):
        cfg = parse_config(BENJAMIN_CFG)
        assert cfg.experiment == "lemmas"
        assert cfg.params.m == 1.0
        assert cfg["grid.n"] == 64

    def test_small_dispersion_rejected(self):
        with pytest.raises(ConfigError, match="m must exceed 1/2"):
            parse_config(BENJAMIN_CFG.replace("params.m = 1.0", "params.m = 0.4"))

    def test_delta_window_rejected(self):
        text = BENJAMIN_CFG.replace("params.m = 1.0", "params.m = 0.6").replace(
            "params.delta = 1.0", "params.delta = 0.5"
        ).replace("params.r = 0.5", "params.r = 0.3")
        with pytest.raises(ConfigError, match="delta must satisfy"):
            parse_config(text)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(BENJAMIN_CFG + "\nwibble.factor = 3\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config("experiment = lemmas\nnot a key value line\n")

    def test_experiment_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="requested"):
            parse_config(BENJAMIN_CFG, experiment="simulate")

    def test_overrides_win(self):
        cfg = parse_config(BENJAMIN_CFG, overrides=["grid.n=32", "seed=9"])
        assert cfg["grid.n"] == 32
        assert cfg["seed"] == 9

    def test_defaults_applied(self):
        cfg = parse_config("experiment = simulate\n")
        assert cfg["grid.n"] == 128
        assert cfg["time.dt"] == 1e-3
        assert cfg["profile.kind"] == "global"


class TestRun:
    def test_lemmas_artifacts(self, tmp_path):
        cfg = parse_config(BENJAMIN_CFG)
        result = run(cfg, out_dir=tmp_path / "lem")
        summary = result["summary"]
        assert summary["max_multiplicity"] == 3
        assert summary["resonance_min_ratio"] > 0
        for name in (
            "manifest.json",
            "lemma_gap.csv",
            "lemma_multiplicity.csv",
            "lemma_resonance.csv",
            "lemma_modulation.csv",
        ):
            assert (tmp_path / "lem" / name).exists()
        manifest = json.loads((tmp_path / "lem" / "manifest.json").read_text())
        assert manifest["experiment"] == "lemmas"
        assert manifest["config"]["params.alpha"] == 1.0

    def test_stabilize_rate_matches_abscissa(self, tmp_path):
        cfg = parse_config(STABILIZE_CFG)
        summary = run(cfg, out_dir=tmp_path / "stab")["summary"]
        assert abs(summary["rate_over_abscissa"] - 1.0) < 0.1
        assert summary["mean_drift"] <= 1e-10
        assert (tmp_path / "stab" / "trajectory.csv").exists()
        assert (tmp_path / "stab" / "profile.json").exists()

    def test_determinism_yields_identical_artifacts(self, tmp_path):
        for sub in ("a", "b"):
            run(parse_config(STABILIZE_CFG), out_dir=tmp_path / sub)
        csv_a = (tmp_path / "a" / "trajectory.csv").read_bytes()
        csv_b = (tmp_path / "b" / "trajectory.csv").read_bytes()
        assert csv_a == csv_b
        sum_a = json.loads((tmp_path / "a" / "manifest.json").read_text())["summary"]
        sum_b = json.loads((tmp_path / "b" / "manifest.json").read_text())["summary"]
        assert sum_a == sum_b

    def test_observability_experiment(self, tmp_path):
        cfg = parse_config(
            "experiment = observability\ngrid.n = 8\ntime.t_final = 1.0\n"
        )
        summary = run(cfg, out_dir=tmp_path / "obs")["summary"]
        assert summary["c_obs"] > 2.0
        assert summary["gamma_gramian"] <= summary["gamma_abscissa"] + 1e-10

    def test_control_nonlinear_experiment(self, tmp_path):
        cfg = parse_config(
            "experiment = control-nonlinear\ngrid.n = 32\ntime.t_final = 1.0\ncontrol.dt = 0.01\n"
        )
        summary = run(cfg, out_dir=tmp_path / "cnl")["summary"]
        assert summary["terminal_error"] < 1e-6
        assert (tmp_path / "cnl" / "control.csv").exists()


class TestMainEntry:
    def test_exit_zero_on_success(self, tmp_path, capsys):
        code = main(
            [
                "lemmas",
                "--out",
                str(tmp_path / "ok"),
                "--override",
                "grid.n=32",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "max_multiplicity" in out

    def test_exit_two_on_validation_failure(self, tmp_path, capsys):
        code = main(
            [
                "lemmas",
                "--out",
                str(tmp_path / "bad"),
                "--override",
                "params.m=0.2",
            ]
        )
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_exit_three_on_numerical_failure(self, tmp_path, capsys):
        # a 16-mode band cannot represent the half-circle bump nonnegatively
        code = main(
            [
                "observability",
                "--out",
                str(tmp_path / "num"),
                "--override",
                "profile.kind=bump",
                "--override",
                "profile.modes=16",
                "--override",
                "grid.n=8",
            ]
        )
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_config_file_and_seed_flag(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text(STABILIZE_CFG)
        code = main(
            ["stabilize", "--config", str(path), "--out", str(tmp_path / "run"), "--seed", "7"]
        )
        assert code == 0
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 7

    def test_sweep_runs_all_configs(self, tmp_path):
        cfg_a = tmp_path / "lemmas_a.cfg"
        cfg_a.write_text(BENJAMIN_CFG)
        cfg_b = tmp_path / "lemmas_b.cfg"
        cfg_b.write_text(BENJAMIN_CFG.replace("grid.n = 64", "grid.n = 32"))
        code = main(
            [
                "sweep",
                "--configs",
                str(cfg_a),
                str(cfg_b),
                "--jobs",
                "2",
                "--out",
                str(tmp_path / "sweep"),
            ]
        )
        assert code == 0
        for stem in ("lemmas_a", "lemmas_b"):
            assert (tmp_path / "sweep" / stem / "manifest.json").exists()
