import math
from pathlib import Path

import numpy as np
import pytest

from qgrl.cli import main
from qgrl.config import (
    RunConfig,
    build_run_config,
    env_hash,
    parse_config,
    parse_config_text,
    run_hash,
    serialize_run,
)
from qgrl.env import ConfigError

TWO_PI = 2 * math.pi


class TestParseConfig:
    def test_empty_gives_benchmark_defaults(self):
        cfg = parse_config("")
        assert cfg.env.omega_max == pytest.approx(TWO_PI)
        assert cfg.env.delta_max == pytest.approx(TWO_PI)
        assert cfg.env.j_max == pytest.approx(TWO_PI)
        assert cfg.env.total_time == 2.0
        assert cfg.env.n_max == 100
        assert cfg.env.reward_mode == "per_step"
        assert cfg.ppo.batch_size == 64
        assert cfg.ppo.learning_rate == 1e-4
        assert cfg.ppo.max_episodes == 100_000

    def test_dropout_rate_key(self):
        cfg = parse_config("regularizer = dropout\ndropout_rate = 0.1\n")
        assert cfg.reg.kind == "dropout"
        assert cfg.reg.rate == 0.1
        # regularized runs default to the larger batch and budget
        assert cfg.ppo.batch_size == 128
        assert cfg.ppo.max_episodes == 200_000

    def test_geometric_defaults(self):
        cfg = parse_config("hamiltonian_kind = geometric\n")
        assert cfg.env.total_time == 17.05
        assert cfg.env.reward_mode == "terminal"
        assert cfg.ppo.batch_size == 128
        assert cfg.ppo.max_episodes == 100_000

    def test_explicit_switch_times(self):
        cfg = parse_config("hamiltonian_kind = geometric(5.0, 6.0)\n"
                           "total_time = 17.05\n")
        assert cfg.env.switch_times == (5.0, 6.0)

    def test_invariant_violation_names_key(self):
        with pytest.raises(ConfigError, match="n_max"):
            parse_config("n_max = 0\n")

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="line 2.*frobnicator"):
            parse_config("seed = 1\nfrobnicator = 3\n")

    def test_malformed_value_names_line(self):
        with pytest.raises(ConfigError, match="line 1.*n_max"):
            parse_config("n_max = banana\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("seed = 1\nseed = 2\n")

    def test_comments_and_blank_lines(self):
        values = parse_config_text("# a comment\n\nseed = 7  # trailing\n")
        assert values == {"seed": 7}

    def test_flag_overrides_file(self):
        cfg = parse_config("seed = 1\nbatch_size = 32\n",
                           overrides={"seed": 9, "out_dir": "elsewhere"})
        assert cfg.seed == 9
        assert cfg.ppo.batch_size == 32
        assert cfg.out_dir == "elsewhere"

    def test_explicit_beats_conditional_default(self):
        cfg = parse_config("regularizer = dropout\nbatch_size = 16\n")
        assert cfg.ppo.batch_size == 16


class TestHashes:
    def test_env_hash_stable_and_sensitive(self):
        a = parse_config("")
        b = parse_config("")
        assert env_hash(a.env) == env_hash(b.env)
        c = parse_config("n_max = 50\n")
        assert env_hash(a.env) != env_hash(c.env)

    def test_run_hash_covers_agent_settings(self):
        a = parse_config("seed = 1\n")
        b = parse_config("seed = 1\nlearning_rate = 3e-4\n")
        assert run_hash(a) != run_hash(b)
        assert env_hash(a.env) == env_hash(b.env)

    def test_serialize_run_is_deterministic(self):
        a = parse_config("seed = 4\n")
        assert serialize_run(a) == serialize_run(parse_config("seed = 4\n"))


class TestCli:
    def test_analytic_report(self, tmp_path, capsys):
        rc = main(["analytic", "--out", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "analytic.txt").read_text()
        assert "entangler coefficients" in text
        assert "0.70" in text  # the sqrt(1/2) pair
        assert "beta-composite fidelity" in text
        assert "0.999687502" in text

    def test_scan_entangler(self, tmp_path, capsys):
        rc = main(["scan-entangler", "--out", str(tmp_path),
                   "--lo", "0.2", "--hi", "0.45"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "0.3187" in out
        assert (tmp_path / "entangler_scan.csv").exists()
        assert (tmp_path / "entangler_scan.png").exists()

    def test_scan_entangler_not_found(self, tmp_path, capsys):
        rc = main(["scan-entangler", "--out", str(tmp_path),
                   "--lo", "0.0", "--hi", "0.05"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_train_requires_seed(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path)])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_unknown_config_key_is_reported(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense_key = 1\n")
        rc = main(["analytic", "--config", str(bad), "--out", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "nonsense_key" in err

    def test_full_pipeline_and_determinism(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "n_max = 10\n"
            "total_time = 0.2\n"
            "batch_size = 2\n"
            "max_episodes = 4\n"
            "update_epochs = 1\n"
            "minibatch_size = 8\n"
            "stop_on_threshold = false\n"
            "heatmap_steps = 5\n"
            "heatmap_range = 0.05\n"
        )
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        for out in (out1, out2):
            rc = main(["train", "--config", str(cfg), "--seed", "7",
                       "--regularizer", "dropout", "--out", str(out)])
            assert rc == 0
        # identical checkpoints for identical seeds and configs
        ck1 = (out1 / "checkpoint.qgrl").read_bytes()
        ck2 = (out2 / "checkpoint.qgrl").read_bytes()
        assert ck1 == ck2
        assert (out1 / "training_log.csv").read_text() == \
            (out2 / "training_log.csv").read_text()

        rc = main(["pulses", "--config", str(cfg), "--ckpt",
                   str(out1 / "checkpoint.qgrl"), "--out", str(out1)])
        assert rc == 0
        assert (out1 / "pulses.csv").exists()
        assert (out1 / "pulses.png").exists()

        rc = main(["heatmap", "--config", str(cfg), "--pulses",
                   str(out1 / "pulses.csv"), "--out", str(out1)])
        assert rc == 0
        heat1 = (out1 / "heatmap.csv").read_text()
        rc = main(["heatmap", "--config", str(cfg), "--pulses",
                   str(out1 / "pulses.csv"), "--out", str(out2)])
        assert rc == 0
        assert heat1 == (out2 / "heatmap.csv").read_text()

        rc = main(["centralize", "--config", str(cfg), "--pulses",
                   str(out1 / "pulses.csv"), "--out", str(out1)])
        assert rc == 0
        assert (out1 / "pulses_centralized.csv").exists()
        assert (out1 / "heatmap_centralized.csv").exists()

        rc = main(["report", "--config", str(cfg), "--out", str(out1),
                   str(out1 / "heatmap.csv"), str(out2 / "heatmap.csv")])
        assert rc == 0
        report = (out1 / "report.txt").read_text()
        assert "robust_area" in report
        assert (out1 / "report.png").exists()

    def test_report_refuses_mismatched_environments(self, tmp_path, capsys):
        cfg_a = tmp_path / "a.cfg"
        cfg_a.write_text("n_max = 10\ntotal_time = 0.2\n")
        cfg_b = tmp_path / "b.cfg"
        cfg_b.write_text("n_max = 20\ntotal_time = 0.2\n")
        from qgrl.robustness import PulseSchedule, pulses_to_csv, sweep_heatmap, heatmap_to_csv
        from qgrl.config import parse_config as pc
        for name, cfg_file in (("a", cfg_a), ("b", cfg_b)):
            rc = pc(cfg_file.read_text())
            schedule = PulseSchedule(dt=rc.env.dt,
                                     controls=np.zeros((rc.env.n_max, 5)))
            hm = sweep_heatmap(schedule, 0.05, 3, rc.env)
            (tmp_path / f"heat_{name}.csv").write_text(
                heatmap_to_csv(hm, {"config_hash": env_hash(rc.env)}))
        rc = main(["report", "--out", str(tmp_path),
                   str(tmp_path / "heat_a.csv"), str(tmp_path / "heat_b.csv")])
        assert rc == 1
        assert "mismatched" in capsys.readouterr().err

    def test_pulses_config_mismatch_rejected(self, tmp_path, capsys):
        from qgrl.robustness import PulseSchedule, pulses_to_csv
        schedule = PulseSchedule(dt=0.02, controls=np.zeros((5, 5)))
        (tmp_path / "pulses.csv").write_text(
            pulses_to_csv(schedule, {"config_hash": "feedface"}))
        rc = main(["heatmap", "--pulses", str(tmp_path / "pulses.csv"),
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "environment" in capsys.readouterr().err
