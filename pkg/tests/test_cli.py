import os
from pathlib import Path

import numpy as np
import pytest

from evolveq.cli import (ConfigError, ExperimentConfig, build_parser,
                         list_presets, main, run, write_csv)

SCALAR_CFG = """\
[experiment]
preset = scalar-decay
slab_counts = 4 8 16
oracle_steps = 400

[load]
name = none
"""

BROKEN_CFG = """\
[experiment]
preset = broken-coupling
slab_counts = 8 16
seed = 5

[load]
name = none

[convex_set]
kind = box
metric = lumped
lower = 0.0
"""


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_cfg(tmp_path, SCALAR_CFG))
        assert cfg.preset == "scalar-decay"
        assert cfg.slab_counts == (4, 8, 16)
        assert cfg.oracle_steps == 400
        assert cfg.load_name == "none"
        assert cfg.threads == 1

    def test_unknown_key_rejected(self, tmp_path):
        bad = SCALAR_CFG + "typo_key = 1\n"
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(write_cfg(tmp_path, bad))

    def test_missing_preset_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(write_cfg(tmp_path, "[experiment]\nseed = 1\n"))

    def test_non_nested_ladder_rejected(self, tmp_path):
        bad = SCALAR_CFG.replace("4 8 16", "4 6 16")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(write_cfg(tmp_path, bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "nope.cfg")

    def test_comma_separated_counts(self, tmp_path):
        cfg_text = SCALAR_CFG.replace("4 8 16", "4, 8, 16")
        cfg = ExperimentConfig.from_file(write_cfg(tmp_path, cfg_text))
        assert cfg.slab_counts == (4, 8, 16)


class TestCsv:
    def test_format_and_line_endings(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv(path, ["a", "b"], [[1, 0.5], ["x", np.float64(2.0)]])
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == "a,b"
        assert lines[1] == "1,5.0000000000000000e-01"
        assert lines[2] == "x,2.0000000000000000e+00"


class TestMain:
    def test_list_presets(self, capsys):
        assert main(["list-presets"]) == 0
        out = capsys.readouterr().out
        for name in ("scalar-decay", "heat-1d-lipschitz", "broken-coupling"):
            assert name in out

    def test_requires_config(self, capsys):
        assert main(["solve"]) == 1

    def test_bad_config_is_usage_error(self, tmp_path, capsys):
        path = write_cfg(tmp_path, "[experiment]\npreset = nonsense\n")
        assert main(["solve", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 1

    def test_solve_pipeline(self, tmp_path, capsys):
        path = write_cfg(tmp_path, SCALAR_CFG)
        out = tmp_path / "results"
        assert main(["solve", "--config", str(path), "--out", str(out)]) == 0
        assert (out / "mr.csv").exists()
        assert (out / "traj_16.csv").exists()
        assert (out / "summary.txt").exists()
        header = (out / "mr.csv").read_text().splitlines()[0]
        assert header.startswith("n_slabs,mesh,l2V,h1H,h1Vp,supV")

    def test_converge_pipeline(self, tmp_path, capsys):
        path = write_cfg(tmp_path, SCALAR_CFG)
        out = tmp_path / "results"
        assert main(["converge", "--config", str(path), "--out", str(out)]) == 0
        body = (out / "convergence.csv").read_text().splitlines()
        assert body[0] == "n_slabs,mesh,diff_l2V,diff_supH,rate_estimate,oracle_gap"
        assert len(body) == 4

    def test_constants_pipeline(self, tmp_path, capsys):
        path = write_cfg(tmp_path, SCALAR_CFG)
        out = tmp_path / "results"
        assert main(["constants", "--config", str(path), "--out", str(out)]) == 0
        summary = (out / "summary.txt").read_text()
        assert "declared:" in summary
        assert "sampled:" in summary

    def test_broken_invariance_counterexample(self, tmp_path, capsys):
        path = write_cfg(tmp_path, BROKEN_CFG)
        out = tmp_path / "results"
        assert main(["invariance", "--config", str(path), "--out", str(out)]) == 0
        summary = (out / "summary.txt").read_text()
        assert "counterexample detected as expected" in summary
        row = (out / "invariance.csv").read_text().splitlines()[1].split(",")
        assert float(row[3]) < 0.0     # criterion margin
        assert float(row[5]) > 0.0     # worst trajectory violation

    def test_env_output_fallback(self, tmp_path, capsys, monkeypatch):
        path = write_cfg(tmp_path, SCALAR_CFG)
        out = tmp_path / "envout"
        monkeypatch.setenv("EVOLVEQ_OUT", str(out))
        assert main(["solve", "--config", str(path)]) == 0
        assert (out / "mr.csv").exists()

    def test_seed_override(self, tmp_path, capsys):
        path = write_cfg(tmp_path, BROKEN_CFG)
        out = tmp_path / "results"
        assert main(["invariance", "--config", str(path), "--out", str(out),
                     "--seed", "99"]) == 0
        assert "seed: 99" in (out / "summary.txt").read_text()


class TestParser:
    def test_commands_registered(self):
        parser = build_parser()
        args = parser.parse_args(["all", "--config", "c.cfg", "--threads", "4"])
        assert args.command == "all"
        assert args.threads == 4

    def test_preset_listing_text(self):
        text = list_presets()
        assert "counterexample" in text
