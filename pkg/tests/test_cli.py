import json
from pathlib import Path

import pytest

from mistaken_lab.cli import main
from mistaken_lab.config import ConfigError, RunConfig, load_config, parse_config
from mistaken_lab.generator import load_dataset
from mistaken_lab.model import TrainConfig


class TestConfig:
    def test_empty_gives_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()
        assert cfg.train.batch_size == 32 and cfg.train.kernel_width == 7
        assert cfg.train.learning_rate == 1e-5 and cfg.train.weight_decay == 1.0
        assert cfg.train.patience == 3 and cfg.repetitions == 20
        assert load_config(None) == RunConfig()

    def test_overrides(self):
        cfg = parse_config("# comment\nrepetitions = 6\nlearning_rate = 1e-4  # faster\n"
                           "methods = multiple_image, single_image\nfraction_tolerance = 0.05\n")
        assert cfg.repetitions == 6
        assert cfg.train.learning_rate == 1e-4
        assert cfg.methods == ("multiple_image", "single_image")
        assert cfg.targets.fraction_tolerance == 0.05
        assert cfg.train == TrainConfig(learning_rate=1e-4)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="learning_rte"):
            parse_config("learning_rte = 0.1\n")

    @pytest.mark.parametrize("text", ["kernel_width = 4\n", "repetitions = 1\n", "methods = svm\n",
                                      "variant = sideways\n", "batch_size = many\n", "[train]\nseed = 1\n"])
    def test_invalid_values(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)


def _run(*argv):
    return main([str(a) for a in argv])


class TestCommands:
    def test_generate_twice_identical(self, tmp_path, monkeypatch):
        for name in ("a", "b"):
            (tmp_path / name).mkdir()
            monkeypatch.chdir(tmp_path / name)
            assert _run("generate", "--count", 10, "--seed", 1, "--out", "d",
                        "--config", _cfg(tmp_path, "fraction_tolerance = 0.3\ncharacters_tolerance = 2\n")) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert Path("d/run-manifest.json") in files and len(files) == 12
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_manifest_records_config(self, tmp_path):
        cfg = _cfg(tmp_path, "repetitions = 6\nfraction_tolerance = 0.3\ncharacters_tolerance = 2\n")
        assert _run("generate", "--count", 10, "--seed", 1, "--out", tmp_path / "d", "--config", cfg) == 0
        doc = json.loads((tmp_path / "d" / "run-manifest.json").read_text())
        assert doc["config"]["repetitions"] == 6
        assert doc["artifact_version"] == "0.1.0"
        assert doc["command"]["seed"] == 1
        assert "jobs" not in doc["command"]

    def test_eval_requires_model(self, tmp_path, capsys):
        assert _run("eval", "--data", tmp_path, "--out", tmp_path / "o") == 1
        assert "--model" in capsys.readouterr().err

    def test_unknown_subcommand_and_flag(self, capsys):
        assert _run("frobnicate") == 1
        assert "usage" in capsys.readouterr().err
        assert _run("stats", "--data", "x", "--out", "y", "--colour") == 1

    def test_missing_data_is_io_error(self, tmp_path):
        assert _run("stats", "--data", tmp_path / "none", "--out", tmp_path / "o") == 2

    def test_bad_config_is_validation_error(self, tmp_path, capsys):
        cfg = _cfg(tmp_path, "learning_rte = 1\n")
        assert _run("generate", "--count", 3, "--seed", 1, "--out", tmp_path / "d", "--config", cfg) == 1
        assert "learning_rte" in capsys.readouterr().err

    def test_infeasible_targets_exit_1(self, tmp_path):
        cfg = _cfg(tmp_path, "fraction_tolerance = 0\ncharacters_tolerance = 0\n")
        assert _run("generate", "--count", 3, "--seed", 1, "--out", tmp_path / "d", "--config", cfg) == 1

    def test_stats_outputs(self, tmp_path):
        _small_dataset(tmp_path)
        assert _run("stats", "--data", tmp_path / "d", "--out", tmp_path / "s") == 0
        names = sorted(p.name for p in (tmp_path / "s").iterdir())
        assert names == ["run-manifest.json", "stats-a.svg", "stats-b.svg", "stats-c.svg", "stats-d.svg",
                         "stats.csv"]
        first = (tmp_path / "s" / "stats-a.svg").read_bytes()
        assert _run("stats", "--data", tmp_path / "d", "--out", tmp_path / "s") == 0
        assert (tmp_path / "s" / "stats-a.svg").read_bytes() == first

    def test_train_then_eval(self, tmp_path):
        _small_dataset(tmp_path, 40)
        cfg = _cfg(tmp_path, "max_epochs = 2\nlearning_rate = 1e-3\n")
        model = tmp_path / "m" / "model.json"
        assert _run("train", "--data", tmp_path / "d", "--config", cfg, "--model", model) == 0
        assert model.exists() and model.with_suffix(".run-manifest.json").exists()
        out = tmp_path / "e"
        assert _run("eval", "--data", tmp_path / "d", "--model", model, "--task", "all",
                    "--reps", 3, "--seed", 0, "--out", out) == 0
        md = (out / "results.md").read_text()
        assert "| Method | Who+When | Who | When |" in md
        assert len((out / "results.csv").read_text().splitlines()) == 1 + 3 * 3
        assert (out / "results.svg").exists()

    def test_render_and_animate(self, tmp_path):
        _small_dataset(tmp_path)
        scene = tmp_path / "d" / "scene-000000.json"
        assert _run("render", "--scene", scene, "--out", tmp_path / "r") == 0
        assert len(list((tmp_path / "r").glob("frame-*.svg"))) == 8
        assert _run("animate", "--scene", scene, "--steps", 3, "--out", tmp_path / "a") == 0
        assert len(list((tmp_path / "a").glob("frame-*.svg"))) == 7 * 3 + 1
        assert _run("animate", "--scene", scene, "--steps", 0, "--out", tmp_path / "a") == 1

    def test_jobs_env_default(self, tmp_path, monkeypatch):
        from mistaken_lab.cli import build_parser
        monkeypatch.setenv("MISTAKEN_LAB_JOBS", "3")
        args = build_parser().parse_args(["stats", "--data", "x", "--out", "y"])
        assert args.jobs == 3


def _cfg(tmp_path, text):
    p = tmp_path / f"run-{abs(hash(text))}.cfg"
    p.write_text(text)
    return p


def _small_dataset(tmp_path, count=12):
    cfg = _cfg(tmp_path, "fraction_tolerance = 0.3\ncharacters_tolerance = 2\n")
    assert _run("generate", "--count", count, "--seed", 2, "--out", tmp_path / "d", "--config", cfg) == 0
    assert len(load_dataset(tmp_path / "d").scenes) == count
