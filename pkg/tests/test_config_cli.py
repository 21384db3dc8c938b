"""Run configuration and the command-line surface."""

import numpy as np
import pytest

from dartsrenet.checkpoint import load_tensors
from dartsrenet.cli import main
from dartsrenet.config import (ConfigError, RunConfig, freeze_config,
                               parse_config_file, resolve_config)


class TestConfig:
    def test_defaults_valid(self):
        config = resolve_config()
        assert config.hidden_dim == 256 and config.window == 2

    def test_file_then_flag_precedence(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("hidden_dim = 32\nseed = 4  # comment\n\n# full-line comment\n")
        config = resolve_config(parse_config_file(path), {"seed": "9"})
        assert config.hidden_dim == 32
        assert config.seed == 9

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="hidden_dims"):
            resolve_config({"hidden_dims": "64"})

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config({"variant": "fancy"})
        with pytest.raises(ConfigError):
            resolve_config({"batch_size": "0"})
        with pytest.raises(ConfigError):
            resolve_config({"augment": "maybe"})
        with pytest.raises(ConfigError):
            resolve_config({"search_fraction": "1.5"})

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("hidden_dim 32\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_file(path)

    def test_bool_coercion(self):
        assert resolve_config({"augment": "off"}).augment is False
        assert resolve_config({"finite_checks": "on"}).finite_checks is True

    def test_freeze_echoes_every_field_and_round_trips(self, tmp_path):
        config = resolve_config({"hidden_dim": "12", "augment": "off"})
        path = freeze_config(config, tmp_path / "out")
        frozen = parse_config_file(path)
        assert len(frozen) == len(RunConfig.__dataclass_fields__)
        assert resolve_config(frozen) == config

    def test_env_var_data_root(self, monkeypatch):
        monkeypatch.setenv("DARTSRENET_DATA", "/data/corpora")
        assert resolve_config().data_root() == "/data/corpora"
        assert resolve_config({"data": "/other"}).data_root() == "/other"

    def test_network_config_view(self):
        config = resolve_config({"stem_channels": "8,16,32", "cell": "gru"})
        net = config.network_config()
        assert [s.out_channels for s in net.stem] == [8, 16, 32]
        assert net.cell_kind() == "gru"
        with pytest.raises(ConfigError):
            resolve_config({"stem_channels": "8,16"}).network_config()


@pytest.fixture
def tiny_flags(tmp_path):
    """CLI flags for a fast synthetic run."""
    return ["--dataset", "synthetic", "--synthetic-train", "160",
            "--synthetic-eval", "48", "--hidden-dim", "4", "--stem-channels", "4,4,4",
            "--batch-size", "8", "--epochs", "1", "--patience", "0",
            "--num-vertices", "3", "--cutout-size", "2", "--crop-pad", "1",
            "--retrain-val-size", "32", "--seed", "3"]


class TestCli:
    def test_selftest_exits_zero(self, capsys):
        assert main(["selftest", "--quiet"]) == 0

    def test_export_dot(self, tmp_path, capsys):
        from dartsrenet.cells import preset_genotypes
        src = tmp_path / "dws.genotype"
        preset_genotypes()["dws"].save(src)
        assert main(["export-dot", str(src), "--dot-out", str(tmp_path / "cell.dot")]) == 0
        dot = (tmp_path / "cell.dot").read_text()
        assert dot.count("[label=") == 17 and "digraph" in dot

    def test_unknown_flag_value_fails_before_compute(self, tmp_path):
        assert main(["train", "--variant", "bogus", "--out", str(tmp_path)]) == 2

    def test_train_eval_cycle(self, tmp_path, tiny_flags, capsys):
        out = tmp_path / "run"
        rc = main(["train", *tiny_flags, "--cell", "gru", "--out", str(out)])
        assert rc == 0
        for name in ("config.resolved", "model.drnt", "norm_stats.txt",
                     "retrain_report.csv", "metrics.txt"):
            assert (out / name).exists(), name
        rc = main(["eval", *tiny_flags, "--cell", "gru",
                   "--checkpoint", str(out / "model.drnt"),
                   "--out", str(tmp_path / "eval")])
        assert rc == 0
        text = (tmp_path / "eval" / "eval.txt").read_text()
        assert "accuracy" in text

    def test_search_writes_genotype_and_report(self, tmp_path, tiny_flags, capsys):
        out = tmp_path / "searchrun"
        rc = main(["search", *tiny_flags, "--epochs", "1", "--out", str(out)])
        assert rc == 0
        from dartsrenet.cells import Genotype
        genotype = Genotype.load(out / "genotype.txt")
        assert genotype.num_vertices == 3
        assert (out / "search_report.csv").exists()

    def test_frozen_config_reproduces_run_bitwise(self, tmp_path, tiny_flags, capsys):
        out1 = tmp_path / "a"
        assert main(["train", *tiny_flags, "--cell", "preset:dws",
                     "--out", str(out1)]) == 0
        out2 = tmp_path / "b"
        assert main(["train", "--config", str(out1 / "config.resolved"),
                     "--out", str(out2)]) == 0
        a = load_tensors(out1 / "model.drnt")
        b = load_tensors(out2 / "model.drnt")
        assert set(a) == set(b)
        for name in a:
            assert a[name].tobytes() == b[name].tobytes(), name

    def test_train_rejects_mixed_cell(self, tmp_path):
        assert main(["train", "--cell", "mixed", "--dataset", "synthetic",
                     "--out", str(tmp_path)]) == 2
