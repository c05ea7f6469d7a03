import json
from pathlib import Path

import numpy as np
import pytest
import torch

from hyperfuse.cli import main
from hyperfuse.trainer import init_state, load_checkpoint
from hyperfuse.datamodel import ModelConfig

TINY_SYNTH = ["--set", "n_per_class=5", "--set", "n_nodes=6", "--set", "ts_dim=5",
              "--set", "vec_dim=4", "--set", "communities=2",
              "--set", "disease_rois=0,1", "--set", "separation=1.5"]
TINY_MODEL = ["--set", "n_nodes=6", "--set", "ts_dim=5", "--set", "vec_dim=4",
              "--set", "latent_dim=3", "--set", "prior_subset_size=2",
              "--set", "hyperedge_size=3", "--set", "enc_hidden=4",
              "--set", "dec_hidden=4", "--set", "vec_enc_hidden=4",
              "--set", "vec_dec_hidden=4", "--set", "latent_cls_hidden=4",
              "--set", "conn_cls_hidden=5", "--set", "epochs_stage1=2",
              "--set", "epochs_stage2=2"]


def synth(tmp_path, name="cohort", seed=3, extra=()):
    out = tmp_path / name
    code = main(["synth", "--out", str(out), "--seed", str(seed)]
                + TINY_SYNTH + list(extra))
    assert code == 0
    return out / "manifest.csv"


def tree_bytes(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestSynth:
    def test_writes_cohort_and_prints_manifest(self, tmp_path, capsys):
        manifest = synth(tmp_path)
        assert manifest.exists()
        assert str(manifest) in capsys.readouterr().out
        assert (manifest.parent / "resolved_config.txt").exists()

    def test_replay_from_resolved_config_is_byte_identical(self, tmp_path):
        manifest = synth(tmp_path, "a")
        resolved = manifest.parent / "resolved_config.txt"
        code = main(["synth", "--config", str(resolved), "--out",
                     str(tmp_path / "b")])
        assert code == 0
        a = tree_bytes(tmp_path / "a")
        b = tree_bytes(tmp_path / "b")
        assert a.keys() == b.keys()
        for key in a:
            if key != "resolved_config.txt":
                assert a[key] == b[key], key

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HYPERFUSE_SEED", "3")
        out_env = tmp_path / "env"
        assert main(["synth", "--out", str(out_env)] + TINY_SYNTH) == 0
        explicit = synth(tmp_path, "explicit", seed=3)
        env_files = tree_bytes(out_env)
        exp_files = tree_bytes(explicit.parent)
        assert env_files == exp_files

    def test_unknown_key_rejected_with_diagnostic(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "x"),
                     "--set", "mystery_knob=1"])
        assert code == 1
        assert "mystery_knob" in capsys.readouterr().err


class TestTrain:
    def test_zero_epochs_checkpoint_equals_initialization(self, tmp_path):
        manifest = synth(tmp_path)
        out = tmp_path / "run"
        code = main(["train", "--manifest", str(manifest), "--out", str(out),
                     "--seed", "11", "--set", "epochs_stage1=0",
                     "--set", "epochs_stage2=0"] + TINY_MODEL)
        assert code == 0
        loaded = load_checkpoint(out / "checkpoint")
        fresh = init_state(loaded.config, 11)
        for (name, p), (_, q) in zip(sorted(loaded.named_parameters().items()),
                                     sorted(fresh.named_parameters().items())):
            assert torch.equal(p, q), name

    def test_training_emits_checkpoint_and_loss_log(self, tmp_path):
        manifest = synth(tmp_path)
        out = tmp_path / "run"
        code = main(["train", "--manifest", str(manifest), "--out", str(out),
                     "--seed", "4"] + TINY_MODEL)
        assert code == 0
        assert (out / "checkpoint" / "manifest.json").exists()
        lines = (out / "loss_log.csv").read_text().splitlines()
        assert len(lines) == 1 + 4  # header + 2 stage-1 + 2 stage-2 epochs

    def test_dims_mismatch_fails_cleanly(self, tmp_path, capsys):
        manifest = synth(tmp_path)
        code = main(["train", "--manifest", str(manifest),
                     "--out", str(tmp_path / "run")])
        assert code == 1
        assert "dims" in capsys.readouterr().err

    def test_missing_manifest_single_line_diagnostic(self, tmp_path, capsys):
        code = main(["train", "--manifest", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "run")] + TINY_MODEL)
        assert code == 1
        err = capsys.readouterr().err.strip()
        assert err.startswith("error:") and len(err.splitlines()) == 1


class TestEvalAndReport:
    def run_eval(self, tmp_path, seed=5):
        manifest = synth(tmp_path)
        out = tmp_path / "eval"
        code = main(["eval", "--manifest", str(manifest), "--out", str(out),
                     "--folds", "2", "--seed", str(seed)] + TINY_MODEL)
        assert code == 0
        return out

    def test_eval_writes_metrics_and_replays_byte_identically(self, tmp_path):
        out = self.run_eval(tmp_path)
        first = (out / "metrics.json").read_bytes()
        manifest = tmp_path / "cohort" / "manifest.csv"
        out2 = tmp_path / "eval2"
        code = main(["eval", "--manifest", str(manifest), "--out", str(out2),
                     "--folds", "2", "--config",
                     str(out / "resolved_config.txt")])
        assert code == 0
        assert (out2 / "metrics.json").read_bytes() == first

    def test_report_reproduces_metrics_exactly(self, tmp_path, capsys):
        out = self.run_eval(tmp_path)
        capsys.readouterr()
        assert main(["report", "--run", str(out)]) == 0
        table = capsys.readouterr().out
        with open(out / "metrics.json") as fh:
            metrics = json.load(fh)
        rows = {line.split()[0]: line.split()[1:]
                for line in table.strip().splitlines()[1:]}
        for fold in metrics["folds"]:
            cells = rows[f"fold{fold['fold']}"]
            for i, name in enumerate(("acc", "sen", "spec", "auc")):
                expected = "n/a" if fold[name] is None else "%.9g" % fold[name]
                assert cells[i] == expected
        for i, name in enumerate(("acc", "sen", "spec", "auc")):
            assert rows["mean"][i] == ("n/a" if metrics["mean"][name] is None
                                       else "%.9g" % metrics["mean"][name])
        assert (out / "report.txt").exists()
        assert (out / "report.csv").exists()

    def test_report_without_metrics_fails(self, tmp_path, capsys):
        assert main(["report", "--run", str(tmp_path)]) == 1
        assert "metrics.json" in capsys.readouterr().err


class TestConfigFile:
    def test_file_values_overridden_by_flags(self, tmp_path):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("latent_dim=3\nseed=1\n# comment\n\nn_nodes=6\n")
        from hyperfuse.cli import build_model_config
        import argparse
        args = argparse.Namespace(config=str(cfg), set=["seed=2"], seed=None)
        model = build_model_config(args)
        assert model.latent_dim == 3 and model.seed == 2 and model.n_nodes == 6

    def test_malformed_line_rejected(self, tmp_path):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("latent_dim\n")
        from hyperfuse.cli import read_config_file
        from hyperfuse.datamodel import DataError
        with pytest.raises(DataError, match="key=value"):
            read_config_file(cfg)

    def test_tuple_and_bool_round_trip(self, tmp_path):
        from hyperfuse.cli import build_model_config, write_resolved_config
        import argparse
        args = argparse.Namespace(config=None,
                                  set=["roi_whitelist=3,5,7",
                                       "freeze_hypergraphs=true"],
                                  seed=None)
        model = build_model_config(args)
        assert model.roi_whitelist == (3, 5, 7)
        assert model.freeze_hypergraphs is True
        path = write_resolved_config(model, tmp_path)
        args2 = argparse.Namespace(config=str(path), set=None, seed=None)
        model2 = build_model_config(args2)
        assert model2 == model
