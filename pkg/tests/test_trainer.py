import numpy as np
import pytest
import torch

from hyperfuse.datamodel import Cohort, DataError, ModelConfig
from hyperfuse.hyperfusion import HyperedgeCritic, fusion_loss
from hyperfuse.synthdata import SynthSpec, generate_cohort
from hyperfuse.trainer import (FusionConvolution, TrainingDivergedError,
                               _make_optimizer, forward_subject, init_state,
                               load_checkpoint, save_checkpoint, total_loss,
                               train, train_stage1, train_stage2,
                               write_loss_log)


def snapshot(state):
    return {k: p.detach().clone() for k, p in state.named_parameters().items()}


def assert_params_equal(a, b):
    assert a.keys() == b.keys()
    for k in a:
        assert torch.equal(a[k], b[k]), k


def two_subject_cohort(tiny_spec):
    cohort = generate_cohort(tiny_spec)
    pair = (cohort.subjects[0], cohort.subjects[-1])
    return Cohort(subjects=pair, class_names=cohort.class_names, dims=cohort.dims)


class TestInitialization:
    def test_deterministic_given_seed(self, tiny_config):
        assert_params_equal(snapshot(init_state(tiny_config, 5)),
                            snapshot(init_state(tiny_config, 5)))

    def test_different_seeds_differ(self, tiny_config):
        a = snapshot(init_state(tiny_config, 5))
        b = snapshot(init_state(tiny_config, 6))
        assert any(not torch.equal(a[k], b[k]) for k in a)

    def test_zero_epochs_leave_state_at_initialization(self, tiny_config, tiny_cohort):
        cfg = tiny_config.with_updates(epochs_stage1=0, epochs_stage2=0)
        trained = train(tiny_cohort, cfg, seed=9)
        assert_params_equal(snapshot(trained), snapshot(init_state(cfg, 9)))
        assert trained.loss_history == []


class TestStage1:
    def test_reconstruction_loss_decreases(self, tiny_spec):
        cohort = two_subject_cohort(tiny_spec)
        cfg = ModelConfig(n_nodes=6, ts_dim=5, vec_dim=4, latent_dim=3,
                          prior_subset_size=3, hyperedge_size=3,
                          enc_hidden=4, dec_hidden=4, vec_enc_hidden=4,
                          vec_dec_hidden=4, latent_cls_hidden=4,
                          conn_cls_hidden=5, epochs_stage1=6, epochs_stage2=0,
                          seed=1)
        state = train_stage1(cohort, cfg)
        history = state.loss_history
        assert history[-1]["recon_graph"] < history[0]["recon_graph"]

    def test_bit_identical_loss_histories_across_runs(self, tiny_config, tiny_cohort):
        h1 = train_stage1(tiny_cohort, tiny_config, seed=4).loss_history
        h2 = train_stage1(tiny_cohort, tiny_config, seed=4).loss_history
        assert h1 == h2

    def test_empty_cohort_rejected(self, tiny_config):
        empty = Cohort(subjects=(), dims=tiny_config.dims)
        with pytest.raises(DataError, match="empty"):
            train_stage1(empty, tiny_config)

    def test_single_class_cohort_rejected(self, tiny_config, tiny_cohort):
        ones = tuple(s for s in tiny_cohort.subjects if s.label == 1)
        cohort = Cohort(subjects=ones, dims=tiny_cohort.dims)
        with pytest.raises(DataError, match="both classes"):
            train_stage1(cohort, tiny_config)

    def test_divergence_aborts_with_context(self, tiny_config, tiny_cohort):
        state = init_state(tiny_config, 0)
        with torch.no_grad():
            state.graph_branch.enc1.weight[0, 0] = float("inf")
        with pytest.raises(TrainingDivergedError, match="stage 1 epoch 0"):
            train_stage1(tiny_cohort, tiny_config, state=state)


class TestStage2:
    def run(self, tiny_config, tiny_cohort, **overrides):
        cfg = tiny_config.with_updates(**overrides)
        state = train_stage1(tiny_cohort, cfg, seed=2)
        return train_stage2(state, tiny_cohort, cfg)

    def test_alternation_order_within_each_subject_step(self, tiny_config, tiny_cohort):
        state = self.run(tiny_config, tiny_cohort)
        per_pair = {}
        for epoch, sid, update in state.update_log:
            per_pair.setdefault((epoch, sid), []).append(update)
        assert per_pair and all(v == ["critic", "convolution", "classifier"]
                                for v in per_pair.values())

    def test_epoch_rows_carry_fusion_components(self, tiny_config, tiny_cohort):
        state = self.run(tiny_config, tiny_cohort)
        row = state.loss_history[-1]
        assert row["stage"] == 2
        assert row["fusion_total"] == pytest.approx(
            row["fusion_critic"] + 0.1 * row["fusion_align"] + row["fusion_cls"])

    def test_zero_fusion_weight_removes_fusion_from_total(self, tiny_config, tiny_cohort):
        state = self.run(tiny_config, tiny_cohort, fusion_weight=0.0)
        for row in state.loss_history:
            if row["stage"] == 2:
                without = dict(row, fusion_total=None)
                assert row["total"] == pytest.approx(total_loss(without, 0.5))

    def test_zero_fusion_weight_zeroes_fusion_gradients(self, tiny_config, rng):
        # The weighted fusion term contributes exactly zero gradient to the
        # convolution weights and the hyperedge critic when the weight is 0.
        critic = HyperedgeCritic(n_edges=5, latent_dim=3,
                                 rng=np.random.default_rng(0))
        conv = FusionConvolution(3, np.random.default_rng(1))
        agg = torch.tensor(rng.normal(size=(5, 3)))
        base = torch.tensor(rng.normal(size=(5, 3)))
        parts = fusion_loss(critic, [agg], [base @ conv.theta],
                            [[1.0, 0.0]], [[0.6, 0.4]])
        weighted = 0.0 * parts.total
        grads = torch.autograd.grad(weighted,
                                    [conv.theta] + list(critic.parameters()))
        assert all(torch.all(g == 0) for g in grads)

    def test_bimodal_mode_trains_only_the_classifier(self, tiny_config, tiny_cohort):
        state = self.run(tiny_config, tiny_cohort, modalities="bimodal")
        updates = {u for _, _, u in state.update_log}
        assert updates == {"classifier"}
        row = state.loss_history[-1]
        assert row["fusion_critic"] is None
        assert row["fusion_total"] == row["fusion_cls"]


class TestTotalLoss:
    def test_unit_components_printed_weighting(self):
        comps = {k: 1.0 for k in ("adv_encoder", "critic_latent", "recon_graph",
                                  "recon_vector", "cls_latent", "cls_vector",
                                  "fusion_total")}
        assert total_loss(comps, 0.5) == pytest.approx(5.6)

    def test_zero_weight_drops_fusion(self):
        comps = {"adv_encoder": 2.0, "fusion_total": 100.0}
        assert total_loss(comps, 0.0) == pytest.approx(2.0)

    def test_log_replay_reproduces_reported_totals(self, tiny_config, tiny_cohort):
        state = train(tiny_cohort, tiny_config, seed=3)
        assert state.loss_history
        for row in state.loss_history:
            assert row["total"] == pytest.approx(
                total_loss(row, tiny_config.fusion_weight), rel=1e-12)


class TestOptimizers:
    @pytest.mark.parametrize("kind", ["adam", "sgd"])
    def test_zero_gradient_step_is_a_no_op(self, kind):
        cfg = ModelConfig(optimizer=kind)
        p = torch.tensor([1.0, -2.0], dtype=torch.float64, requires_grad=True)
        opt = _make_optimizer([p], lr=0.01, config=cfg)
        (p * 0.0).sum().backward()
        opt.step()
        assert torch.equal(p.detach(), torch.tensor([1.0, -2.0], dtype=torch.float64))


class TestCheckpoint:
    def test_round_trip_restores_everything(self, tiny_config, tiny_cohort, tmp_path):
        state = train(tiny_cohort, tiny_config, seed=8)
        save_checkpoint(state, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert_params_equal(snapshot(state), snapshot(loaded))
        assert loaded.epochs_stage1 == state.epochs_stage1
        assert loaded.epochs_stage2 == state.epochs_stage2
        np.testing.assert_array_equal(loaded.prior.centers, state.prior.centers)
        assert loaded.prior.bandwidth == state.prior.bandwidth

    def test_identical_seeds_give_byte_identical_checkpoints(
            self, tiny_config, tiny_cohort, tmp_path):
        for name in ("a", "b"):
            save_checkpoint(train(tiny_cohort, tiny_config, seed=8),
                            tmp_path / name)
        files_a = sorted((tmp_path / "a").rglob("*"))
        files_b = sorted((tmp_path / "b").rglob("*"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            if fa.is_file():
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_unsupported_format_rejected(self, tiny_config, tiny_cohort, tmp_path):
        state = train(tiny_cohort, tiny_config.with_updates(
            epochs_stage1=0, epochs_stage2=0), seed=1)
        path = save_checkpoint(state, tmp_path / "ckpt")
        manifest = (path / "manifest.json").read_text()
        (path / "manifest.json").write_text(
            manifest.replace("hyperfuse-checkpoint-v1", "mystery-v9"))
        with pytest.raises(DataError, match="format"):
            load_checkpoint(path)


class TestLossLog:
    def test_csv_shape_and_blank_cells(self, tiny_config, tiny_cohort, tmp_path):
        state = train(tiny_cohort, tiny_config, seed=2)
        path = write_loss_log(state, tmp_path / "losses.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("stage,epoch,adv_encoder")
        assert len(lines) == 1 + len(state.loss_history)
        # Stage-1 rows leave fusion columns empty rather than fabricating 0s.
        first = lines[1].split(",")
        header = lines[0].split(",")
        assert first[header.index("fusion_critic")] == ""


class TestForwardSubject:
    def test_probability_output_and_determinism(self, tiny_config, tiny_cohort):
        state = train(tiny_cohort, tiny_config, seed=6)
        out1 = forward_subject(state, tiny_cohort.subjects[0])
        out2 = forward_subject(state, tiny_cohort.subjects[0])
        assert out1.probs.sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_array_equal(out1.probs, out2.probs)
        assert out1.connectivity.shape == (tiny_config.n_nodes, tiny_config.n_nodes)
