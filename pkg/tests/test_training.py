import os

import numpy as np
import pytest

from resograph.data import SplitSpec, SynthConfig, save_dataset, split_dataset, \
    standardize, synth_generate
from resograph.exceptions import ConfigError, NumericError
from resograph.network import ClassProbabilities, forward, init_params
from resograph.tensor import Tensor
from resograph.training import (CHECKPOINT_DIR_ENV, LOG_HEADER, RunConfig,
                                apply_overrides, config_to_text, cross_entropy,
                                evaluate_checkpoint, fit_model, load_checkpoint,
                                load_config, parse_config_text,
                                save_checkpoint, train)

TINY = dict(kernel_sizes=(2, 4), embed_dim=6, heads=2, head_dim=4,
            attn_dim=5, layers=1)


def tiny_dataset(seed=0, subjects=4, samples=3):
    cfg = SynthConfig(timesteps=32, channels=2, classes=2,
                      subjects_per_class=subjects, samples_per_subject=samples,
                      noise_sigma=0.3)
    return synth_generate(cfg, seed=seed)


class TestConfig:
    def test_round_trip_through_text(self):
        config = RunConfig(dataset="d", kernel_sizes=(3, 5), learning_rate=0.01,
                           disable_da=True)
        again = parse_config_text(config_to_text(config))
        assert again == config

    def test_overrides_convert_types(self):
        config = apply_overrides(RunConfig(), {
            "epochs": "7", "learning_rate": "0.5", "kernel_sizes": "2,8",
            "single_resolution": "yes",
        })
        assert config.epochs == 7
        assert config.learning_rate == 0.5
        assert config.kernel_sizes == (2, 8)
        assert config.single_resolution is True

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            apply_overrides(RunConfig(), {"momentum": "0.9"})

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            apply_overrides(RunConfig(), {"epochs": "many"})

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="boolean"):
            apply_overrides(RunConfig(), {"disable_da": "maybe"})

    def test_comments_and_blanks_skipped(self):
        config = parse_config_text("# a comment\n\nepochs=3\n")
        assert config.epochs == 3

    def test_not_key_value(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("epochs 3\n")

    def test_load_config(self, tmp_path):
        (tmp_path / "run.cfg").write_text("epochs=2\nbatch_size=4\n")
        config = load_config(tmp_path / "run.cfg")
        assert (config.epochs, config.batch_size) == (2, 4)

    def test_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(epochs=0)
        with pytest.raises(ConfigError):
            RunConfig(learning_rate=-1.0)

    def test_single_resolution_keeps_first_kernel(self):
        config = RunConfig(kernel_sizes=(2, 4, 8), single_resolution=True)
        assert config.effective_kernels() == (2,)
        assert config.architecture().kernel_sizes == (2,)

    def test_checkpoint_dir_env_override(self, monkeypatch):
        config = RunConfig(checkpoint_dir="from_config")
        monkeypatch.delenv(CHECKPOINT_DIR_ENV, raising=False)
        assert config.resolved_checkpoint_dir() == "from_config"
        monkeypatch.setenv(CHECKPOINT_DIR_ENV, "from_env")
        assert config.resolved_checkpoint_dir() == "from_env"


class TestCrossEntropy:
    def test_uniform_probs_give_log_k(self):
        logits = Tensor(np.zeros((5, 4)))
        probs = ClassProbabilities(probabilities=logits, logits=logits)
        loss = cross_entropy(probs, np.array([0, 1, 2, 3, 0]))
        assert abs(loss.data.item() - np.log(4.0)) < 1e-12

    def test_confident_correct_is_near_zero(self):
        logits = np.full((2, 3), -20.0)
        logits[0, 1] = 20.0
        logits[1, 2] = 20.0
        probs = ClassProbabilities(probabilities=Tensor(logits), logits=Tensor(logits))
        assert cross_entropy(probs, np.array([1, 2])).data.item() < 1e-10

    def test_single_sample_path_matches_batch(self):
        logits = np.array([0.3, -1.2, 2.0])
        single = ClassProbabilities(Tensor(logits), Tensor(logits))
        batch = ClassProbabilities(Tensor(logits[None]), Tensor(logits[None]))
        a = cross_entropy(single, np.array([2])).data.item()
        b = cross_entropy(batch, np.array([2])).data.item()
        assert abs(a - b) < 1e-14

    def test_label_out_of_range(self):
        logits = Tensor(np.zeros((2, 3)))
        probs = ClassProbabilities(logits, logits)
        with pytest.raises(ValueError, match="labels must lie"):
            cross_entropy(probs, np.array([0, 3]))


class TestFit:
    def test_loss_decreases(self):
        ds = tiny_dataset()
        tr, va, _te, _stats = standardize(*split_dataset(
            ds, SplitSpec(mode="sample_based", seed=0)))
        config = RunConfig(epochs=5, batch_size=8, learning_rate=3e-3,
                           seed=1, **TINY)
        result = fit_model(tr, va, config)
        first = float(result.history[1].split("\t")[1])
        last = float(result.history[-1].split("\t")[1])
        assert last < first

    def test_history_layout(self):
        ds = tiny_dataset()
        tr, va, _te, _stats = standardize(*split_dataset(
            ds, SplitSpec(mode="sample_based", seed=0)))
        config = RunConfig(epochs=2, batch_size=8, **TINY)
        result = fit_model(tr, va, config)
        assert result.history[0] == LOG_HEADER
        assert len(result.history) == 3
        assert all(len(line.split("\t")) == 7 for line in result.history[1:])

    def test_no_validation_logs_nan_and_keeps_last(self):
        ds = tiny_dataset()
        config = RunConfig(epochs=3, batch_size=8, **TINY)
        result = fit_model(ds, None, config)
        assert result.best_epoch == 3
        assert result.history[1].split("\t")[2] == "nan"

    def test_best_epoch_snapshot_restored(self):
        ds = tiny_dataset()
        tr, va, _te, _stats = standardize(*split_dataset(
            ds, SplitSpec(mode="sample_based", seed=0)))
        config = RunConfig(epochs=4, batch_size=8, learning_rate=3e-3,
                           seed=0, **TINY)
        result = fit_model(tr, va, config)
        # rerun deterministically but stop at the best epoch; parameters match
        again = fit_model(tr, va, RunConfig(epochs=result.best_epoch, batch_size=8,
                                            learning_rate=3e-3, seed=0, **TINY))
        for a, b in zip(result.params.parameters(), again.params.parameters()):
            assert np.array_equal(a.data, b.data)

    def test_deterministic_given_seed(self):
        ds = tiny_dataset()
        config = RunConfig(epochs=2, batch_size=8, seed=7, **TINY)
        a = fit_model(ds, None, config)
        b = fit_model(ds, None, config)
        assert a.history == b.history
        for pa, pb in zip(a.params.parameters(), b.params.parameters()):
            assert np.array_equal(pa.data, pb.data)

    @pytest.mark.filterwarnings("ignore:overflow encountered",
                                "ignore:invalid value encountered")
    def test_divergence_raises_with_location(self):
        ds = tiny_dataset(subjects=2, samples=2)
        config = RunConfig(epochs=3, batch_size=4, learning_rate=1e100, **TINY)
        with pytest.raises(NumericError, match=r"diverged at epoch \d+, batch \d+"):
            fit_model(ds, None, config)


class TestCheckpoints:
    def test_save_load_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        config = RunConfig(epochs=1, **TINY)
        params = init_params(config.architecture(), 2, 2, 32, rng)
        save_checkpoint(tmp_path / "ck", params, config, epoch=4, rng=rng)
        ck = load_checkpoint(tmp_path / "ck")
        assert ck.epoch == 4
        assert ck.config == config
        assert ck.rng_state == rng.bit_generator.state
        for (na, a), (nb, b) in zip(params.named_parameters(),
                                    ck.params.named_parameters()):
            assert na == nb
            assert np.array_equal(a.data, b.data)

    def test_missing_meta(self, tmp_path):
        with pytest.raises(ConfigError, match="no checkpoint meta"):
            load_checkpoint(tmp_path / "missing")

    def test_manifest_mismatch(self, tmp_path):
        rng = np.random.default_rng(3)
        config = RunConfig(epochs=1, **TINY)
        params = init_params(config.architecture(), 2, 2, 32, rng)
        save_checkpoint(tmp_path / "ck", params, config, epoch=1, rng=rng)
        meta = (tmp_path / "ck" / "meta").read_text()
        (tmp_path / "ck" / "meta").write_text(meta.replace("config.heads=2",
                                                           "config.heads=1"))
        with pytest.raises(ConfigError, match="manifest"):
            load_checkpoint(tmp_path / "ck")

    def test_payload_truncation(self, tmp_path):
        rng = np.random.default_rng(3)
        config = RunConfig(epochs=1, **TINY)
        params = init_params(config.architecture(), 2, 2, 32, rng)
        save_checkpoint(tmp_path / "ck", params, config, epoch=1, rng=rng)
        blob = (tmp_path / "ck" / "params.bin").read_bytes()
        (tmp_path / "ck" / "params.bin").write_bytes(blob[:-8])
        with pytest.raises(ConfigError, match="bytes"):
            load_checkpoint(tmp_path / "ck")


class TestEndToEnd:
    def test_train_writes_reloadable_checkpoint(self, tmp_path, monkeypatch):
        monkeypatch.delenv(CHECKPOINT_DIR_ENV, raising=False)
        ds = tiny_dataset(subjects=4, samples=3)
        save_dataset(ds, tmp_path / "data")
        config = RunConfig(dataset=str(tmp_path / "data"),
                           split_mode="sample_based", epochs=2, batch_size=8,
                           checkpoint_dir=str(tmp_path / "ck"), **TINY)
        result = train(config)
        assert result.checkpoint_path == str(tmp_path / "ck")
        ck = load_checkpoint(tmp_path / "ck")
        report = evaluate_checkpoint(ck, "test")
        assert 0.0 <= report.accuracy <= 1.0
        with pytest.raises(ConfigError, match="unknown split"):
            evaluate_checkpoint(ck, "holdout")

    def test_env_var_redirects_checkpoints(self, tmp_path, monkeypatch):
        ds = tiny_dataset(subjects=4, samples=2)
        save_dataset(ds, tmp_path / "data")
        monkeypatch.setenv(CHECKPOINT_DIR_ENV, str(tmp_path / "env_ck"))
        config = RunConfig(dataset=str(tmp_path / "data"),
                           split_mode="sample_based", epochs=1, batch_size=8,
                           checkpoint_dir=str(tmp_path / "ignored"), **TINY)
        result = train(config)
        assert result.checkpoint_path == str(tmp_path / "env_ck")
        assert (tmp_path / "env_ck" / "params.bin").is_file()
        assert not (tmp_path / "ignored").exists()

    def test_retrain_is_bit_identical(self, tmp_path, monkeypatch):
        monkeypatch.delenv(CHECKPOINT_DIR_ENV, raising=False)
        ds = tiny_dataset(subjects=4, samples=2)
        save_dataset(ds, tmp_path / "data")

        def run(out):
            config = RunConfig(dataset=str(tmp_path / "data"),
                               split_mode="sample_based", epochs=2, batch_size=8,
                               checkpoint_dir=str(tmp_path / out), **TINY)
            train(config)
            return (tmp_path / out / "params.bin").read_bytes()

        assert run("a") == run("b")
