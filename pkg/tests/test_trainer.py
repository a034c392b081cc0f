"""Batching, initialization, and the SGD loop."""

import numpy as np
import pytest

from hmgl.domain import Config
from hmgl.mgnn import gradients, loss_value
from hmgl.synth import SynthSpec, generate
from hmgl.trainer import (
    init_params,
    label_mapping,
    make_batches,
    resolve_config,
    train,
)


def dataset(n_groups=4, seed=31, **kwargs):
    spec = SynthSpec(num_group_ids=n_groups, members_range=(2, 4), d=6, seed=seed, **kwargs)
    return generate(spec)


class TestMakeBatches:
    def test_batch_count(self):
        data = dataset(16)  # 32 samples over 2 views
        batches = list(make_batches(data, 16, seed=0))
        assert [len(b) for b in batches] == [16, 16]

    def test_remainder_batch(self):
        data = dataset(16)[:17]
        batches = list(make_batches(data, 16, seed=0))
        assert [len(b) for b in batches] == [16, 1]

    def test_same_seed_same_sequence(self):
        data = dataset(8)
        a = [[s.group_id for s in b] for b in make_batches(data, 4, seed=5)]
        b = [[s.group_id for s in b] for b in make_batches(data, 4, seed=5)]
        assert a == b

    def test_epochs_reshuffle(self):
        data = dataset(8)
        a = [[id(s) for s in b] for b in make_batches(data, 4, seed=5, epoch=0)]
        b = [[id(s) for s in b] for b in make_batches(data, 4, seed=5, epoch=1)]
        assert a != b

    def test_covers_dataset(self):
        data = dataset(8)
        seen = [s for b in make_batches(data, 5, seed=1) for s in b]
        assert sorted(id(s) for s in seen) == sorted(id(s) for s in data)


class TestInitParams:
    def config(self):
        return Config(embed_dim=6, num_classes=9, out_dim=8, num_layers=2, max_members=4)

    def test_deterministic(self):
        a = init_params(self.config(), seed=3)
        b = init_params(self.config(), seed=3)
        for (_, x), (_, y) in zip(a.tensors(), b.tensors()):
            np.testing.assert_array_equal(x, y)

    def test_zero_noise_gives_exact_identity(self):
        params = init_params(self.config(), seed=3, relation_noise=0.0)
        np.testing.assert_array_equal(params.w0, np.eye(6))
        np.testing.assert_array_equal(params.w_ap, np.eye(4))

    def test_shapes_match_config(self):
        params = init_params(self.config(), seed=0)
        params.validate(self.config())

    def test_unresolved_config_rejected(self):
        with pytest.raises(ValueError, match="resolved"):
            init_params(Config(), seed=0)


class TestTrain:
    def test_zero_epochs_returns_init(self):
        data = dataset()
        cfg = Config(epochs=0, max_members=4, seed=7)
        params, log = train(data, cfg)
        resolved = resolve_config(cfg, data)
        init = init_params(resolved, resolved.seed)
        assert log == []
        for (_, a), (_, b) in zip(params.tensors(), init.tensors()):
            np.testing.assert_array_equal(a, b)

    def test_zero_lr_keeps_params(self):
        data = dataset()
        cfg = Config(epochs=2, lr=0.0, max_members=4, seed=7)
        params, log = train(data, cfg)
        resolved = resolve_config(cfg, data)
        init = init_params(resolved, resolved.seed)
        assert len(log) == 2
        for (_, a), (_, b) in zip(params.tensors(), init.tensors()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic_given_seed(self):
        data = dataset()
        cfg = Config(epochs=2, max_members=4, seed=9)
        a, log_a = train(data, cfg)
        b, log_b = train(data, cfg)
        assert log_a == log_b
        for (_, x), (_, y) in zip(a.tensors(), b.tensors()):
            np.testing.assert_array_equal(x, y)

    def test_single_step_descends_with_small_lr(self):
        data = dataset(seed=41)
        cfg = resolve_config(Config(max_members=4, seed=41), data)
        labels = label_mapping(data)
        params = init_params(cfg, cfg.seed)
        before = loss_value(data, params, cfg, labels).total
        grads, _ = gradients(data, params, cfg, labels)
        for name, arr in params.tensors():
            params.set_tensor(name, arr - 1e-5 * grads[name])
        after = loss_value(data, params, cfg, labels).total
        assert after <= before

    def test_checkpoint_written_every_k_epochs(self, tmp_path):
        data = dataset()
        cfg = Config(epochs=2, max_members=4, seed=7)
        path = tmp_path / "ckpt.hmgl"
        train(data, cfg, checkpoint_path=path, checkpoint_every=1)
        assert path.exists()

    def test_label_mapping_sorted_contiguous(self):
        data = dataset()
        mapping = label_mapping(data)
        values = sorted(mapping.values())
        assert values == list(range(len(values)))
        keys = list(mapping.keys())
        assert keys == sorted(keys)

    def test_oversize_group_rejected(self):
        data = dataset()
        cfg = Config(epochs=1, max_members=2, seed=7)
        with pytest.raises(ValueError, match="limit is 2"):
            train(data, cfg)

    def test_non_finite_loss_aborts_with_position(self, monkeypatch):
        import hmgl.trainer as trainer_mod

        def explode(*args, **kwargs):
            raise FloatingPointError("non-finite training loss")

        monkeypatch.setattr(trainer_mod, "gradients", explode)
        data = dataset()
        with pytest.raises(FloatingPointError, match="epoch 0, batch 0"):
            train(data, Config(epochs=1, max_members=4, seed=7))
