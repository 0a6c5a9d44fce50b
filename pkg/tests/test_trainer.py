"""Alternating optimization: freezing, jitter plumbing, descent, ablations."""

import io

import numpy as np
import pytest

from bafusion.config import TrainConfig
from bafusion.data import build_synthetic_dataset
from bafusion.exceptions import ConfigError
from bafusion.losses import gradient_loss, pixel_loss
from bafusion.model import FusionModel
from bafusion.optim import Adam
from bafusion.trainer import (
    _BatchSampler,
    jitter_batch,
    sample_gains,
    stack_batch,
    train_loop,
    train_stage1_step,
    train_stage2_step,
)
from bafusion.tensor import no_grad


def small_config(**overrides):
    base = dict(seed=0, channels=8, image_size=16, batch=2, iters=5)
    base.update(overrides)
    return TrainConfig(**base)


def snapshot(params):
    return {name: p.data.copy() for name, p in params.items()}


def setup_step(seed=0):
    config = small_config(seed=seed)
    pairs = build_synthetic_dataset(seed=seed, count=4, image_size=16)
    model = FusionModel.create(seed=seed, channels=8)
    opts = {
        "backbone": Adam(model.backbone_parameters(), lr=config.lr),
        "bag": Adam(model.bag_parameters(), lr=config.lr),
    }
    visible, infrared = stack_batch(pairs[:2])
    return config, model, opts, visible, infrared


class TestBatchPlumbing:
    def test_stack_batch_layout(self):
        pairs = build_synthetic_dataset(seed=0, count=3, image_size=16)
        visible, infrared = stack_batch(pairs)
        assert visible.shape == (3, 3, 16, 16)
        assert infrared.shape == (3, 1, 16, 16)
        np.testing.assert_array_equal(visible.data[1], np.moveaxis(pairs[1].visible, 2, 0))

    def test_sample_gains_range_and_determinism(self):
        rng = np.random.default_rng(11)
        gains = sample_gains(rng, 1000, 0.5, 2.0)
        assert gains.min() >= 0.5 and gains.max() <= 2.0
        # log2-uniform: about half the draws land below 1
        below = (gains < 1.0).mean()
        assert 0.4 < below < 0.6
        again = sample_gains(np.random.default_rng(11), 1000, 0.5, 2.0)
        np.testing.assert_array_equal(gains, again)

    def test_jitter_batch_per_image_gains(self):
        pairs = build_synthetic_dataset(seed=1, count=2, image_size=16)
        visible, _ = stack_batch(pairs)
        gains = np.array([0.5, 1.0])
        jittered = jitter_batch(visible, gains)
        np.testing.assert_allclose(jittered.data[0],
                                   np.clip(visible.data[0] * 0.5, 0, 1), rtol=1e-6)
        np.testing.assert_array_equal(jittered.data[1], visible.data[1])


class TestStageFreezing:
    def test_stage1_touches_only_backbone(self):
        _, model, opts, visible, infrared = setup_step()
        bag_before = snapshot(model.bag_parameters())
        backbone_before = snapshot(model.backbone_parameters())
        train_stage1_step(visible, infrared, model, opts["backbone"])
        for name, data in bag_before.items():
            np.testing.assert_array_equal(model.params[name].data, data)
        changed = sum(
            not np.array_equal(model.params[name].data, data)
            for name, data in backbone_before.items()
        )
        assert changed >= 6

    def test_stage2_touches_only_bag(self):
        _, model, opts, visible, infrared = setup_step()
        train_stage1_step(visible, infrared, model, opts["backbone"])
        with no_grad():
            reference, _ = model.forward(visible, infrared)
        backbone_before = snapshot(model.backbone_parameters())
        jittered = jitter_batch(visible, np.array([0.6, 1.7]))
        train_stage2_step(jittered, infrared, model, opts["bag"], reference)
        for name, data in backbone_before.items():
            np.testing.assert_array_equal(model.params[name].data, data)
        # gradients were cleared after the step
        assert all(p.grad is None for p in model.params.values())

    def test_identity_jitter_gives_exact_zero_loss(self):
        """gain = 1 reproduces the reference bit-for-bit, so the consistency
        loss is exactly 0 and the zero gradient moves nothing."""
        _, model, opts, visible, infrared = setup_step()
        train_stage1_step(visible, infrared, model, opts["backbone"])
        with no_grad():
            reference, _ = model.forward(visible, infrared)
        jittered = jitter_batch(visible, np.ones(2))
        np.testing.assert_array_equal(jittered.data, visible.data)
        bag_before = snapshot(model.bag_parameters())
        report = train_stage2_step(jittered, infrared, model, opts["bag"], reference)
        assert report.bcl == 0.0
        for name, data in bag_before.items():
            np.testing.assert_array_equal(model.params[name].data, data)


class TestBatchSampler:
    def test_epochs_are_permutations(self):
        sampler = _BatchSampler(np.random.default_rng(0), n=4, batch=2)
        first_epoch = sampler.next_indices() + sampler.next_indices()
        assert sorted(first_epoch) == [0, 1, 2, 3]
        second_epoch = sampler.next_indices() + sampler.next_indices()
        assert sorted(second_epoch) == [0, 1, 2, 3]

    def test_batch_larger_than_dataset_wraps(self):
        sampler = _BatchSampler(np.random.default_rng(0), n=2, batch=5)
        picked = sampler.next_indices()
        assert len(picked) == 5
        assert set(picked) == {0, 1}


class TestTrainLoop:
    def test_deterministic_end_state(self):
        config = small_config(iters=8)
        pairs = build_synthetic_dataset(seed=0, count=4, image_size=16)
        model_a, _, reports_a = train_loop(config, pairs)
        model_b, _, reports_b = train_loop(config, pairs)
        for name, p in model_a.parameters().items():
            np.testing.assert_array_equal(p.data, model_b.parameters()[name].data)
        for ra, rb in zip(reports_a, reports_b):
            assert ra == rb

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            train_loop(small_config(), [])

    def test_log_stream_layout(self):
        config = small_config(iters=3)
        pairs = build_synthetic_dataset(seed=0, count=4, image_size=16)
        stream = io.StringIO()
        train_loop(config, pairs, log=stream)
        lines = stream.getvalue().strip().splitlines()
        assert lines[0].startswith("step\t")
        assert len(lines) == 1 + 3
        for line in lines[1:]:
            fields = line.split("\t")
            assert all(np.isfinite(float(v)) for v in fields[1:])

    def test_fusion_loss_descends(self):
        """First-20 vs last-20 stage-1 loss means drop for three seeds."""
        for seed in (0, 1, 2):
            config = small_config(seed=seed, iters=150)
            pairs = build_synthetic_dataset(seed=seed, count=6, image_size=16)
            _, _, reports = train_loop(config, pairs)
            fus = [r.fus for r in reports]
            assert np.mean(fus[-20:]) < np.mean(fus[:20]), f"seed {seed}"

    def test_consistency_loss_descends(self):
        """Stage-2 objective also drops under the alternating schedule."""
        for seed in (0, 1, 2):
            config = small_config(seed=seed, iters=100)
            pairs = build_synthetic_dataset(seed=seed, count=6, image_size=16)
            _, _, reports = train_loop(config, pairs)
            bcl = [r.bcl for r in reports]
            assert np.mean(bcl[-20:]) < np.mean(bcl[:20]), f"seed {seed}"

    def test_report_totals_are_sums(self):
        config = small_config(iters=4)
        pairs = build_synthetic_dataset(seed=0, count=4, image_size=16)
        _, _, reports = train_loop(config, pairs)
        for r in reports:
            assert r.total == pytest.approx(r.fus + r.bcl, rel=1e-6)
            assert r.fus == pytest.approx(r.pixel + r.grad, rel=1e-6)


class TestAblations:
    def test_disable_bag_trains_affine_not_gate(self):
        """Full-norm mode: gamma/beta learn, the unused gate stack stays put."""
        config = small_config(iters=12, disable_bag=True)
        pairs = build_synthetic_dataset(seed=0, count=4, image_size=16)
        model, _, _ = train_loop(config, pairs)
        assert model.force_full_norm
        fresh = FusionModel.create(seed=0, channels=8)
        assert not np.array_equal(model.params["bag.gamma"].data,
                                  fresh.parameters()["bag.gamma"].data)
        for name in ("bag.gate1.weight", "bag.gate1.bias",
                     "bag.gate2.weight", "bag.gate2.bias"):
            np.testing.assert_array_equal(model.params[name].data,
                                          fresh.parameters()[name].data)

    def test_disable_bcl_uses_fusion_objective_in_stage2(self):
        _, model, opts, visible, infrared = setup_step()
        jittered = jitter_batch(visible, np.array([0.6, 1.5]))
        with no_grad():
            fused_j, _ = model.forward(jittered, infrared)
            expected = pixel_loss(fused_j, jittered, infrared).item() \
                + gradient_loss(fused_j, jittered, infrared).item()
            reference, _ = model.forward(visible, infrared)
        report = train_stage2_step(jittered, infrared, model, opts["bag"],
                                   reference, use_fusion_loss=True)
        assert report.bcl == pytest.approx(expected, rel=1e-6)

    def test_disable_alternation_steps_both_groups_jointly(self):
        config = small_config(iters=10, disable_alternation=True)
        pairs = build_synthetic_dataset(seed=0, count=4, image_size=16)
        model, opts, reports = train_loop(config, pairs)
        assert opts["backbone"].step_count == 10
        assert opts["bag"].step_count == 10
        fresh = FusionModel.create(seed=0, channels=8)
        assert not np.array_equal(model.params["encoder.conv1.weight"].data,
                                  fresh.parameters()["encoder.conv1.weight"].data)
        assert not np.array_equal(model.params["bag.gate2.bias"].data,
                                  fresh.parameters()["bag.gate2.bias"].data)
        for r in reports:
            assert r.total == pytest.approx(r.fus + r.bcl, rel=1e-6)
