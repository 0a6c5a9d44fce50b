"""Encoder/decoder parameterization and wiring."""

import math

import numpy as np
import pytest

from bafusion.backbone import (
    decode,
    encode,
    fuse_features,
    init_backbone_params,
    kaiming_uniform,
)
from bafusion.exceptions import DimensionError, ParameterError
from bafusion.tensor import Tensor, backward, mean_all, square


class TestInit:
    def test_deterministic_per_seed(self):
        a = init_backbone_params(7, channels=8)
        b = init_backbone_params(7, channels=8)
        assert a.keys() == b.keys()
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_seeds_differ(self):
        a = init_backbone_params(0, channels=8)
        b = init_backbone_params(1, channels=8)
        assert not np.array_equal(a["encoder.conv1.weight"].data,
                                  b["encoder.conv1.weight"].data)

    def test_shapes(self):
        params = init_backbone_params(0, channels=6)
        assert params["encoder.conv1.weight"].shape == (6, 3, 3, 3)
        assert params["encoder.conv2.weight"].shape == (6, 6, 3, 3)
        assert params["decoder.conv1.weight"].shape == (6, 12, 3, 3)
        assert params["decoder.conv2.weight"].shape == (3, 6, 3, 3)
        assert params["decoder.conv2.bias"].shape == (1, 3, 1, 1)

    def test_kaiming_bound_respected(self):
        rng = np.random.default_rng(42)
        w = kaiming_uniform(rng, (16, 8, 3, 3))
        bound = math.sqrt(6.0 / (8 * 9))
        assert np.abs(w).max() <= bound
        # with 1152 draws the max should come close to the bound
        assert np.abs(w).max() > 0.8 * bound

    def test_biases_zero_weights_trainable(self):
        params = init_backbone_params(0, channels=4)
        for name, p in params.items():
            assert p.requires_grad
            if name.endswith(".bias"):
                np.testing.assert_array_equal(p.data, 0.0)

    def test_invalid_channels(self):
        with pytest.raises(ParameterError):
            init_backbone_params(0, channels=0)


class TestWiring:
    def test_zero_image_zero_features(self):
        """Zero biases mean a zero frame encodes to exactly zero features."""
        params = init_backbone_params(3, channels=8)
        feats = encode(Tensor(np.zeros((1, 3, 8, 8))), params)
        assert feats.shape == (1, 8, 8, 8)
        np.testing.assert_array_equal(feats.data, 0.0)

    def test_shared_weights_same_input_same_features(self):
        params = init_backbone_params(3, channels=8)
        rng = np.random.default_rng(42)
        frame = rng.uniform(size=(1, 3, 8, 8)).astype(np.float32)
        a = encode(Tensor(frame.copy()), params)
        b = encode(Tensor(frame.copy()), params)
        np.testing.assert_array_equal(a.data, b.data)

    def test_encode_rejects_wrong_channel_count(self):
        params = init_backbone_params(0, channels=4)
        with pytest.raises(DimensionError):
            encode(Tensor(np.zeros((1, 1, 8, 8))), params)

    def test_concat_puts_visible_first(self):
        vis = Tensor(np.full((1, 2, 3, 3), 1.0))
        ir = Tensor(np.full((1, 2, 3, 3), 2.0))
        joint = fuse_features(vis, ir)
        assert joint.shape == (1, 4, 3, 3)
        np.testing.assert_array_equal(joint.data[0, :2], 1.0)
        np.testing.assert_array_equal(joint.data[0, 2:], 2.0)

    def test_concat_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError, match="feature shapes differ"):
            fuse_features(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 4, 3))))

    def test_decode_output_shape_and_linearity(self):
        """Output layer has no activation: doubling last-layer weights doubles
        the output of an all-positive hidden state."""
        params = init_backbone_params(5, channels=4)
        rng = np.random.default_rng(0)
        joint = Tensor(rng.uniform(0.1, 1.0, size=(2, 8, 6, 6)).astype(np.float32))
        out = decode(joint, params)
        assert out.shape == (2, 3, 6, 6)
        doubled = dict(params)
        doubled["decoder.conv2.weight"] = Tensor(params["decoder.conv2.weight"].data * 2.0)
        doubled["decoder.conv2.bias"] = Tensor(params["decoder.conv2.bias"].data * 2.0)
        out2 = decode(joint, doubled)
        np.testing.assert_allclose(out2.data, 2.0 * out.data, rtol=1e-5)

    def test_spatial_extent_preserved(self):
        params = init_backbone_params(1, channels=4)
        rng = np.random.default_rng(1)
        frame = Tensor(rng.uniform(size=(1, 3, 11, 17)).astype(np.float32))
        feats = encode(frame, params)
        out = decode(fuse_features(feats, feats), params)
        assert out.shape == (1, 3, 11, 17)

    def test_gradients_reach_every_parameter(self):
        """One end-to-end backward touches all weights; ReLU may zero a bias
        or two, so only require most parameters nonzero and all present."""
        params = init_backbone_params(2, channels=4)
        rng = np.random.default_rng(2)
        vis = Tensor(rng.uniform(size=(2, 3, 8, 8)).astype(np.float32))
        ir = Tensor(rng.uniform(size=(2, 3, 8, 8)).astype(np.float32))
        fused = decode(fuse_features(encode(vis, params), encode(ir, params)), params)
        backward(mean_all(square(fused)))
        nonzero = 0
        for name, p in params.items():
            assert p.grad is not None, name
            if np.abs(p.grad).max() > 0:
                nonzero += 1
        assert nonzero >= 6
