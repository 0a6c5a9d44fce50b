"""Shared-weight convolutional encoder, channel-concat junction, and decoder.

Both modalities run through the same encoder weights: the visible frame
directly, the infrared frame after replication to three channels.  Spatial
extents are preserved end to end (3x3 kernels, reflect padding, stride 1),
and the decoder output layer is linear so fused intensities are unconstrained
until export clamps them.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DimensionError, ParameterError
from .tensor import Tensor, concat_channels, conv2d, relu


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, int, int, int]) -> np.ndarray:
    """U(-b, b) with b = sqrt(6 / fan_in), fan_in = in_c * kh * kw."""
    fan_in = shape[1] * shape[2] * shape[3]
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_backbone_params(seed: int, channels: int) -> dict[str, Tensor]:
    """Encoder/decoder parameters, Kaiming-uniform weights and zero biases."""
    if channels < 1:
        raise ParameterError(f"channels must be >= 1; got {channels}")
    rng = np.random.default_rng([seed, 1])
    c = channels

    def conv_param(name: str, shape: tuple[int, int, int, int]) -> dict[str, Tensor]:
        return {
            f"{name}.weight": Tensor(kaiming_uniform(rng, shape), requires_grad=True),
            f"{name}.bias": Tensor(np.zeros((1, shape[0], 1, 1), dtype=np.float32),
                                   requires_grad=True),
        }

    params: dict[str, Tensor] = {}
    params.update(conv_param("encoder.conv1", (c, 3, 3, 3)))
    params.update(conv_param("encoder.conv2", (c, c, 3, 3)))
    params.update(conv_param("decoder.conv1", (c, 2 * c, 3, 3)))
    params.update(conv_param("decoder.conv2", (3, c, 3, 3)))
    return params


def encode(image: Tensor, params: dict[str, Tensor]) -> Tensor:
    """(B, 3, H, W) image -> (B, C, H, W) features; two conv+ReLU layers."""
    if image.shape[1] != 3:
        raise DimensionError(f"encoder expects 3 input channels; got {image.shape[1]}")
    hidden = relu(conv2d(image, params["encoder.conv1.weight"], params["encoder.conv1.bias"]))
    return relu(conv2d(hidden, params["encoder.conv2.weight"], params["encoder.conv2.bias"]))


def fuse_features(visible_gated: Tensor, infrared_feat: Tensor) -> Tensor:
    """Channel concat, gated visible stream first: (B, 2C, H, W)."""
    if visible_gated.shape != infrared_feat.shape:
        raise DimensionError(
            f"feature shapes differ: visible {visible_gated.shape} vs "
            f"infrared {infrared_feat.shape}"
        )
    return concat_channels([visible_gated, infrared_feat])


def decode(features: Tensor, params: dict[str, Tensor]) -> Tensor:
    """(B, 2C, H, W) joint features -> (B, 3, H, W) fused image, linear output."""
    hidden = relu(conv2d(features, params["decoder.conv1.weight"], params["decoder.conv1.bias"]))
    return conv2d(hidden, params["decoder.conv2.weight"], params["decoder.conv2.bias"])
