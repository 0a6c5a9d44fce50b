"""Fusion and brightness-consistency training objectives.

The fusion objective pulls the fused frame toward the elementwise-brightest
source in both intensity and gradient magnitude.  The consistency objective
penalizes spatial and DFT-amplitude drift of a jittered fusion from a detached
reference fusion.  Every term is a mean over all elements of its operand
(batch, channel, and pixels alike).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, DimensionError
from .tensor import (
    Tensor,
    abs_,
    concat_channels,
    conv2d,
    dft2_amplitude,
    maximum,
    mean_all,
    reshape,
    square,
)

_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]], dtype=np.float32)
_SOBEL_Y = _SOBEL_X.T.copy()


@dataclass
class LossReport:
    """Per-iteration loss components; ``bcl`` holds whatever objective stage 2 ran."""

    pixel: float
    grad: float
    fus: float
    bcl: float
    total: float

    def line(self, step: int) -> str:
        return (f"{step}\t{self.pixel:.8g}\t{self.grad:.8g}"
                f"\t{self.bcl:.8g}\t{self.total:.8g}")

    @staticmethod
    def header() -> str:
        return "step\tpixel\tgrad\tbcl\ttotal"


def _sobel_kernel(dtype) -> tuple[Tensor, Tensor]:
    kx = Tensor(_SOBEL_X.reshape(1, 1, 3, 3).astype(dtype))
    ky = Tensor(_SOBEL_Y.reshape(1, 1, 3, 3).astype(dtype))
    return kx, ky


def sobel_magnitude(image: Tensor) -> Tensor:
    """|G_x| + |G_y| per channel with reflect padding, shape-preserving.

    Channels are filtered independently: the (B, C, H, W) input is folded to
    (B*C, 1, H, W) so one single-channel kernel serves every plane.
    """
    b, c, h, w = image.shape
    kx, ky = _sobel_kernel(image.dtype)
    planes = reshape(image, (b * c, 1, h, w))
    gx = conv2d(planes, kx, padding="reflect")
    gy = conv2d(planes, ky, padding="reflect")
    mag = abs_(gx) + abs_(gy)
    return reshape(mag, (b, c, h, w))


def _spread_infrared(infrared: Tensor, channels: int) -> Tensor:
    """Replicate a 1-channel infrared frame across the visible channel count."""
    if infrared.shape[1] == channels:
        return infrared
    if infrared.shape[1] != 1:
        raise DimensionError(
            f"infrared must have 1 or {channels} channels; got {infrared.shape[1]}"
        )
    return concat_channels([infrared] * channels)


def _check_pair(fused: Tensor, visible: Tensor) -> None:
    if fused.shape != visible.shape:
        raise DimensionError(f"fused {fused.shape} vs visible {visible.shape} shapes differ")


def pixel_loss(fused: Tensor, visible: Tensor, infrared: Tensor) -> Tensor:
    """mean | fused - max(visible, infrared) | over all elements."""
    _check_pair(fused, visible)
    target = maximum(visible, _spread_infrared(infrared, fused.shape[1]))
    return mean_all(abs_(fused - target))


def gradient_loss(fused: Tensor, visible: Tensor, infrared: Tensor) -> Tensor:
    """mean | |grad fused| - max(|grad visible|, |grad infrared|) |."""
    _check_pair(fused, visible)
    infrared_full = _spread_infrared(infrared, fused.shape[1])
    gf = sobel_magnitude(fused)
    gv = sobel_magnitude(visible)
    gi = sobel_magnitude(infrared_full)
    return mean_all(abs_(gf - maximum(gv, gi)))


def fusion_loss(fused: Tensor, visible: Tensor, infrared: Tensor) -> Tensor:
    """Pixel plus gradient term, unweighted."""
    return pixel_loss(fused, visible, infrared) + gradient_loss(fused, visible, infrared)


def brightness_consistency_loss(fused_jittered: Tensor, fused_reference: Tensor) -> Tensor:
    """Mean-square spatial difference plus mean-square DFT-amplitude difference.

    The reference must be detached: it is a target, and gradient may only
    flow through the jittered branch.
    """
    if fused_reference.requires_grad:
        raise ContractError("fused_reference must be detached (no gradient)")
    if fused_jittered.shape != fused_reference.shape:
        raise DimensionError(
            f"jittered {fused_jittered.shape} vs reference {fused_reference.shape} shapes differ"
        )
    spatial = mean_all(square(fused_jittered - fused_reference))
    amplitude = mean_all(square(dft2_amplitude(fused_jittered) - dft2_amplitude(fused_reference)))
    return spatial + amplitude
