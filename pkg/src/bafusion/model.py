"""The complete fusion network: shared encoder on both modalities, brightness
gate on the visible stream only, channel concatenation, decoder."""

from __future__ import annotations

import numpy as np

from .backbone import decode, encode, fuse_features, init_backbone_params
from .exceptions import DimensionError
from .gate import (
    DEFAULT_EPS_GATE,
    DEFAULT_EPS_NORM,
    GATE_REDUCTION,
    GateDecision,
    bag_forward,
    init_bag_params,
)
from .imageio import image_to_tensor, tensor_to_image
from .tensor import Tensor, concat_channels, no_grad


class FusionModel:
    """Named-parameter fusion network with backbone and gate groups.

    ``force_full_norm`` bakes in the gate ablation: every forward behaves as
    plain instance normalization on the visible features.  Checkpoints restore
    the flag through the config echo, so an ablated model stays ablated.
    """

    def __init__(self, params: dict[str, Tensor], channels: int,
                 reduction: int = GATE_REDUCTION,
                 eps_gate: float = DEFAULT_EPS_GATE,
                 eps_norm: float = DEFAULT_EPS_NORM,
                 force_full_norm: bool = False):
        self.params = dict(params)
        self.channels = channels
        self.reduction = reduction
        self.eps_gate = eps_gate
        self.eps_norm = eps_norm
        self.force_full_norm = force_full_norm

    @classmethod
    def create(cls, seed: int, channels: int = 16,
               reduction: int = GATE_REDUCTION,
               eps_gate: float = DEFAULT_EPS_GATE,
               eps_norm: float = DEFAULT_EPS_NORM,
               force_full_norm: bool = False) -> "FusionModel":
        params = {}
        params.update(init_backbone_params(seed, channels))
        params.update(init_bag_params(seed, channels, reduction, eps_gate))
        return cls(params, channels, reduction, eps_gate, eps_norm, force_full_norm)

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def backbone_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if not k.startswith("bag.")}

    def bag_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("bag.")}

    def forward(self, visible: Tensor, infrared: Tensor,
                force_full_norm: bool | None = None) -> tuple[Tensor, GateDecision]:
        """(B, 3, H, W) visible + (B, 1, H, W) infrared -> fused (B, 3, H, W)."""
        if infrared.shape[1] == 1:
            infrared3 = concat_channels([infrared, infrared, infrared])
        elif infrared.shape[1] == 3:
            infrared3 = infrared
        else:
            raise DimensionError(
                f"infrared input must have 1 (or already 3) channels; got {infrared.shape[1]}"
            )
        if visible.shape[0] != infrared.shape[0] or visible.shape[2:] != infrared.shape[2:]:
            raise DimensionError(
                f"visible {visible.shape} and infrared {infrared.shape} extents differ"
            )
        ablate = self.force_full_norm if force_full_norm is None else force_full_norm
        feat_vis = encode(visible, self.params)
        feat_ir = encode(infrared3, self.params)
        gated, decision = bag_forward(feat_vis, self.params, self.eps_gate,
                                      self.eps_norm, force_full_norm=ablate)
        fused = decode(fuse_features(gated, feat_ir), self.params)
        return fused, decision

    def fuse_images(self, visible: np.ndarray, infrared: np.ndarray
                    ) -> tuple[np.ndarray, GateDecision]:
        """Single-pair inference on (H, W, C) arrays; returns the raw fused frame."""
        with no_grad():
            fused, decision = self.forward(image_to_tensor(visible), image_to_tensor(infrared))
        return tensor_to_image(fused), decision
