"""Alternating two-stage optimization.

Each iteration: stage 1 takes one Adam step on the backbone group against the
fusion loss on a clean pair; the fused reference is then recomputed with the
just-updated weights under no-grad; stage 2 takes one Adam step on the gate
group against the brightness-consistency loss between the jittered-input
fusion and that detached reference.  Freezing is exact because each optimizer
only ever touches its own group and gradients are cleared between stages.

Ablations: ``disable_bag`` forces full instance normalization in every
forward; ``disable_bcl`` replaces the stage-2 objective by the fusion loss on
the jittered pair (still gate-only updates); ``disable_alternation`` collapses
both stages into one joint step on all parameters with fusion loss on the
clean source plus consistency loss on the jittered source.
"""

from __future__ import annotations

import math
from typing import IO, Sequence

import numpy as np

from .config import TrainConfig
from .exceptions import ConfigError
from .imageio import ImagePair, brightness_jitter
from .losses import (
    LossReport,
    brightness_consistency_loss,
    gradient_loss,
    pixel_loss,
)
from .model import FusionModel
from .optim import Adam
from .tensor import Tensor, backward, no_grad


def _clear_grads(model: FusionModel) -> None:
    for p in model.params.values():
        p.grad = None


def stack_batch(pairs: Sequence[ImagePair]) -> tuple[Tensor, Tensor]:
    """Pairs -> ((B, 3, H, W) visible, (B, 1, H, W) infrared) float32 tensors."""
    vis = np.stack([np.moveaxis(p.visible, 2, 0) for p in pairs])
    ir = np.stack([np.moveaxis(p.infrared, 2, 0) for p in pairs])
    return Tensor(np.ascontiguousarray(vis)), Tensor(np.ascontiguousarray(ir))


def jitter_batch(visible: Tensor, gains: np.ndarray) -> Tensor:
    """Per-image brightness jitter of a (B, 3, H, W) batch, gamma fixed at 1."""
    out = np.empty_like(visible.data)
    for b in range(visible.data.shape[0]):
        out[b] = brightness_jitter(visible.data[b], float(gains[b]))
    return Tensor(out)


def sample_gains(rng: np.random.Generator, count: int,
                 jitter_min: float, jitter_max: float) -> np.ndarray:
    """Gains log2-uniform on [jitter_min, jitter_max]."""
    lo, hi = math.log2(jitter_min), math.log2(jitter_max)
    return np.exp2(rng.uniform(lo, hi, size=count))


def train_stage1_step(visible: Tensor, infrared: Tensor, model: FusionModel,
                      optimizer: Adam) -> LossReport:
    """One fusion-loss step on the backbone group; gate group untouched."""
    fused, _ = model.forward(visible, infrared)
    lp = pixel_loss(fused, visible, infrared)
    lg = gradient_loss(fused, visible, infrared)
    loss = lp + lg
    backward(loss)
    optimizer.step()
    _clear_grads(model)
    fus = loss.item()
    return LossReport(pixel=lp.item(), grad=lg.item(), fus=fus, bcl=0.0, total=fus)


def train_stage2_step(jittered_visible: Tensor, infrared: Tensor, model: FusionModel,
                      optimizer: Adam, reference_fused: Tensor,
                      use_fusion_loss: bool = False) -> LossReport:
    """One consistency-loss step on the gate group; backbone untouched.

    ``use_fusion_loss`` is the consistency-loss ablation: the step still
    updates only the gate group, but against the fusion objective computed on
    the jittered pair.
    """
    fused_j, _ = model.forward(jittered_visible, infrared)
    if use_fusion_loss:
        loss = pixel_loss(fused_j, jittered_visible, infrared) \
            + gradient_loss(fused_j, jittered_visible, infrared)
    else:
        loss = brightness_consistency_loss(fused_j, reference_fused)
    backward(loss)
    optimizer.step()
    _clear_grads(model)
    value = loss.item()
    return LossReport(pixel=0.0, grad=0.0, fus=0.0, bcl=value, total=value)


def train_joint_step(visible: Tensor, infrared: Tensor, jittered_visible: Tensor,
                     model: FusionModel, opt_backbone: Adam, opt_bag: Adam) -> LossReport:
    """Single mixed-source step on all parameters (the alternation ablation)."""
    fused, _ = model.forward(visible, infrared)
    lp = pixel_loss(fused, visible, infrared)
    lg = gradient_loss(fused, visible, infrared)
    fused_j, _ = model.forward(jittered_visible, infrared)
    bcl = brightness_consistency_loss(fused_j, fused.detach())
    total = lp + lg + bcl
    backward(total)
    opt_backbone.step()
    opt_bag.step()
    _clear_grads(model)
    return LossReport(pixel=lp.item(), grad=lg.item(), fus=lp.item() + lg.item(),
                      bcl=bcl.item(), total=total.item())


class _BatchSampler:
    """Shuffled epochs of dataset indices, reshuffled when exhausted."""

    def __init__(self, rng: np.random.Generator, n: int, batch: int):
        self.rng = rng
        self.n = n
        self.batch = batch
        self.order = rng.permutation(n)
        self.cursor = 0

    def next_indices(self) -> list[int]:
        picked = []
        while len(picked) < self.batch:
            if self.cursor >= self.n:
                self.order = self.rng.permutation(self.n)
                self.cursor = 0
            picked.append(int(self.order[self.cursor]))
            self.cursor += 1
        return picked


def train_loop(config: TrainConfig, dataset: Sequence[ImagePair],
               log: IO[str] | None = None
               ) -> tuple[FusionModel, dict[str, Adam], list[LossReport]]:
    """Run ``config.iters`` iterations; returns model, optimizers, reports.

    Deterministic per (seed, config): model init, batch order, and jitter
    gains all derive from ``config.seed`` through fixed substreams.
    """
    config.validate()
    if not dataset:
        raise ConfigError("training dataset is empty")
    model = FusionModel.create(seed=config.seed, channels=config.channels,
                               eps_gate=config.eps_gate, eps_norm=config.eps_norm,
                               force_full_norm=config.disable_bag)
    opt_backbone = Adam(model.backbone_parameters(), lr=config.lr)
    opt_bag = Adam(model.bag_parameters(), lr=config.lr)
    batch_rng = np.random.default_rng([config.seed, 3])
    jitter_rng = np.random.default_rng([config.seed, 4])
    sampler = _BatchSampler(batch_rng, len(dataset), config.batch)

    reports: list[LossReport] = []
    if log is not None:
        log.write(LossReport.header() + "\n")
    for step in range(config.iters):
        picked = [dataset[i] for i in sampler.next_indices()]
        visible, infrared = stack_batch(picked)
        gains = sample_gains(jitter_rng, len(picked), config.jitter_min, config.jitter_max)
        jittered = jitter_batch(visible, gains)
        if config.disable_alternation:
            report = train_joint_step(visible, infrared, jittered, model,
                                      opt_backbone, opt_bag)
        else:
            stage1 = train_stage1_step(visible, infrared, model, opt_backbone)
            with no_grad():
                reference, _ = model.forward(visible, infrared)
            stage2 = train_stage2_step(jittered, infrared, model, opt_bag,
                                       reference, use_fusion_loss=config.disable_bcl)
            report = LossReport(pixel=stage1.pixel, grad=stage1.grad, fus=stage1.fus,
                                bcl=stage2.bcl, total=stage1.fus + stage2.bcl)
        reports.append(report)
        if log is not None:
            log.write(report.line(step) + "\n")
    return model, {"backbone": opt_backbone, "bag": opt_bag}, reports
