"""Brightness-adaptive gate: per-channel instance normalization, a soft-binary
channel selector driven by pooled statistics, and the recombination that blends
raw and normalized features.

The gate reads the RAW features (not the normalized ones): squeeze to one
value per channel, a two-layer 1x1 bottleneck (reduction 4), then the soft
indicator w = a^2 / (a^2 + eps) in [0, 1).  w -> 0 passes the channel through
untouched, w -> 1 replaces it with its normalized version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backbone import kaiming_uniform
from .exceptions import DimensionError, ParameterError
from .tensor import (
    Tensor,
    conv2d,
    global_avg_pool,
    mul,
    relu,
    sqrt_,
    square,
)

DEFAULT_EPS_GATE = 1e-4
DEFAULT_EPS_NORM = 1e-5
GATE_REDUCTION = 4


@dataclass
class GateDecision:
    """Per-instance gate snapshot: raw responses and soft indicators."""

    alpha: Tensor  # (B, C, 1, 1)
    w: Tensor      # (B, C, 1, 1), each value in [0, 1)
    eps: float

    def alpha_values(self) -> np.ndarray:
        """(B, C) float copy of the raw gate responses."""
        return self.alpha.data[:, :, 0, 0].copy()

    def w_values(self) -> np.ndarray:
        """(B, C) float copy of the soft indicators."""
        return self.w.data[:, :, 0, 0].copy()


def init_bag_params(seed: int, channels: int, reduction: int = GATE_REDUCTION,
                    eps_gate: float = DEFAULT_EPS_GATE) -> dict[str, Tensor]:
    """Affine and gate parameters.

    The second 1x1 layer starts with zero weights and bias sqrt(eps)/10, so
    every alpha begins at the same tiny value and w = 1/101: a 99% passthrough
    that is independent of the input.  Exactly zero alpha cannot be used here:
    dw/dalpha vanishes at 0, making alpha = 0 a stationary point from which no
    gate parameter would ever receive gradient.
    """
    if reduction < 1:
        raise ParameterError(f"reduction must be >= 1; got {reduction}")
    if channels % reduction != 0:
        raise ParameterError(
            f"channels ({channels}) must be divisible by the gate reduction ({reduction})"
        )
    if eps_gate <= 0:
        raise ParameterError(f"eps_gate must be positive; got {eps_gate}")
    hidden = channels // reduction
    rng = np.random.default_rng([seed, 2])
    alpha0 = math.sqrt(eps_gate) / 10.0
    return {
        "bag.gamma": Tensor(np.ones((1, channels, 1, 1), dtype=np.float32), requires_grad=True),
        "bag.beta": Tensor(np.zeros((1, channels, 1, 1), dtype=np.float32), requires_grad=True),
        "bag.gate1.weight": Tensor(kaiming_uniform(rng, (hidden, channels, 1, 1)),
                                   requires_grad=True),
        "bag.gate1.bias": Tensor(np.zeros((1, hidden, 1, 1), dtype=np.float32),
                                 requires_grad=True),
        "bag.gate2.weight": Tensor(np.zeros((channels, hidden, 1, 1), dtype=np.float32),
                                   requires_grad=True),
        "bag.gate2.bias": Tensor(np.full((1, channels, 1, 1), alpha0, dtype=np.float32),
                                 requires_grad=True),
    }


def instance_normalize(x: Tensor, gamma: Tensor, beta: Tensor,
                       eps_norm: float = DEFAULT_EPS_NORM) -> Tensor:
    """gamma * (x - mu) / sqrt(var + eps) + beta, stats per channel and instance.

    Mean and variance are spatial population statistics of each (instance,
    channel) plane; constant planes map to beta exactly (eps keeps the
    denominator finite).
    """
    if eps_norm <= 0:
        raise ParameterError(f"eps_norm must be positive; got {eps_norm}")
    mu = global_avg_pool(x)
    centered = x - mu
    var = global_avg_pool(mul(centered, centered))
    normalized = centered / sqrt_(var + eps_norm)
    return mul(gamma, normalized) + beta


def soft_binary_gate(alpha: Tensor, eps_gate: float = DEFAULT_EPS_GATE) -> Tensor:
    """w = alpha^2 / (alpha^2 + eps); symmetric in alpha, 0 at 0, saturating below 1."""
    if eps_gate <= 0:
        raise ParameterError(f"eps_gate must be positive; got {eps_gate}")
    sq = square(alpha)
    return sq / (sq + eps_gate)


def gate_indicators(x: Tensor, params: dict[str, Tensor],
                    eps_gate: float = DEFAULT_EPS_GATE) -> GateDecision:
    """Raw features -> GateDecision; the gate sees x itself, never x_norm."""
    pooled = global_avg_pool(x)
    hidden = relu(conv2d(pooled, params["bag.gate1.weight"], params["bag.gate1.bias"],
                         padding="zero"))
    alpha = conv2d(hidden, params["bag.gate2.weight"], params["bag.gate2.bias"],
                   padding="zero")
    return GateDecision(alpha=alpha, w=soft_binary_gate(alpha, eps_gate), eps=eps_gate)


def recombine(x: Tensor, x_norm: Tensor, w) -> Tensor:
    """x_g = (1 - w) * x + w * x_norm with w broadcast per channel.

    ``w`` may be a GateDecision or the (B, C, 1, 1) indicator tensor.  w == 0
    reproduces x bit-exactly; w == 1 reproduces x_norm.
    """
    indicator = w.w if isinstance(w, GateDecision) else w
    if x.shape != x_norm.shape:
        raise DimensionError(f"x {x.shape} and x_norm {x_norm.shape} shapes differ")
    b, c, _, _ = x.shape
    if indicator.shape[0] not in (1, b) or indicator.shape[1] != c \
            or indicator.shape[2:] != (1, 1):
        raise DimensionError(
            f"indicator shape {indicator.shape} does not broadcast over features {x.shape}"
        )
    return mul(1.0 - indicator, x) + mul(indicator, x_norm)


def bag_forward(x: Tensor, params: dict[str, Tensor],
                eps_gate: float = DEFAULT_EPS_GATE,
                eps_norm: float = DEFAULT_EPS_NORM,
                force_full_norm: bool = False) -> tuple[Tensor, GateDecision]:
    """Full gate pass: normalize, decide, recombine.

    With ``force_full_norm`` the module degenerates to plain instance
    normalization on every channel (the gate ablation): the decision reports
    w == 1 for all channels and the returned features are exactly x_norm.
    """
    x_norm = instance_normalize(x, params["bag.gamma"], params["bag.beta"], eps_norm)
    decision = gate_indicators(x, params, eps_gate)
    if force_full_norm:
        ones = Tensor(np.ones_like(decision.w.data))
        return x_norm, GateDecision(alpha=decision.alpha, w=ones, eps=eps_gate)
    return recombine(x, x_norm, decision), decision
