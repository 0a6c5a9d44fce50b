"""Reference-free and source-aware fusion quality metrics.

Every metric operates on luminance grayscale in [0, 1] (the image-io
weights), in float64.  SF and AG report on the [0, 1] scale, SD is scaled by
255, MI uses 256-level joint histograms with exact integer counts, and Qabf
is the sigmoid-weighted edge-preservation measure with its published
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionError
from .imageio import luminance, quantize, read_image

_SOBEL_X64 = np.array([[-1.0, 0.0, 1.0],
                       [-2.0, 0.0, 2.0],
                       [-1.0, 0.0, 1.0]], dtype=np.float64)
_SOBEL_Y64 = _SOBEL_X64.T.copy()

# edge-preservation sigmoid constants: (ceiling, slope, midpoint)
_GAMMA_G, _KAPPA_G, _SIGMA_G = 0.9994, -15.0, 0.5
_GAMMA_A, _KAPPA_A, _SIGMA_A = 0.9879, -22.0, 0.8


def _as_gray(image: np.ndarray) -> np.ndarray:
    gray = luminance(np.asarray(image))
    if gray.ndim != 2 or gray.size == 0:
        raise DimensionError(f"metrics need a non-empty 2-D plane; got {gray.shape}")
    return gray.astype(np.float64)


def metric_sf(image: np.ndarray) -> float:
    """Spatial frequency: sqrt of summed mean-square first differences."""
    gray = _as_gray(image)
    row = gray[:, 1:] - gray[:, :-1]
    col = gray[1:, :] - gray[:-1, :]
    rf2 = float(np.mean(row * row)) if row.size else 0.0
    cf2 = float(np.mean(col * col)) if col.size else 0.0
    return math.sqrt(rf2 + cf2)


def metric_sd(image: np.ndarray) -> float:
    """Population standard deviation on the 0..255 scale."""
    return float(np.std(_as_gray(image))) * 255.0


def metric_ag(image: np.ndarray) -> float:
    """Average gradient: mean over the (H-1)x(W-1) interior of
    sqrt((dx^2 + dy^2) / 2) with forward differences."""
    gray = _as_gray(image)
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        return 0.0
    dx = gray[:-1, 1:] - gray[:-1, :-1]
    dy = gray[1:, :-1] - gray[:-1, :-1]
    return float(np.mean(np.sqrt((dx * dx + dy * dy) / 2.0)))


def _mi_between(a: np.ndarray, b: np.ndarray) -> float:
    """Mutual information over the 256x256 joint histogram, in bits.

    Counts are exact integers; each nonzero cell contributes
    p * log2(p / (pa * pb)) computed in scalar float64, and the cells are
    reduced with math.fsum so the total is the correctly-rounded sum
    regardless of traversal order.
    """
    qa = quantize(a[:, :, None]).ravel().astype(np.int64)
    qb = quantize(b[:, :, None]).ravel().astype(np.int64)
    joint = np.bincount(qa * 256 + qb, minlength=65536).reshape(256, 256)
    n = qa.size
    rows = joint.sum(axis=1)
    cols = joint.sum(axis=0)
    terms = []
    for i, j in zip(*np.nonzero(joint)):
        p = joint[i, j] / n
        pa = rows[i] / n
        pb = cols[j] / n
        terms.append(p * math.log2(p / (pa * pb)))
    return math.fsum(terms)


def metric_mi(fused: np.ndarray, visible: np.ndarray, infrared: np.ndarray) -> float:
    """MI(fused; visible) + MI(fused; infrared)."""
    gf = _as_gray(fused)
    return _mi_between(gf, _as_gray(visible)) + _mi_between(gf, _as_gray(infrared))


def _sobel_edges(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge strength (Euclidean) and orientation; Sx = 0 maps to pi/2.

    The zero test is relative to the plane's peak edge strength: reflect
    padding makes border responses cancel mathematically, and summation-order
    dust must not flip those pixels onto the arctan branch.
    """
    padded = np.pad(gray, 1, mode="reflect")
    windows = sliding_window_view(padded, (3, 3))
    sx = np.einsum("ijkl,kl->ij", windows, _SOBEL_X64)
    sy = np.einsum("ijkl,kl->ij", windows, _SOBEL_Y64)
    strength = np.hypot(sx, sy)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sy / sx
    vertical = np.abs(sx) <= 1e-12 * float(strength.max(initial=0.0))
    angle = np.where(vertical, np.pi / 2.0, np.arctan(ratio))
    return strength, angle


def _preservation(g_src: np.ndarray, a_src: np.ndarray,
                  g_fus: np.ndarray, a_fus: np.ndarray) -> np.ndarray:
    """Per-pixel Q = Q_g * Q_a for one source against the fused image."""
    peak = np.maximum(g_src, g_fus)
    safe = np.where(peak > 0.0, peak, 1.0)
    strength_ratio = np.where(peak > 0.0, np.minimum(g_src, g_fus) / safe, 0.0)
    angle_match = 1.0 - np.abs(a_src - a_fus) / (np.pi / 2.0)
    qg = _GAMMA_G / (1.0 + np.exp(_KAPPA_G * (strength_ratio - _SIGMA_G)))
    qa = _GAMMA_A / (1.0 + np.exp(_KAPPA_A * (angle_match - _SIGMA_A)))
    return qg * qa


def metric_qabf(fused: np.ndarray, visible: np.ndarray, infrared: np.ndarray) -> float:
    """Edge-preservation quality, weighted by source edge strengths; 0 when
    neither source has any edge at all."""
    g_v, a_v = _sobel_edges(_as_gray(visible))
    g_i, a_i = _sobel_edges(_as_gray(infrared))
    g_f, a_f = _sobel_edges(_as_gray(fused))
    q_vf = _preservation(g_v, a_v, g_f, a_f)
    q_if = _preservation(g_i, a_i, g_f, a_f)
    weight_total = float((g_v + g_i).sum())
    if weight_total == 0.0:
        return 0.0
    return float((q_vf * g_v + q_if * g_i).sum()) / weight_total


@dataclass
class MetricRow:
    id: str
    sf: float
    sd: float
    mi: float
    ag: float
    qabf: float

    def values(self) -> tuple[float, float, float, float, float]:
        return (self.sf, self.sd, self.mi, self.ag, self.qabf)

    def line(self) -> str:
        return (f"{self.id}\t{self.sf:.6f}\t{self.sd:.6f}"
                f"\t{self.mi:.6f}\t{self.ag:.6f}\t{self.qabf:.6f}")

    @staticmethod
    def header() -> str:
        return "id\tsf\tsd\tmi\tag\tqabf"


def evaluate_pair(pair_id: str, fused: np.ndarray, visible: np.ndarray,
                  infrared: np.ndarray) -> MetricRow:
    return MetricRow(
        id=pair_id,
        sf=metric_sf(fused),
        sd=metric_sd(fused),
        mi=metric_mi(fused, visible, infrared),
        ag=metric_ag(fused),
        qabf=metric_qabf(fused, visible, infrared),
    )


def mean_row(rows: list[MetricRow]) -> MetricRow:
    stacked = np.array([row.values() for row in rows], dtype=np.float64)
    means = stacked.mean(axis=0)
    return MetricRow("MEAN", *map(float, means))


def evaluate_directory(path) -> tuple[list[MetricRow], MetricRow | None, list[str]]:
    """Score every <id>_vis.ppm / <id>_ir.pgm / <id>_fused.ppm triple.

    Returns (rows, mean over rows or None, problems).  Ids missing any member
    are reported in problems and skipped; rows stay sorted by id.
    """
    directory = Path(path)
    members = {"_vis.ppm": {}, "_ir.pgm": {}, "_fused.ppm": {}}
    for suffix, table in members.items():
        for file in directory.glob(f"*{suffix}"):
            table[file.name[:-len(suffix)]] = file
    ids = sorted(set().union(*[set(t) for t in members.values()]))
    rows: list[MetricRow] = []
    problems: list[str] = []
    for pair_id in ids:
        missing = [suffix for suffix, table in members.items() if pair_id not in table]
        if missing:
            expected = ", ".join(f"{pair_id}{suffix}" for suffix in missing)
            problems.append(f"{pair_id}: missing {expected}")
            continue
        rows.append(evaluate_pair(
            pair_id,
            read_image(members["_fused.ppm"][pair_id]),
            read_image(members["_vis.ppm"][pair_id]),
            read_image(members["_ir.pgm"][pair_id]),
        ))
    return rows, (mean_row(rows) if rows else None), problems


def format_table(rows: list[MetricRow], mean: MetricRow | None) -> str:
    lines = [MetricRow.header()]
    lines.extend(row.line() for row in rows)
    if mean is not None:
        lines.append(mean.line())
    return "\n".join(lines) + "\n"
