"""Brightness-robustness probe: fuse one pair under a range of visible-light
gains and measure how stable the fused output stays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError
from .imageio import Histogram, ImagePair, brightness_jitter, histogram, quantize
from .metrics import MetricRow, evaluate_pair
from .model import FusionModel

METRIC_NAMES = ("sf", "sd", "mi", "ag", "qabf")


@dataclass
class GainPoint:
    gain: float
    row: MetricRow
    hist: Histogram
    hist_l1: float  # distance to the gain=1 reference fusion


@dataclass
class SweepReport:
    pair_id: str
    points: list[GainPoint]

    def metric_series(self, name: str) -> np.ndarray:
        return np.array([getattr(p.row, name) for p in self.points], dtype=np.float64)

    def dispersion(self, name: str) -> tuple[float, float, float]:
        """(mean, population std, coefficient of variation) of one metric."""
        series = self.metric_series(name)
        mean = float(series.mean())
        std = float(series.std())
        if std == 0.0:
            return mean, std, 0.0
        return mean, std, std / abs(mean) if mean != 0.0 else float("inf")

    def mean_hist_l1(self) -> float:
        return float(np.mean([p.hist_l1 for p in self.points]))


def _fuse_quantized(model: FusionModel, visible: np.ndarray,
                    infrared: np.ndarray) -> np.ndarray:
    raw, _ = model.fuse_images(visible, infrared)
    return quantize(raw).astype(np.float32) / 255.0


def robustness_sweep(model: FusionModel, pair: ImagePair,
                     gains: list[float]) -> SweepReport:
    """Fuse ``pair`` at every gain; metrics and histogram distance per gain.

    Needs at least two gains for the dispersions to mean anything.  The
    histogram reference is always the gain=1 fusion, computed separately, so
    a gain of exactly 1 in the list reports distance 0.
    """
    if len(gains) < 2:
        raise ParameterError(f"robustness_sweep needs >= 2 gains; got {len(gains)}")
    for gain in gains:
        if gain <= 0:
            raise ParameterError(f"gains must be positive; got {gain}")
    reference = histogram(_fuse_quantized(model, pair.visible, pair.infrared))
    points = []
    for gain in gains:
        jittered = brightness_jitter(pair.visible, float(gain))
        fused = _fuse_quantized(model, jittered, pair.infrared)
        row = evaluate_pair(pair.id, fused, jittered, pair.infrared)
        hist = histogram(fused)
        points.append(GainPoint(gain=float(gain), row=row, hist=hist,
                                hist_l1=hist.l1_distance(reference)))
    return SweepReport(pair_id=pair.id, points=points)


def format_sweep(report: SweepReport) -> str:
    """Tab-separated: one row per gain, then mean/std/cv rows per metric."""
    lines = ["gain\tsf\tsd\tmi\tag\tqabf\thist_l1"]
    for p in report.points:
        lines.append(f"{p.gain:.6g}\t{p.row.sf:.6f}\t{p.row.sd:.6f}\t{p.row.mi:.6f}"
                     f"\t{p.row.ag:.6f}\t{p.row.qabf:.6f}\t{p.hist_l1:.6f}")
    for stat_index, label in ((0, "MEAN"), (1, "STD"), (2, "CV")):
        cells = [label]
        for name in METRIC_NAMES:
            cells.append(f"{report.dispersion(name)[stat_index]:.6f}")
        cells.append(f"{report.mean_hist_l1():.6f}" if label == "MEAN" else "-")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
