"""Synthetic registered visible/infrared pairs, plus on-disk pair datasets.

The generator is deterministic per seed.  Visible frames are oriented
sinusoid textures with a handful of filled triangles, stretched into a
per-frame exposure band so the corpus mixes dim, mid, and bright scenes;
infrared frames are dim smooth gradients with bright Gaussian blobs
co-located with a subset of the visible triangles, which gives the two
modalities genuinely complementary content.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import FormatError, ParameterError
from .imageio import ImagePair, read_image, write_image


def _triangle_mask(xs: np.ndarray, ys: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Boolean inside-test via consistent edge cross-product signs."""
    def edge(a, b):
        return (xs - a[0]) * (b[1] - a[1]) - (ys - a[1]) * (b[0] - a[0])

    e0 = edge(verts[0], verts[1])
    e1 = edge(verts[1], verts[2])
    e2 = edge(verts[2], verts[0])
    return ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))


def _generate_pair(rng: np.random.Generator, size: int, pair_id: str) -> ImagePair:
    coords = (np.arange(size) + 0.5) / size
    ys, xs = np.meshgrid(coords, coords, indexing="ij")

    # layered gratings
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    lum = 0.5 + 0.45 * np.sin(
        2.0 * np.pi * freq * (xs * np.cos(theta) + ys * np.sin(theta)) + phase)
    theta2 = rng.uniform(0.0, np.pi)
    freq2 = rng.uniform(6.0, 14.0)
    phase2 = rng.uniform(0.0, 2.0 * np.pi)
    amp2 = rng.uniform(0.05, 0.20)
    lum = lum + amp2 * np.sin(
        2.0 * np.pi * freq2 * (xs * np.cos(theta2) + ys * np.sin(theta2)) + phase2)

    # filled triangles with bounded extent; centroids double as blob anchors
    centroids = []
    for _ in range(int(rng.integers(2, 5))):
        center = rng.uniform(0.2, 0.8, size=2)
        offsets = rng.uniform(-0.28, 0.28, size=(3, 2))
        verts = np.clip(center + offsets, 0.02, 0.98)
        fill = rng.uniform(0.0, 1.0)
        blend = rng.uniform(0.55, 0.85)
        mask = _triangle_mask(xs, ys, verts)
        lum = np.where(mask, blend * fill + (1.0 - blend) * lum, lum)
        centroids.append(verts.mean(axis=0))

    # normalize, then map into a random exposure band: brightness is a
    # property of the scene, not of the codec.  Span stays >= 0.5 so the
    # per-frame luminance spread clears the contrast floor.
    lum = (lum - lum.min()) / (lum.max() - lum.min())
    lo = rng.uniform(0.0, 0.25)
    hi = rng.uniform(lo + 0.5, 1.0)
    lum = lo + (hi - lo) * lum

    # chroma wiggle that vanishes at the extremes, so the range survives
    visible = np.empty((size, size, 3), dtype=np.float32)
    for c in range(3):
        tilt = rng.uniform(-0.25, 0.25)
        visible[:, :, c] = lum + tilt * lum * (1.0 - lum)

    # infrared: dim smooth background plus blobs on a subset of the triangles
    slope = rng.uniform(-1.0, 1.0, size=2)
    wobble_phase = rng.uniform(0.0, 2.0 * np.pi)
    base = 0.12 + 0.05 * (slope[0] * (xs - 0.5) + slope[1] * (ys - 0.5)) \
        + 0.04 * np.sin(2.0 * np.pi * (xs + ys) + wobble_phase)
    infrared = base
    keep = rng.random(len(centroids)) < 0.75
    if not keep.any():
        keep[int(rng.integers(len(centroids)))] = True
    for selected, (cx, cy) in zip(keep, centroids):
        amp = rng.uniform(0.45, 0.85)
        sigma = rng.uniform(0.06, 0.16)
        if selected:
            infrared = infrared + amp * np.exp(
                -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))
    infrared = np.clip(infrared, 0.0, 1.0).astype(np.float32)[:, :, None]

    return ImagePair(visible=visible, infrared=infrared, id=pair_id)


def build_synthetic_dataset(seed: int, count: int, image_size: int) -> list[ImagePair]:
    """``count`` deterministic pairs of ``image_size`` squared frames."""
    if count < 1:
        raise ParameterError(f"count must be >= 1; got {count}")
    if image_size < 8:
        raise ParameterError(f"image_size must be >= 8; got {image_size}")
    rng = np.random.default_rng([seed, 7])
    return [_generate_pair(rng, image_size, f"synth{i:04d}") for i in range(count)]


def write_pair(directory, pair: ImagePair) -> None:
    """Store a pair as <id>_vis.ppm and <id>_ir.pgm under ``directory``."""
    directory = Path(directory)
    write_image(pair.visible, directory / f"{pair.id}_vis.ppm")
    write_image(pair.infrared, directory / f"{pair.id}_ir.pgm")


def load_pair_directory(path) -> list[ImagePair]:
    """Read every <id>_vis.ppm / <id>_ir.pgm pair, sorted by id."""
    directory = Path(path)
    pairs = []
    for vis_path in sorted(directory.glob("*_vis.ppm")):
        pair_id = vis_path.name[:-len("_vis.ppm")]
        ir_path = directory / f"{pair_id}_ir.pgm"
        if not ir_path.exists():
            raise FormatError(f"pair {pair_id!r}: missing {ir_path.name}")
        pairs.append(ImagePair(visible=read_image(vis_path),
                               infrared=read_image(ir_path), id=pair_id))
    return pairs
