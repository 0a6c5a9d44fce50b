"""Binary PPM/PGM codecs, quantization, brightness jitter, and histograms.

Images travel through the library as float arrays shaped (H, W, C) with
values in [0, 1]; C is 3 for visible (P6) and 1 for infrared (P5) frames.
Only maxval 255 is supported.  Writing clamps to [0, 1] and quantizes with
round-half-up, and reading back a written image reproduces it bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, FormatError, ParameterError
from .tensor import Tensor

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass
class ImagePair:
    """One registered visible/infrared pair plus its dataset identifier."""

    visible: np.ndarray   # (H, W, 3) float32 in [0, 1]
    infrared: np.ndarray  # (H, W, 1) float32 in [0, 1]
    id: str

    def __post_init__(self):
        if self.visible.ndim != 3 or self.visible.shape[2] != 3:
            raise DimensionError(f"visible frame must be (H, W, 3); got {self.visible.shape}")
        if self.infrared.ndim != 3 or self.infrared.shape[2] != 1:
            raise DimensionError(f"infrared frame must be (H, W, 1); got {self.infrared.shape}")
        if self.visible.shape[:2] != self.infrared.shape[:2]:
            raise DimensionError(
                f"pair {self.id!r}: visible {self.visible.shape[:2]} and "
                f"infrared {self.infrared.shape[:2]} extents differ"
            )


@dataclass
class Histogram:
    """256-bin luminance histogram with exact integer counts."""

    bins: np.ndarray  # (256,) int64
    total: int

    def normalized(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros(256, dtype=np.float64)
        return self.bins.astype(np.float64) / self.total

    def l1_distance(self, other: "Histogram") -> float:
        """L1 distance between the two normalized histograms."""
        return float(np.abs(self.normalized() - other.normalized()).sum())


def _next_token(blob: bytes, pos: int) -> tuple[bytes, int, int]:
    """Skip whitespace and # comments, return (token, token_offset, next_pos)."""
    n = len(blob)
    while pos < n:
        byte = blob[pos:pos + 1]
        if byte in b"#":
            while pos < n and blob[pos] not in b"\n\r":
                pos += 1
        elif byte in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("unexpected end of header", offset=pos)
    start = pos
    while pos < n and blob[pos:pos + 1] not in _WHITESPACE and blob[pos] not in b"#":
        pos += 1
    return blob[start:pos], start, pos


def _int_token(blob: bytes, pos: int, what: str) -> tuple[int, int, int]:
    token, start, pos = _next_token(blob, pos)
    try:
        value = int(token)
    except ValueError:
        raise FormatError(f"malformed {what} token {token!r}", offset=start) from None
    return value, start, pos


def read_image(path) -> np.ndarray:
    """Decode a binary PGM (P5) or PPM (P6) file to (H, W, C) float32 in [0, 1]."""
    blob = Path(path).read_bytes()
    magic, magic_off, pos = _next_token(blob, 0)
    if magic_off != 0 or magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}; expected P5 or P6", offset=0)
    channels = 1 if magic == b"P5" else 3
    width, off, pos = _int_token(blob, pos, "width")
    if width < 1:
        raise FormatError(f"width must be positive; got {width}", offset=off)
    height, off, pos = _int_token(blob, pos, "height")
    if height < 1:
        raise FormatError(f"height must be positive; got {height}", offset=off)
    maxval, off, pos = _int_token(blob, pos, "maxval")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255", offset=off)
    if pos >= len(blob) or blob[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("expected a single whitespace byte after maxval", offset=pos)
    pos += 1
    need = width * height * channels
    payload = blob[pos:pos + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: need {need} bytes, have {len(payload)}",
            offset=pos + len(payload),
        )
    raster = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return raster.astype(np.float32) / 255.0


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to uint8 with round-half-up (0.5 -> 128)."""
    clipped = np.clip(image, 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def write_image(image: np.ndarray, path) -> None:
    """Encode (H, W, 1) as P5 or (H, W, 3) as P6, maxval 255."""
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise DimensionError(f"image must be (H, W, 1) or (H, W, 3); got {image.shape}")
    height, width, channels = image.shape
    magic = b"P5" if channels == 1 else b"P6"
    header = magic + b"\n" + f"{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quantize(image).tobytes())


def luminance(image: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H, W) grayscale; single-channel images pass through."""
    if image.ndim == 2:
        return image
    if image.ndim != 3:
        raise DimensionError(f"luminance expects (H, W, C); got {image.shape}")
    if image.shape[2] == 1:
        return image[:, :, 0]
    if image.shape[2] != 3:
        raise DimensionError(f"luminance expects 1 or 3 channels; got {image.shape[2]}")
    r, g, b = LUMA_WEIGHTS
    return r * image[:, :, 0] + g * image[:, :, 1] + b * image[:, :, 2]


def histogram(image: np.ndarray) -> Histogram:
    """Luminance histogram over the 256 quantized levels."""
    gray = luminance(image)
    levels = quantize(gray[:, :, None] if gray.ndim == 2 else gray)
    bins = np.bincount(levels.ravel(), minlength=256).astype(np.int64)
    return Histogram(bins=bins, total=int(levels.size))


def brightness_jitter(image: np.ndarray, gain: float, gamma: float = 1.0) -> np.ndarray:
    """clamp(gain * v**gamma, 0, 1) elementwise.

    gain=1, gamma=1 is a bit-exact identity for in-range inputs; the trainer
    depends on that for its zero-loss self-check.
    """
    if gain <= 0:
        raise ParameterError(f"gain must be positive; got {gain}")
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive; got {gamma}")
    out = image
    if gamma != 1.0:
        out = np.power(out, gamma)
    if gain != 1.0:
        out = out * np.asarray(gain, dtype=image.dtype)
    return np.clip(out, 0.0, 1.0)


def image_to_tensor(image: np.ndarray) -> Tensor:
    """(H, W, C) -> Tensor (1, C, H, W) float32."""
    if image.ndim != 3:
        raise DimensionError(f"image_to_tensor expects (H, W, C); got {image.shape}")
    chw = np.ascontiguousarray(np.moveaxis(image, 2, 0), dtype=np.float32)
    return Tensor(chw[None])


def stack_images(images: list[np.ndarray]) -> Tensor:
    """List of (H, W, C) -> Tensor (B, C, H, W) float32."""
    if not images:
        raise DimensionError("stack_images needs at least one image")
    batch = np.stack([np.moveaxis(img, 2, 0) for img in images])
    return Tensor(np.ascontiguousarray(batch, dtype=np.float32))


def tensor_to_image(t: Tensor, index: int = 0) -> np.ndarray:
    """Tensor (B, C, H, W) -> (H, W, C) float32 for one batch element."""
    return np.ascontiguousarray(np.moveaxis(t.data[index], 0, 2), dtype=np.float32)
