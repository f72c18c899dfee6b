"""Raster types, sRGB <-> CIELAB conversion, gradients and image I/O.

All color arithmetic is done in float64. CIELAB uses the D65 white point
with the 2 degree observer.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "RgbImage",
    "LabImage",
    "CoordinateError",
    "rgb_to_lab",
    "lab_to_rgb",
    "srgb_to_lab_array",
    "lab_to_srgb_array",
    "gradient_magnitude",
    "gradient_map",
    "resize_bilinear",
    "read_image",
    "write_png",
    "write_label_png",
    "read_label_png",
]

# sRGB primaries -> XYZ (D65)
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE_D65 = _RGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


class CoordinateError(IndexError):
    """A pixel coordinate lies outside the image."""


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit sRGB raster stored as a ``(height, width, 3)`` uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("channel values must lie in [0, 255]")
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def to_float(self) -> np.ndarray:
        """Channels scaled to [0, 1] as float64."""
        return self.data.astype(np.float64) / 255.0


@dataclass(frozen=True, eq=False)
class LabImage:
    """CIELAB raster stored as a ``(height, width, 3)`` float64 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def L(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def a(self) -> np.ndarray:
        return self.data[..., 1]

    @property
    def b(self) -> np.ndarray:
        return self.data[..., 2]


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def _f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _finv(t):
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """Convert sRGB values in [0, 1] (last axis = channels) to CIELAB.

    ``a`` and ``b`` are clamped to [-128, 127].
    """
    lin = _srgb_to_linear(np.asarray(rgb, dtype=np.float64))
    xyz = lin @ _RGB_TO_XYZ.T / _WHITE_D65
    fx, fy, fz = _f(xyz[..., 0]), _f(xyz[..., 1]), _f(xyz[..., 2])
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    lab[..., 0] = np.clip(lab[..., 0], 0.0, 100.0)
    lab[..., 1:] = np.clip(lab[..., 1:], -128.0, 127.0)
    return lab


def lab_to_srgb_array(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`srgb_to_lab_array`; returns sRGB in [0, 1] (clipped)."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_finv(fx), _finv(fy), _finv(fz)], axis=-1) * _WHITE_D65
    return np.clip(_linear_to_srgb(xyz @ _XYZ_TO_RGB.T), 0.0, 1.0)


def rgb_to_lab(img: RgbImage) -> LabImage:
    """Convert an sRGB raster to CIELAB (D65)."""
    return LabImage(srgb_to_lab_array(img.to_float()))


def lab_to_rgb(img: LabImage) -> RgbImage:
    return RgbImage(np.rint(lab_to_srgb_array(img.data) * 255.0).astype(np.uint8))


def gradient_map(img: LabImage) -> np.ndarray:
    """Gradient magnitude at every pixel, shape ``(height, width)``.

    Central differences on L, a and b with clamped borders; the magnitude is
    the Euclidean norm over both directions and all three channels.
    """
    d = img.data
    padded = np.pad(d, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return np.sqrt((gx**2).sum(axis=2) + (gy**2).sum(axis=2))


def gradient_magnitude(img: LabImage, x: int, y: int) -> float:
    """Gradient magnitude at column ``x``, row ``y``.

    Raises
    ------
    CoordinateError
        If ``(x, y)`` is outside the image.
    """
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise CoordinateError(f"({x}, {y}) outside {img.width}x{img.height} image")
    d = img.data
    xl, xr = max(x - 1, 0), min(x + 1, img.width - 1)
    yu, yd = max(y - 1, 0), min(y + 1, img.height - 1)
    gx = (d[y, xr] - d[y, xl]) / 2.0
    gy = (d[yd, x] - d[yu, x]) / 2.0
    return float(np.sqrt(np.dot(gx, gx) + np.dot(gy, gy)))


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an ``(H, W, C)`` array with corner-aligned sampling.

    Corner pixels of the output sample the corner pixels of the input exactly,
    and equal sizes give the input back unchanged. Returns float64.
    """
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ys = np.linspace(0.0, h - 1, out_h) if out_h > 1 else np.array([(h - 1) / 2.0])
    xs = np.linspace(0.0, w - 1, out_w) if out_w > 1 else np.array([(w - 1) / 2.0])
    return _bilinear_sample(arr, ys[:, None] + 0 * xs[None, :], xs[None, :] + 0 * ys[:, None])


def _bilinear_sample(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample ``arr`` at float coordinates with edge clamping."""
    h, w = arr.shape[:2]
    ys = np.clip(ys, 0.0, h - 1)
    xs = np.clip(xs, 0.0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]
    top = arr[y0, x0] * (1 - wx) + arr[y0, x1] * wx
    bot = arr[y1, x0] * (1 - wx) + arr[y1, x1] * wx
    return top * (1 - wy) + bot * wy


def read_image(path) -> RgbImage:
    """Decode a PNG or JPEG file into an :class:`RgbImage` (alpha dropped)."""
    with Image.open(path) as im:
        im.load()
        return RgbImage(np.asarray(im.convert("RGB")))


def write_png(img: RgbImage, path) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(img.data)).save(path, format="PNG")
    return path


def write_label_png(labels: np.ndarray, path) -> Path:
    """Write a label map as a 16-bit single-channel PNG."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("labels must fit in 16 bits")
    path = Path(path)
    Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")
    return path


def read_label_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int64)
