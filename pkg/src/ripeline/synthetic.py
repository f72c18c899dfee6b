"""Synthetic images for desk-scale experiments and tests.

Maturity is encoded purely by hue: every class owns a hue band, with gaps
between bands, so :func:`hue_label` is an exact labeler for anything
produced here.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .imaging import RgbImage
from .maturity import MaturityClass

__all__ = [
    "HUE_BANDS",
    "hue_color",
    "hue_label",
    "disc_mask",
    "red_disc_scene",
    "leaf_texture",
    "solid_hue_dataset",
    "tomato_thumbnail",
    "detector_dataset",
    "PlantedTomato",
    "Scene",
    "tomato_scene",
    "scene_corpus",
]

# degrees; MatureRed wraps through 0
HUE_BANDS = {
    MaturityClass.GREEN: (90.0, 125.0),
    MaturityClass.BRITTLE: (50.0, 64.0),
    MaturityClass.PINK: (30.0, 40.0),
    MaturityClass.PALE_RED: (14.0, 21.0),
    MaturityClass.MATURE_RED: (-6.0, 4.0),
}


def hue_color(cls: MaturityClass, rng: np.random.Generator) -> np.ndarray:
    """A random bright, saturated RGB color (floats in [0, 255]) from the class band."""
    lo, hi = HUE_BANDS[MaturityClass(cls)]
    h = (rng.uniform(lo, hi) % 360.0) / 360.0
    s = rng.uniform(0.7, 1.0)
    v = rng.uniform(0.7, 1.0)
    return np.array(colorsys.hsv_to_rgb(h, s, v)) * 255.0


def hue_label(rgb) -> MaturityClass | None:
    """Class whose hue band contains the hue of ``rgb`` (0-255), else None."""
    r, g, b = (float(c) / 255.0 for c in rgb)
    h = colorsys.rgb_to_hsv(r, g, b)[0] * 360.0
    for cls, (lo, hi) in HUE_BANDS.items():
        for hh in (h, h - 360.0):
            if lo - 1.0 <= hh <= hi + 1.0:
                return cls
    return None


def disc_mask(height: int, width: int, cx: float, cy: float, radius: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2


def red_disc_scene(size: int = 96, radius: float = 30.0,
                   disc_rgb=(210, 30, 30), background_rgb=(40, 150, 50)):
    """Uniform disc centred in a uniform background; returns ``(image, mask)``."""
    c = (size - 1) / 2.0
    mask = disc_mask(size, size, c, c, radius)
    data = np.empty((size, size, 3), dtype=np.uint8)
    data[:] = background_rgb
    data[mask] = disc_rgb
    return RgbImage(data), mask


def _smooth_noise(shape, rng, cell):
    coarse = rng.random((shape[0] // cell + 2, shape[1] // cell + 2))
    ys = np.linspace(0, coarse.shape[0] - 1.001, shape[0])
    xs = np.linspace(0, coarse.shape[1] - 1.001, shape[1])
    y0, x0 = ys.astype(int), xs.astype(int)
    wy, wx = (ys - y0)[:, None], (xs - x0)[None, :]
    c = coarse
    return (
        c[y0][:, x0] * (1 - wy) * (1 - wx)
        + c[y0 + 1][:, x0] * wy * (1 - wx)
        + c[y0][:, x0 + 1] * (1 - wy) * wx
        + c[y0 + 1][:, x0 + 1] * wy * wx
    )


def leaf_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Dark, veined foliage as a float ``(H, W, 3)`` array in [0, 255]."""
    hue = rng.uniform(85.0, 130.0) / 360.0
    base = 0.12 + 0.25 * _smooth_noise((height, width), rng, cell=8)
    ys, xs = np.mgrid[0:height, 0:width]
    angle = rng.uniform(0, np.pi)
    freq = rng.uniform(0.25, 0.5)
    veins = 0.5 + 0.5 * np.sin(freq * (xs * np.cos(angle) + ys * np.sin(angle)))
    v = np.clip(base + 0.08 * veins + rng.normal(0, 0.03, (height, width)), 0.02, 0.45)
    s = np.clip(0.55 + 0.25 * _smooth_noise((height, width), rng, cell=6), 0, 1)
    pure = np.array(colorsys.hsv_to_rgb(hue, 1.0, 1.0))
    rgb = v[..., None] * (1.0 - s[..., None] * (1.0 - pure))
    return rgb * 255.0


def _shade_disc(canvas, mask, color, rng, cx, cy, radius):
    """Paint ``color`` into ``mask`` with a soft highlight and slight noise."""
    ys, xs = np.nonzero(mask)
    r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2) / max(radius, 1.0)
    shade = 1.0 - 0.12 * r**2
    vals = color[None, :] * shade[:, None] + rng.normal(0, 2.0, (len(ys), 3))
    canvas[ys, xs] = np.clip(vals, 0, 255)


def solid_hue_dataset(n_per_class: int, side: int = 32, seed: int = 0, noise: float = 0.0):
    """Solid-color thumbnails, ``n_per_class`` per maturity class.

    Returns ``(images, labels)`` with classes interleaved.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(n_per_class):
        for cls in MaturityClass:
            color = hue_color(cls, rng)
            data = np.broadcast_to(color, (side, side, 3)).copy()
            if noise:
                data += rng.normal(0, noise, data.shape)
            images.append(RgbImage(np.clip(np.rint(data), 0, 255).astype(np.uint8)))
            labels.append(int(cls))
    return images, labels


def tomato_thumbnail(cls: MaturityClass, rng: np.random.Generator, side: int = 32) -> RgbImage:
    """A shaded disc of the class hue filling most of a foliage thumbnail."""
    canvas = leaf_texture(side, side, rng)
    c = (side - 1) / 2.0 + rng.uniform(-1.0, 1.0, 2)
    radius = side * rng.uniform(0.42, 0.5)
    mask = disc_mask(side, side, c[0], c[1], radius)
    _shade_disc(canvas, mask, hue_color(cls, rng), rng, c[0], c[1], radius)
    return RgbImage(np.rint(canvas).astype(np.uint8))


def detector_dataset(n_pos: int, n_neg: int, side: int = 32, seed: int = 0, positives: str = "tomato"):
    """Binary thumbnails: tomatoes (label 1) and foliage patches (label 0).

    ``positives="red"`` gives plain red discs on foliage instead of all
    maturity stages.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(max(n_pos, n_neg)):
        if i < n_pos:
            if positives == "red":
                cls = MaturityClass.MATURE_RED
            else:
                cls = MaturityClass(i % len(MaturityClass))
            images.append(tomato_thumbnail(cls, rng, side))
            labels.append(1)
        if i < n_neg:
            images.append(RgbImage(np.rint(leaf_texture(side, side, rng)).astype(np.uint8)))
            labels.append(0)
    return images, labels


@dataclass(frozen=True)
class PlantedTomato:
    cx: float
    cy: float
    radius: float
    cls: MaturityClass

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return (
            int(np.floor(self.cx - self.radius)),
            int(np.floor(self.cy - self.radius)),
            int(np.ceil(self.cx + self.radius)),
            int(np.ceil(self.cy + self.radius)),
        )


@dataclass(frozen=True)
class Scene:
    image: RgbImage
    tomatoes: tuple[PlantedTomato, ...]


def tomato_scene(seed: int, size: int = 96, n_tomatoes: int = 1) -> Scene:
    """Foliage background with non-overlapping shaded tomatoes of random stage."""
    rng = np.random.default_rng(seed)
    canvas = leaf_texture(size, size, rng)
    planted = []
    attempts = 0
    while len(planted) < n_tomatoes and attempts < 200:
        attempts += 1
        radius = rng.uniform(0.14, 0.2) * size
        cx, cy = rng.uniform(radius + 2, size - radius - 3, 2)
        if any(np.hypot(cx - p.cx, cy - p.cy) < radius + p.radius + 6 for p in planted):
            continue
        cls = MaturityClass(int(rng.integers(len(MaturityClass))))
        mask = disc_mask(size, size, cx, cy, radius)
        _shade_disc(canvas, mask, hue_color(cls, rng), rng, cx, cy, radius)
        planted.append(PlantedTomato(float(cx), float(cy), float(radius), cls))
    return Scene(RgbImage(np.rint(canvas).astype(np.uint8)), tuple(planted))


def scene_corpus(n: int, seed: int = 0, size: int = 96, max_tomatoes: int = 2) -> list[Scene]:
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, n)
    counts = rng.integers(1, max_tomatoes + 1, n)
    return [tomato_scene(int(s), size, int(c)) for s, c in zip(seeds, counts)]
