"""Superpixel adjacency graphs, region growing and thumbnail extraction."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .imaging import LabImage, RgbImage, resize_bilinear
from .superpixels import SuperpixelLabels

__all__ = [
    "InputError",
    "RegionError",
    "SuperpixelNode",
    "SuperpixelGraph",
    "Region",
    "GrowthConfig",
    "SEED_ORDERS",
    "delta_e",
    "build_graph",
    "grow_regions",
    "region_mask",
    "region_to_thumbnail",
]

SEED_ORDERS = ("redness", "size", "raster")


class InputError(ValueError):
    pass


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class SuperpixelNode:
    mean_lab: tuple[float, float, float]
    centroid: tuple[float, float]
    pixel_count: int
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max (inclusive)


@dataclass
class SuperpixelGraph:
    nodes: list[SuperpixelNode]
    edges: list[tuple[int, int]]
    adjacency: list[list[int]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.adjacency:
            adj = [[] for _ in self.nodes]
            for i, j in self.edges:
                adj[i].append(j)
                adj[j].append(i)
            self.adjacency = [sorted(a) for a in adj]

    @property
    def k(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Region:
    members: frozenset
    bbox: tuple[int, int, int, int]
    mean_lab: tuple[float, float, float]
    pixel_count: int

    def to_dict(self, region_id: int | None = None) -> dict:
        out = {
            "bbox": list(self.bbox),
            "mean_lab": [round(v, 6) for v in self.mean_lab],
            "pixel_count": self.pixel_count,
            "members": sorted(self.members),
        }
        if region_id is not None:
            out = {"id": region_id, **out}
        return out


@dataclass(frozen=True)
class GrowthConfig:
    """Region growing parameters.

    ``max_region_fraction`` discards regions covering more than that share
    of the image; large uniform backgrounds otherwise survive as regions.
    """

    similarity_threshold: float = 12.0
    min_region_pixels: int = 64
    seed_order: str = "redness"
    max_region_fraction: float = 0.5

    def __post_init__(self):
        if not self.similarity_threshold >= 0:
            raise ValueError("similarity_threshold must be >= 0")
        if self.min_region_pixels < 1:
            raise ValueError("min_region_pixels must be >= 1")
        if self.seed_order not in SEED_ORDERS:
            raise ValueError(f"seed_order must be one of {SEED_ORDERS}")
        if not 0 < self.max_region_fraction <= 1:
            raise ValueError("max_region_fraction must be in (0, 1]")


def delta_e(lab1, lab2) -> float:
    """CIE76 color difference (Euclidean distance in Lab)."""
    d = np.asarray(lab1, dtype=np.float64) - np.asarray(lab2, dtype=np.float64)
    return float(np.sqrt(np.dot(d, d)))


def build_graph(labels: SuperpixelLabels, img: LabImage) -> SuperpixelGraph:
    """Adjacency graph of superpixels with exact per-node statistics.

    Two superpixels are adjacent when they share at least one 4-neighbour
    pixel boundary.
    """
    lab_map = np.asarray(labels.labels)
    if lab_map.shape != (img.height, img.width):
        raise InputError(f"label map {lab_map.shape} does not match image {(img.height, img.width)}")
    k = labels.k
    flat = lab_map.ravel()
    counts = np.bincount(flat, minlength=k)
    ys, xs = np.mgrid[0 : img.height, 0 : img.width]
    sums = np.stack(
        [np.bincount(flat, weights=img.data[..., c].ravel(), minlength=k) for c in range(3)], axis=1
    )
    cx = np.bincount(flat, weights=xs.ravel(), minlength=k)
    cy = np.bincount(flat, weights=ys.ravel(), minlength=k)

    x_min = np.full(k, np.iinfo(np.int64).max)
    y_min = np.full(k, np.iinfo(np.int64).max)
    x_max = np.full(k, -1)
    y_max = np.full(k, -1)
    np.minimum.at(x_min, flat, xs.ravel())
    np.minimum.at(y_min, flat, ys.ravel())
    np.maximum.at(x_max, flat, xs.ravel())
    np.maximum.at(y_max, flat, ys.ravel())

    nodes = []
    for i in range(k):
        n = int(counts[i])
        if n == 0:
            raise InputError(f"superpixel {i} has no pixels")
        nodes.append(
            SuperpixelNode(
                tuple(float(v) for v in sums[i] / n),
                (float(cx[i] / n), float(cy[i] / n)),
                n,
                (int(x_min[i]), int(y_min[i]), int(x_max[i]), int(y_max[i])),
            )
        )

    pairs = [
        np.stack([lab_map[:, :-1].ravel(), lab_map[:, 1:].ravel()], axis=1),
        np.stack([lab_map[:-1, :].ravel(), lab_map[1:, :].ravel()], axis=1),
    ]
    pairs = np.concatenate(pairs)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    edges = [(int(a), int(b)) for a, b in pairs]
    return SuperpixelGraph(nodes, edges)


def _seed_sequence(graph: SuperpixelGraph, order: str) -> list[int]:
    ids = range(graph.k)
    if order == "redness":
        return sorted(ids, key=lambda i: (-graph.nodes[i].mean_lab[1], i))
    if order == "size":
        return sorted(ids, key=lambda i: (-graph.nodes[i].pixel_count, i))
    return list(ids)


def grow_regions(graph: SuperpixelGraph, cfg: GrowthConfig | None = None, image_pixels: int | None = None) -> list[Region]:
    """Grow disjoint regions over the superpixel graph.

    Seeds are visited in ``cfg.seed_order``. From each unassigned seed a
    breadth-first sweep absorbs an unassigned neighbour when its mean color
    lies within ``similarity_threshold`` (CIE76) of the region's running
    pixel-weighted mean. Regions smaller than ``min_region_pixels`` or larger
    than ``max_region_fraction`` of the image are dropped; their superpixels
    stay consumed.
    """
    cfg = cfg or GrowthConfig()
    total = image_pixels if image_pixels is not None else sum(n.pixel_count for n in graph.nodes)
    assigned = np.zeros(graph.k, dtype=bool)
    tau = cfg.similarity_threshold
    regions = []
    for seed in _seed_sequence(graph, cfg.seed_order):
        if assigned[seed]:
            continue
        assigned[seed] = True
        members = [seed]
        node = graph.nodes[seed]
        weight = node.pixel_count
        color_sum = np.asarray(node.mean_lab) * weight
        queue = deque(graph.adjacency[seed])
        while queue:
            n = queue.popleft()
            if assigned[n]:
                continue
            cand = graph.nodes[n]
            if delta_e(color_sum / weight, cand.mean_lab) <= tau:
                assigned[n] = True
                members.append(n)
                color_sum = color_sum + np.asarray(cand.mean_lab) * cand.pixel_count
                weight += cand.pixel_count
                queue.extend(graph.adjacency[n])
        if weight < cfg.min_region_pixels or weight > cfg.max_region_fraction * total:
            continue
        boxes = np.array([graph.nodes[m].bbox for m in members])
        bbox = (int(boxes[:, 0].min()), int(boxes[:, 1].min()), int(boxes[:, 2].max()), int(boxes[:, 3].max()))
        regions.append(Region(frozenset(members), bbox, tuple(float(v) for v in color_sum / weight), int(weight)))
    return regions


def region_mask(labels: SuperpixelLabels, region: Region) -> np.ndarray:
    """Boolean pixel mask of a region."""
    return np.isin(labels.labels, np.fromiter(region.members, dtype=np.int64))


def region_to_thumbnail(img: RgbImage, region: Region, out_size: int = 32) -> RgbImage:
    """Crop the region's bounding box (padded 5% per side) and resize it square.

    The aspect ratio is not preserved.
    """
    if out_size < 8:
        raise RegionError("out_size must be >= 8")
    x0, y0, x1, y1 = region.bbox
    if x1 < x0 or y1 < y0:
        raise RegionError(f"degenerate bbox {region.bbox}")
    if x0 < 0 or y0 < 0 or x1 >= img.width or y1 >= img.height:
        raise RegionError(f"bbox {region.bbox} outside {img.width}x{img.height} image")
    w, h = x1 - x0 + 1, y1 - y0 + 1
    px = int(math.floor(0.05 * w + 0.5))
    py = int(math.floor(0.05 * h + 0.5))
    x0, x1 = max(x0 - px, 0), min(x1 + px, img.width - 1)
    y0, y1 = max(y0 - py, 0), min(y1 + py, img.height - 1)
    crop = img.data[y0 : y1 + 1, x0 : x1 + 1]
    return RgbImage(np.rint(resize_bilinear(crop, out_size, out_size)).astype(np.uint8))
