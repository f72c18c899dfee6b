"""SLIC-style superpixel segmentation on CIELAB images.

The procedure seeds cluster centers on a regular grid, nudges each one to
the flattest pixel of its 3x3 neighbourhood, then alternates local
assignment and center updates until the summed center displacement falls
under a threshold. A final pass makes every superpixel 4-connected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import LabImage, gradient_map

__all__ = [
    "ConfigurationError",
    "ClusterCenter",
    "SlicConfig",
    "SuperpixelLabels",
    "grid_step",
    "grid_shape",
    "init_centers",
    "perturb_to_lowest_gradient",
    "slic_segment",
    "enforce_connectivity",
]

_FOUR_CONN = ndimage.generate_binary_structure(2, 1)


class ConfigurationError(ValueError):
    """Invalid segmentation parameters."""


@dataclass(frozen=True)
class ClusterCenter:
    l: float
    a: float
    b: float
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.a, self.b, self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class SlicConfig:
    k_target: int = 100
    compactness: float = 10.0
    max_iters: int = 10
    residual_threshold: float = 1.0

    def __post_init__(self):
        if self.k_target < 1:
            raise ConfigurationError("k_target must be >= 1")
        if not self.compactness > 0:
            raise ConfigurationError("compactness must be > 0")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.residual_threshold >= 0:
            raise ConfigurationError("residual_threshold must be >= 0")


@dataclass(eq=False)
class SuperpixelLabels:
    """Per-pixel superpixel ids in ``[0, k)`` plus run statistics."""

    labels: np.ndarray
    k: int
    step: int = 1
    iterations_run: int = 0
    final_residual: float = 0.0
    centers: list = field(default_factory=list, repr=False)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def grid_step(width: int, height: int, k_target: int) -> int:
    """Grid spacing ``round(sqrt(N / k))``, at least 1."""
    n = width * height
    if k_target > n:
        raise ConfigurationError(f"k_target={k_target} exceeds pixel count {n}")
    if k_target < 1:
        raise ConfigurationError("k_target must be >= 1")
    return max(1, int(math.floor(math.sqrt(n / k_target) + 0.5)))


def grid_shape(width: int, height: int, k_target: int) -> tuple[int, int]:
    """Columns and rows of the seeding grid.

    Picks the layout whose center count is closest to ``k_target`` while
    keeping cells close to square; ties prefer more columns.
    """
    best = None
    for nx in range(1, min(k_target, width) + 1):
        ny = min(max(int(math.floor(k_target / nx + 0.5)), 1), height)
        aspect = abs(math.log((width / nx) / (height / ny)))
        score = abs(nx * ny - k_target) / k_target + aspect
        key = (round(score, 12), -nx)
        if best is None or key < best[0]:
            best = (key, nx, ny)
    return best[1], best[2]


def _grid_positions(size: int, count: int) -> np.ndarray:
    return np.floor((np.arange(count) + 0.5) * size / count).astype(np.int64)


def init_centers(img: LabImage, k_target: int) -> list[ClusterCenter]:
    """Place cluster centers on a regular grid (one per cell center).

    The grid spacing is about ``grid_step``; the number of returned centers
    may differ slightly from ``k_target``.
    """
    grid_step(img.width, img.height, k_target)
    nx, ny = grid_shape(img.width, img.height, k_target)
    centers = []
    for y in _grid_positions(img.height, ny):
        for x in _grid_positions(img.width, nx):
            l, a, b = img.data[y, x]
            centers.append(ClusterCenter(float(l), float(a), float(b), float(x), float(y)))
    return centers


def _lowest_gradient_pixel(grad: np.ndarray, x: int, y: int) -> tuple[int, int]:
    h, w = grad.shape
    best = None
    # raster order scan keeps the first minimum on ties
    for yy in range(max(y - 1, 0), min(y + 1, h - 1) + 1):
        for xx in range(max(x - 1, 0), min(x + 1, w - 1) + 1):
            g = grad[yy, xx]
            if best is None or g < best[0]:
                best = (g, xx, yy)
    return best[1], best[2]


def perturb_to_lowest_gradient(
    center: ClusterCenter, img: LabImage, grad: np.ndarray | None = None
) -> ClusterCenter:
    """Move ``center`` to the minimum-gradient pixel of its 3x3 neighbourhood.

    Ties resolve in raster order (smallest row, then smallest column), so on
    a flat image the center moves to its upper-left neighbour. The color is
    refreshed from the chosen pixel.
    """
    if grad is None:
        grad = gradient_map(img)
    x, y = int(round(center.x)), int(round(center.y))
    nx, ny = _lowest_gradient_pixel(grad, x, y)
    l, a, b = img.data[ny, nx]
    return ClusterCenter(float(l), float(a), float(b), float(nx), float(ny))


def _assign(lab, centers, step, m, labels, dist):
    """One assignment sweep; updates ``labels`` and ``dist`` in place."""
    h, w = labels.shape
    spatial_w = (m / step) ** 2
    dist.fill(np.inf)
    for i, c in enumerate(centers):
        cl, ca, cb, cx, cy = c
        x0 = max(int(math.ceil(cx - step)), 0)
        x1 = min(int(math.floor(cx + step)), w - 1)
        y0 = max(int(math.ceil(cy - step)), 0)
        y1 = min(int(math.floor(cy + step)), h - 1)
        if x0 > x1 or y0 > y1:
            continue
        win = lab[y0 : y1 + 1, x0 : x1 + 1]
        dc = ((win - (cl, ca, cb)) ** 2).sum(axis=2)
        yy = np.arange(y0, y1 + 1)[:, None] - cy
        xx = np.arange(x0, x1 + 1)[None, :] - cx
        d = dc + (xx**2 + yy**2) * spatial_w
        sub_d = dist[y0 : y1 + 1, x0 : x1 + 1]
        better = d < sub_d
        sub_d[better] = d[better]
        labels[y0 : y1 + 1, x0 : x1 + 1][better] = i

    missing = ~np.isfinite(dist)
    if missing.any():
        # pixels no window reached: fall back to a global search
        ys, xs = np.nonzero(missing)
        c = np.asarray(centers)
        dc = ((lab[ys, xs][:, None, :] - c[None, :, :3]) ** 2).sum(axis=2)
        ds = ((xs[:, None] - c[None, :, 3]) ** 2 + (ys[:, None] - c[None, :, 4]) ** 2) * spatial_w
        d = dc + ds
        idx = np.argmin(d, axis=1)
        labels[ys, xs] = idx
        dist[ys, xs] = d[np.arange(len(ys)), idx]


def _update_centers(lab, labels, centers):
    h, w = labels.shape
    k = len(centers)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=k).astype(np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    feats = np.concatenate(
        [lab.reshape(-1, 3), xs.reshape(-1, 1), ys.reshape(-1, 1)], axis=1
    ).astype(np.float64)
    sums = np.zeros((k, 5))
    for j in range(5):
        sums[:, j] = np.bincount(flat, weights=feats[:, j], minlength=k)
    new = centers.copy()
    nz = counts > 0
    new[nz] = sums[nz] / counts[nz, None]
    return new


def slic_segment(img: LabImage, cfg: SlicConfig) -> SuperpixelLabels:
    """Partition ``img`` into compact, color-homogeneous superpixels.

    The combined distance is ``sqrt(d_lab**2 + (d_xy / S)**2 * m**2)`` and
    each center searches a ``2S x 2S`` window. Iteration stops when the summed
    center displacement (in pixels) is at most ``cfg.residual_threshold`` or
    after ``cfg.max_iters`` sweeps; connectivity is enforced afterwards.
    """
    step = grid_step(img.width, img.height, cfg.k_target)
    grad = gradient_map(img)
    centers = np.array(
        [perturb_to_lowest_gradient(c, img, grad).as_array() for c in init_centers(img, cfg.k_target)]
    )
    lab = img.data
    labels = np.zeros((img.height, img.width), dtype=np.int64)
    dist = np.empty((img.height, img.width))
    residual = 0.0
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        _assign(lab, centers, step, cfg.compactness, labels, dist)
        new = _update_centers(lab, labels, centers)
        residual = float(np.sqrt(((new[:, 3:] - centers[:, 3:]) ** 2).sum(axis=1)).sum())
        centers = new
        if residual <= cfg.residual_threshold:
            break

    raw = SuperpixelLabels(labels, len(centers), step, iterations, residual)
    out = enforce_connectivity(raw, min_size=(step * step) / 4.0)
    out.iterations_run = iterations
    out.final_residual = residual
    out.centers = [ClusterCenter(*map(float, c)) for c in _update_centers(lab, out.labels, np.zeros((out.k, 5)))]
    return out


def _components(labels: np.ndarray):
    """4-connected components of every label, numbered in raster order of discovery."""
    comp = np.full(labels.shape, -1, dtype=np.int64)
    n = 0
    for value in np.unique(labels):
        cc, count = ndimage.label(labels == value, structure=_FOUR_CONN)
        mask = cc > 0
        comp[mask] = cc[mask] - 1 + n
        n += count
    # renumber by first raster occurrence
    flat = comp.ravel()
    _, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(n, dtype=np.int64)
    remap[order] = np.arange(n)
    return remap[comp], n


def enforce_connectivity(labels: SuperpixelLabels, min_size: float | None = None) -> SuperpixelLabels:
    """Make every superpixel a single 4-connected, non-empty component.

    Components smaller than ``min_size`` (default ``S**2 / 4`` with
    ``S = grid_step``) are merged into their largest adjacent component,
    visiting components in raster order of discovery. Extra large
    components of a split label receive fresh ids. Output ids are dense.
    """
    lab = np.asarray(labels.labels)
    h, w = lab.shape
    if min_size is None:
        s = max(1, int(math.floor(math.sqrt(h * w / max(labels.k, 1)) + 0.5)))
        min_size = (s * s) / 4.0

    comp, n = _components(lab)
    sizes = np.bincount(comp.ravel(), minlength=n)
    first_idx = np.unique(comp.ravel(), return_index=True)[1]
    comp_label = lab.ravel()[first_idx]

    pairs = []
    for a_, b_ in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a_ != b_
        pairs.append(np.stack([a_[diff], b_[diff]], axis=1))
    pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    neighbours = [[] for _ in range(n)]
    for a_, b_ in pairs:
        neighbours[a_].append(b_)
        neighbours[b_].append(a_)

    parent = np.arange(n)
    group_size = sizes.astype(np.int64).copy()

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for c in range(n):
        if sizes[c] >= min_size:
            continue
        root = find(c)
        best = None
        for nb in sorted(neighbours[c]):
            r = find(nb)
            if r == root:
                continue
            if best is None or group_size[r] > group_size[best] or (
                group_size[r] == group_size[best] and r < best
            ):
                best = r
        if best is None:
            continue
        parent[root] = best
        group_size[best] += group_size[root]

    roots = np.array([find(i) for i in range(n)], dtype=np.int64)
    # a group keeps its original label id if it is the first group to claim it
    group_label = {}
    claimed = set()
    next_id = int(lab.max()) + 1 if lab.size else 0
    for r in sorted(set(roots.tolist())):
        orig = int(comp_label[r])
        if orig not in claimed:
            group_label[r] = orig
            claimed.add(orig)
        else:
            group_label[r] = next_id
            next_id += 1
    raw_ids = np.array([group_label[r] for r in roots], dtype=np.int64)[comp]
    uniq, dense = np.unique(raw_ids, return_inverse=True)
    return SuperpixelLabels(
        dense.reshape(h, w),
        int(uniq.size),
        labels.step,
        labels.iterations_run,
        labels.final_residual,
    )
