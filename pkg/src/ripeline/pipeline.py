"""End-to-end processing: segment, grow, validate and classify.

Also holds :class:`PipelineConfig`, the single key-value document (TOML)
that carries every stage's settings and seeds.
"""

from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .classifier import ClassifierConfig, ShaRnnModel, predict_proba
from .data import AugmentRanges
from .detector import DetectorModel, validate_regions
from .imaging import RgbImage, read_image, rgb_to_lab
from .maturity import MaturityClass
from .regions import GrowthConfig, Region, build_graph, grow_regions, region_mask, region_to_thumbnail
from .superpixels import SlicConfig, SuperpixelLabels, slic_segment
from .synthetic import Scene, disc_mask

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "PipelineError",
    "DetectorTrainConfig",
    "RunConfig",
    "PipelineConfig",
    "candidate_regions",
    "process_image",
    "run_pipeline",
    "scene_training_data",
    "match_planted",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectorTrainConfig:
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 8
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    thumbnail_size: int = 32
    detection_threshold: float = 0.5
    seed: int = 0
    jobs: int = 1


_SECTIONS = {
    "slic": SlicConfig,
    "growth": GrowthConfig,
    "detector": DetectorTrainConfig,
    "classifier": ClassifierConfig,
    "augment": AugmentRanges,
    "run": RunConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    slic: SlicConfig = field(default_factory=SlicConfig)
    growth: GrowthConfig = field(default_factory=GrowthConfig)
    detector: DetectorTrainConfig = field(default_factory=DetectorTrainConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    augment: AugmentRanges = field(default_factory=AugmentRanges)
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        """Build from nested tables; unknown tables or keys raise :class:`ConfigError`."""
        unknown = sorted(set(doc) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
        kwargs = {}
        for name, typ in _SECTIONS.items():
            table = doc.get(name, {})
            if not isinstance(table, dict):
                raise ConfigError(f"[{name}] must be a table")
            allowed = {f.name for f in fields(typ)}
            bad = sorted(set(table) - allowed)
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(bad)}")
            try:
                kwargs[name] = typ(**table)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path) -> "PipelineConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def override(self, section: str, **changes) -> "PipelineConfig":
        """Copy with some fields of one section replaced (``None`` values ignored)."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return replace(self, **{section: replace(getattr(self, section), **changes)})


def candidate_regions(img: RgbImage, cfg: PipelineConfig):
    """Superpixels, grown regions and their thumbnails for one image."""
    lab = rgb_to_lab(img)
    labels = slic_segment(lab, cfg.slic)
    graph = build_graph(labels, lab)
    regions = grow_regions(graph, cfg.growth, image_pixels=img.width * img.height)
    thumbs = [region_to_thumbnail(img, r, cfg.run.thumbnail_size) for r in regions]
    return labels, regions, thumbs


def process_image(img: RgbImage, cfg: PipelineConfig, detector: DetectorModel,
                  classifier: ShaRnnModel) -> list[dict]:
    """Accepted regions of one image with their tomato score and maturity distribution."""
    _, regions, thumbs = candidate_regions(img, cfg)
    verdicts = validate_regions(detector, thumbs, cfg.run.detection_threshold)
    keep = [i for i, v in enumerate(verdicts) if v.accepted]
    if not keep:
        return []
    probs = predict_proba(classifier, [thumbs[i] for i in keep])
    out = []
    for i, p in zip(keep, probs):
        out.append(
            {
                "bbox": list(regions[i].bbox),
                "pixel_count": regions[i].pixel_count,
                "tomato_score": verdicts[i].score,
                "class_probs": [float(x) for x in p],
                "class": MaturityClass(int(np.argmax(p))).label,
            }
        )
    return out


IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp", ".ppm"}


def _expand_inputs(inputs) -> list[Path]:
    if isinstance(inputs, (str, Path)):
        inputs = [inputs]
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(
                q for q in p.iterdir()
                if q.is_file() and not q.name.startswith(".") and q.suffix.lower() in IMAGE_SUFFIXES
            ))
        else:
            paths.append(p)
    return paths


def _process_path(args):
    path, cfg, detector, classifier = args
    try:
        img = read_image(path)
        return {"image": str(path), "regions": process_image(img, cfg, detector, classifier)}
    except Exception as exc:  # noqa: BLE001 - per-image failures are isolated
        return {"image": str(path), "error": f"{type(exc).__name__}: {exc}"}


def run_pipeline(inputs, cfg: PipelineConfig, detector: DetectorModel | None,
                 classifier: ShaRnnModel | None, jobs: int | None = None) -> Iterator[dict]:
    """Yield one result per input image, in input order.

    ``inputs`` is an image path, a directory, or a list of either. Failures
    yield ``{"image", "error"}`` records and the batch continues.
    """
    if detector is None or classifier is None:
        raise PipelineError("both a detector and a classifier model are required")
    paths = _expand_inputs(inputs)
    jobs = jobs or cfg.run.jobs
    tasks = ((p, cfg, detector, classifier) for p in paths)
    if jobs <= 1:
        for t in tasks:
            yield _process_path(t)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield from pool.map(_process_path, tasks)


# ---------------------------------------------------------------- desk-scale training data

def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def match_planted(scene: Scene, labels: SuperpixelLabels, regions: list[Region], min_iou: float = 0.5):
    """For each region, the index of the planted tomato it overlaps with IoU >= ``min_iou`` (or None)."""
    h, w = scene.image.height, scene.image.width
    discs = [disc_mask(h, w, t.cx, t.cy, t.radius) for t in scene.tomatoes]
    out = []
    for r in regions:
        m = region_mask(labels, r)
        scores = [_iou(m, d) for d in discs]
        best = int(np.argmax(scores)) if scores else -1
        out.append(best if scores and scores[best] >= min_iou else None)
    return out


def scene_training_data(scenes: Iterable[Scene], cfg: PipelineConfig):
    """Thumbnails harvested from grown regions of synthetic scenes.

    Returns ``(detector_pairs, classifier_pairs)``: regions matching a planted
    tomato are positives (and carry its maturity class), the rest negatives.
    """
    det, cls = [], []
    for scene in scenes:
        labels, regions, thumbs = candidate_regions(scene.image, cfg)
        for thumb, match in zip(thumbs, match_planted(scene, labels, regions)):
            det.append((thumb, match is not None))
            if match is not None:
                cls.append((thumb, int(scene.tomatoes[match].cls)))
    return det, cls
