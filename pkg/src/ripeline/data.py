"""Dataset ingestion, manifests, stratified splitting and affine augmentation."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError

from .imaging import RgbImage, _bilinear_sample, read_image, write_png
from .maturity import MaturityClass

__all__ = [
    "IngestionError",
    "SplitError",
    "AffineSpec",
    "AugmentRanges",
    "ManifestRecord",
    "DatasetManifest",
    "ingest",
    "split",
    "augment_image",
    "augment_dataset",
    "load_record_image",
    "records_to_dataset",
]

SPLITS = ("train", "val")


class IngestionError(ValueError):
    def __init__(self, offenders: list[str]):
        super().__init__("unknown class directories: " + ", ".join(offenders))
        self.offenders = offenders


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class AffineSpec:
    """2-D affine augmentation, applied as scale, rotate, translate, mirror.

    ``rotation`` is in degrees, counter-clockwise as displayed; ``translate``
    is in pixels (x right, y down). All operations act about the image center.
    """

    rotation: float = 0.0
    translate: tuple[float, float] = (0.0, 0.0)
    mirror_h: bool = False
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        object.__setattr__(self, "translate", (float(self.translate[0]), float(self.translate[1])))

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation,
            "translate": list(self.translate),
            "mirror_h": self.mirror_h,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineSpec":
        return cls(float(d["rotation"]), tuple(d["translate"]), bool(d["mirror_h"]), float(d["scale"]))


@dataclass(frozen=True)
class AugmentRanges:
    rotation: float = 30.0
    translate_fraction: float = 0.10
    mirror_probability: float = 0.5
    scale_min: float = 0.9
    scale_max: float = 1.1

    def sample(self, rng: np.random.Generator, width: int, height: int) -> AffineSpec:
        rot = float(rng.uniform(-self.rotation, self.rotation))
        dx = float(rng.uniform(-self.translate_fraction, self.translate_fraction) * width)
        dy = float(rng.uniform(-self.translate_fraction, self.translate_fraction) * height)
        mirror = bool(rng.random() < self.mirror_probability)
        scale = float(rng.uniform(self.scale_min, self.scale_max))
        return AffineSpec(rot, (dx, dy), mirror, scale)


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: MaturityClass
    split: str | None = None
    origin: str = "original"
    source: str | None = None
    augment: AffineSpec | None = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "class": self.label.label,
            "split": self.split,
            "origin": self.origin,
            "source": self.source,
            "augment": self.augment.to_dict() if self.augment else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRecord":
        return cls(
            d["path"],
            MaturityClass.from_name(d["class"]),
            d.get("split"),
            d.get("origin", "original"),
            d.get("source"),
            AffineSpec.from_dict(d["augment"]) if d.get("augment") else None,
        )


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    # not persisted in the jsonl file
    skipped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        paths = [r.path for r in self.records]
        if len(set(paths)) != len(paths):
            dupes = sorted({p for p in paths if paths.count(p) > 1})
            raise ValueError(f"duplicate manifest paths: {dupes[:5]}")
        originals = {r.path for r in self.records if r.origin == "original"}
        for r in self.records:
            if r.split not in (None, *SPLITS):
                raise ValueError(f"invalid split {r.split!r} for {r.path}")
            if r.origin == "augmented" and r.source not in originals:
                raise ValueError(f"augmented record {r.path} references unknown source {r.source}")

    def __len__(self) -> int:
        return len(self.records)

    def in_split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def summary(self) -> dict:
        counts = {c.label: 0 for c in MaturityClass}
        for r in self.records:
            counts[r.label.label] += 1
        return {
            "records": len(self.records),
            "original": sum(r.origin == "original" for r in self.records),
            "augmented": sum(r.origin == "augmented" for r in self.records),
            "train": sum(r.split == "train" for r in self.records),
            "val": sum(r.split == "val" for r in self.records),
            "skipped": self.skipped,
            "per_class": counts,
        }

    def dumps(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        records = [ManifestRecord.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(records)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError):
        return False


def ingest(root_dir) -> DatasetManifest:
    """Build a manifest from ``root/<ClassName>/*`` image files.

    Directory names are matched case-insensitively against the maturity
    classes (``PaleRed``, ``pale_red``, ``pale-red`` all work). Files that
    cannot be decoded are skipped with a warning and counted in
    ``manifest.skipped``.
    """
    root = Path(root_dir)
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    classes = {}
    offenders = []
    for d in dirs:
        try:
            classes[d] = MaturityClass.from_name(d.name)
        except ValueError:
            offenders.append(d.name)
    if offenders:
        raise IngestionError(offenders)

    records, skipped = [], 0
    for d in sorted(classes, key=lambda p: (classes[p], p.name)):
        for f in sorted(p for p in d.iterdir() if p.is_file() and not p.name.startswith(".")):
            if _decodable(f):
                records.append(ManifestRecord(str(f), classes[d]))
            else:
                warnings.warn(f"skipping undecodable file {f}", stacklevel=2)
                skipped += 1
    return DatasetManifest(records, skipped)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(manifest: DatasetManifest, val_fraction: float, seed: int = 0) -> DatasetManifest:
    """Stratified train/validation split of the original records.

    Each class contributes ``round(n_class * val_fraction)`` validation
    records (half-up, kept within ``[1, n_class - 1]``). Augmented records
    follow their source.
    """
    if not 0 < val_fraction < 1:
        raise SplitError("val_fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    assignment = {}
    for cls in MaturityClass:
        paths = [r.path for r in manifest.records if r.origin == "original" and r.label == cls]
        if not paths:
            continue
        if len(paths) < 2:
            raise SplitError(f"class {cls.label} has fewer than 2 records")
        n_val = min(max(_round_half_up(len(paths) * val_fraction), 1), len(paths) - 1)
        order = rng.permutation(len(paths))
        val = {paths[i] for i in order[:n_val]}
        for p in paths:
            assignment[p] = "val" if p in val else "train"
    out = []
    for r in manifest.records:
        key = r.path if r.origin == "original" else r.source
        out.append(replace(r, split=assignment[key]))
    return DatasetManifest(out, manifest.skipped)


def _affine_source_coords(spec: AffineSpec, height: int, width: int):
    """Source sampling coordinates for every output pixel (inverse mapping)."""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    vx, vy = xs - cx, ys - cy
    if spec.mirror_h:
        vx = -vx
    vx = vx - spec.translate[0]
    vy = vy - spec.translate[1]
    theta = math.radians(spec.rotation)
    c, s = math.cos(theta), math.sin(theta)
    # forward rotation (y down, counter-clockwise on screen): x' = c x + s y, y' = -s x + c y
    ux = c * vx - s * vy
    uy = s * vx + c * vy
    ux /= spec.scale
    uy /= spec.scale
    # snap so right-angle rotations land exactly on pixel centers
    return np.round(uy + cy, 9), np.round(ux + cx, 9)


def augment_image(img: RgbImage, spec: AffineSpec) -> RgbImage:
    """Resample ``img`` through ``spec`` (bilinear, edges clamped); size preserved."""
    sy, sx = _affine_source_coords(spec, img.height, img.width)
    out = _bilinear_sample(img.data.astype(np.float64), sy, sx)
    return RgbImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def augment_dataset(manifest: DatasetManifest, per_image_count: int, seed: int = 0,
                    ranges: AugmentRanges | None = None, out_dir=None) -> DatasetManifest:
    """Add ``per_image_count`` augmented records per original.

    Specs are drawn from ``ranges`` with a seeded generator. With ``out_dir``
    the augmented images are written as PNG files; otherwise records point
    to a virtual ``<source>#aug<i>`` path materialized on demand by
    :func:`load_record_image`.
    """
    if per_image_count < 0:
        raise ValueError("per_image_count must be >= 0")
    if per_image_count == 0:
        return DatasetManifest(list(manifest.records), manifest.skipped)
    ranges = ranges or AugmentRanges()
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    records = list(manifest.records)
    for idx, r in enumerate(manifest.records):
        if r.origin != "original":
            continue
        if out_dir is not None:
            img = read_image(r.path)
            width, height = img.width, img.height
        else:
            with Image.open(r.path) as im:
                width, height = im.size
        for i in range(per_image_count):
            spec = ranges.sample(rng, width, height)
            if out_dir is not None:
                path = out_dir / f"{idx:06d}_{Path(r.path).stem}_aug{i}.png"
                write_png(augment_image(img, spec), path)
                path = str(path)
            else:
                path = f"{r.path}#aug{i}"
            records.append(ManifestRecord(path, r.label, r.split, "augmented", r.path, spec))
    return DatasetManifest(records, manifest.skipped)


def load_record_image(record: ManifestRecord) -> RgbImage:
    """Decode a record, applying its augmentation to the source when the file is virtual."""
    path = Path(record.path)
    if record.origin == "augmented" and not path.exists():
        return augment_image(read_image(record.source), record.augment)
    return read_image(path)


def records_to_dataset(records: Iterable[ManifestRecord]):
    """``(images, labels)`` lists for the given records."""
    images, labels = [], []
    for r in records:
        images.append(load_record_image(r))
        labels.append(int(r.label))
    return images, labels
