"""
Dataset protocol
================

Ingest a class-per-directory tree, split it per class, and add affine
augmentations that always stay on their source's side of the split.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from ripeline.data import AffineSpec, augment_dataset, augment_image, ingest, split
from ripeline.imaging import write_png
from ripeline.maturity import MaturityClass
from ripeline.synthetic import solid_hue_dataset, tomato_thumbnail

root = Path(tempfile.mkdtemp()) / "tomatoes"
rng = np.random.default_rng(0)
for cls in MaturityClass:
    (root / cls.label).mkdir(parents=True)
    for i in range(6):
        write_png(tomato_thumbnail(cls, rng), root / cls.label / f"{i}.png")

manifest = ingest(root)
print(manifest.summary())

# %%
manifest = split(manifest, val_fraction=1 / 3, seed=0)
manifest = augment_dataset(manifest, per_image_count=5, seed=0)
print(manifest.summary())

leaks = [r for r in manifest.records
         if r.origin == "augmented" and r.split != next(s.split for s in manifest.records if s.path == r.source)]
print("augmented records on the wrong side of the split:", len(leaks))

# %%
# Right-angle rotations and mirrors are exact pixel permutations.
img = solid_hue_dataset(1)[0][0]
print(augment_image(img, AffineSpec(rotation=90)).data.shape)
print(manifest.records[-1].to_dict())
