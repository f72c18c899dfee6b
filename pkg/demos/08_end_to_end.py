"""
End to end
==========

Train both models on harvested scene thumbnails, then run the full
pipeline over unseen scenes and compare with what was planted.
"""

# %%
import time

from ripeline.classifier import ClassifierConfig, train_classifier
from ripeline.detector import train_detector
from ripeline.pipeline import PipelineConfig, process_image, scene_training_data
from ripeline.synthetic import scene_corpus

cfg = PipelineConfig()
t0 = time.time()
det_pairs, cls_pairs = scene_training_data(scene_corpus(80, seed=100), cfg)
detector = train_detector(det_pairs, epochs=30, learning_rate=0.05, seed=0)
classifier, _ = train_classifier(cls_pairs, ClassifierConfig(d=32, epochs=60, learning_rate=0.1))
print(f"models ready in {time.time() - t0:.0f}s")

# %%
def overlap(a, b):
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]) + 1)
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]) + 1)
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return ix * iy / (area(a) + area(b) - ix * iy)


planted = found = extra = 0
for i, scene in enumerate(scene_corpus(20, seed=7)):
    regions = process_image(scene.image, cfg, detector, classifier)
    used = set()
    for t in scene.tomatoes:
        planted += 1
        for j, r in enumerate(regions):
            if overlap(r["bbox"], t.bbox) >= 0.5 and r["class"] == t.cls.label:
                found += 1
                used.add(j)
                break
    extra += len(regions) - len(used)
    if i < 3:
        print(f"scene {i}: planted {[t.cls.label for t in scene.tomatoes]} "
              f"found {[r['class'] for r in regions]}")

print(f"{found}/{planted} planted tomatoes found and correctly classed, {extra} extra region(s)")
