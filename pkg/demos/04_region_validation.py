"""
Is it a tomato?
===============

A small convolutional network decides which grown regions are fruit. We
train it on thumbnails harvested from synthetic scenes, so the negatives
are the kind of leaf fragments region growth really produces.
"""

# %%
import time

import numpy as np

from ripeline.detector import train_detector, validate_regions
from ripeline.pipeline import PipelineConfig, scene_training_data
from ripeline.synthetic import scene_corpus

cfg = PipelineConfig()
t0 = time.time()
pairs, _ = scene_training_data(scene_corpus(40, seed=100), cfg)
labels = np.array([y for _, y in pairs])
print(f"harvested {len(pairs)} thumbnails ({labels.sum()} tomatoes) in {time.time() - t0:.1f}s")

# %%
t0 = time.time()
model = train_detector(pairs, epochs=20, learning_rate=0.05, seed=0)
print(f"trained in {time.time() - t0:.1f}s")
hist = model.metadata["loss_history"]
print("loss:", " ".join(f"{v:.3f}" for v in hist[::4]), "...", f"{hist[-1]:.3f}")

# %%
# Held-out scenes.
test, test_y = scene_training_data(scene_corpus(10, seed=7), cfg)
verdicts = validate_regions(model, [t for t, _ in test], threshold=0.5)
pred = np.array([v.accepted for v in verdicts])
truth = np.array([y for _, y in test])
print(f"held-out accuracy {np.mean(pred == truth):.3f} on {len(truth)} regions")
