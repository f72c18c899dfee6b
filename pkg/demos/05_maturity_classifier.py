"""
Maturity classifier
===================

Rows of the thumbnail are fed as a sequence through an embedding, two LSTM
layers, a single attention head that projects only the query, and a
widen-then-narrow feed-forward block before the five-way softmax.
"""

# %%
import time

import numpy as np

from ripeline.classifier import ClassifierConfig, grad_check, init_model, predict_proba, train_classifier
from ripeline.maturity import MaturityClass
from ripeline.synthetic import solid_hue_dataset

# First make sure backpropagation is right on a small model.
small = init_model(ClassifierConfig(side=8, d=8, layers=2), seed=0)
x = np.random.default_rng(0).random((8, 24))
print("max relative gradient error:", f"{grad_check(small, (x, 2)):.2e}")

# %%
# Solid colours from five hue bands, one band per class.
train = solid_hue_dataset(20, seed=1)
val = solid_hue_dataset(10, seed=2)
cfg = ClassifierConfig(d=32, epochs=60, learning_rate=0.1, fine_tune_epochs=20)
t0 = time.time()
model, curve = train_classifier(train, cfg, val_data=val)
print(f"trained {len(curve)} epochs in {time.time() - t0:.1f}s")
for e in curve[9::10]:
    print(f"  epoch {e['epoch']:3d} [{e['phase']:>9}] loss {e['loss']:.4f} "
          f"train {e['accuracy']:.2f} val {e['val_accuracy']:.2f}")

# %%
probs = predict_proba(model, val[0][:5])
for p, y in zip(probs, val[1][:5]):
    print(f"{MaturityClass(y).label:>9} -> {MaturityClass(int(p.argmax())).label:<9} p={p.max():.3f}")
