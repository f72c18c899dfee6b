"""
Colour space and gradients
==========================

Everything downstream measures colour in CIELAB, so this is where we start.
"""

# %%
import numpy as np

from ripeline.imaging import RgbImage, gradient_map, lab_to_rgb, rgb_to_lab

# A handful of reference colours, one pixel each.
swatches = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "red": (255, 0, 0),
    "tomato": (210, 40, 30),
    "leaf": (50, 120, 40),
}
row = RgbImage(np.array([list(swatches.values())], dtype=np.uint8))
lab = rgb_to_lab(row)
for name, (L, a, b) in zip(swatches, lab.data[0]):
    print(f"{name:>7}: L={L:6.2f} a={a:7.2f} b={b:7.2f}")

# %%
# The a channel is what separates ripe fruit from foliage: strongly
# positive for reds, negative for greens.
print("a(tomato) - a(leaf) =", round(lab.a[0, 3] - lab.a[0, 4], 2))

# Going back to sRGB is lossless at 8 bits.
print("round trip exact:", lab_to_rgb(lab) == row)

# %%
# Gradients are central differences over all three Lab channels.
# A hard vertical edge lights up the two columns next to it and nothing else.
data = np.zeros((5, 8, 3), dtype=np.uint8)
data[:, 4:] = swatches["tomato"]
g = gradient_map(rgb_to_lab(RgbImage(data)))
np.set_printoptions(precision=1, suppress=True)
print(g)
