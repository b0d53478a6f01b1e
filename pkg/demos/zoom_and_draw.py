"""Image manipulations: crop-and-zoom with bicubic resampling, line drawing,
box counting, exact arithmetic.

Run: python3 demos/zoom_and_draw.py   (writes PNGs next to this script)
"""

import os

import numpy as np

from comforge import (
    Box,
    BoxList,
    ImageBuffer,
    exec_calculate,
    exec_counting,
    exec_crop_zoomin,
    exec_line,
    save_png,
)

HERE = os.path.dirname(os.path.abspath(__file__))

# Build a 160x120 scene: dark background, a bright plate in the lower right.
px = np.full((120, 160, 3), 40, dtype=np.uint8)
px[80:110, 100:150] = (230, 220, 120)
px[88:92, 108:142] = (20, 20, 20)
scene = ImageBuffer(px, "scene")
save_png(scene, os.path.join(HERE, "demo_scene.png"))

# Zoom into the plate region. Boxes use 0..999 coordinates regardless of
# pixel size; ratio 3 triples the crop with the cubic convolution kernel.
plate_box = Box(620, 660, 940, 920)
zoomed = exec_crop_zoomin(scene, plate_box, 3)
print(f"zoomed: {zoomed.width}x{zoomed.height}  ident={zoomed.ident}")
save_png(zoomed, os.path.join(HERE, "demo_zoomed.png"))

# Omitting the ratio picks one that grows the crop's longer side to the
# original's longer side, capped at 4x.
auto = exec_crop_zoomin(scene, plate_box, None)
print(f"auto ratio output: {auto.width}x{auto.height}")

# Draw an auxiliary diagonal plus a marker segment; the input is untouched.
marked = exec_line(scene, [(0, 0), (999, 999), (999, 0)])
save_png(marked, os.path.join(HERE, "demo_marked.png"))
print("line overlay written; source unchanged:", (scene.pixels == px).all())

# Counting merges near-duplicate detections (IoU >= 0.9 by default).
detections = BoxList((
    Box(100, 600, 250, 750),
    Box(105, 600, 255, 750),   # same wheel, jittered detector output
    Box(400, 600, 550, 750),
))
print("distinct boxes:", exec_counting(detections).value)

# Arithmetic is exact over rationals; no float drift, no silent infinity.
print("0.1 + 0.2      =", exec_calculate("0.1 + 0.2").value)
print("(7 - 7) / 3    =", exec_calculate("(7-7)/3").value)
try:
    exec_calculate("1 / (2 - 2)")
except ZeroDivisionError as exc:
    print("1 / (2 - 2)    ->", exc)
