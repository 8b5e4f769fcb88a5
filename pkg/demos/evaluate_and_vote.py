"""Score detections and labels the way the reporting tools do.

First half: box-level precision/recall/F1 across the ten IoU thresholds
for a prediction set with one miss. Second half: the majority-vote noise
study, which shows how pooling per-patch labels lifts module accuracy.
"""

import numpy as np

from irpv.segmentation import evaluate_detections
from irpv.voting import vote_improvement_experiment

truth = [(10, 10, 40, 30), (60, 10, 90, 30), (10, 50, 40, 70)]
pred = [
    (12, 11, 41, 31),   # close to the first box
    (61, 10, 91, 30),   # nearly exact
    (70, 55, 95, 75),   # stray box, matches nothing well
]
ev = evaluate_detections(pred, truth)
print("tau    prec  rec   f1")
for tau, p, r, f in zip(ev.iou_thresholds, ev.precision, ev.recall, ev.f1):
    print(f"{tau:.2f}  {p:5.2f} {r:5.2f} {f:5.2f}")
print(f"ap {ev.ap:.4f}\n")

print("patches  patch_acc  module_acc   (flip 0.2)")
for count in (1, 3, 7, 15):
    patch, module = vote_improvement_experiment(1000, count, 0.2, rng_seed=0)
    print(f"{count:7d}  {patch:9.3f}  {module:10.3f}")
print("\none patch is no vote at all; a handful already cleans most errors")
