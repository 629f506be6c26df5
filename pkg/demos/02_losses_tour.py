"""The objective functions side by side: cross-entropy, margin-shifted
softmax, center loss, the contrastive ratio, and their joint sum."""

import numpy as np

from robust1d.losses import (ClassCenters, LossConfig, ce_loss, center_loss,
                             contrastive_loss, marginal_contrastive_loss,
                             marginal_softmax_loss)
from robust1d.tensor import Tensor

rng = np.random.default_rng(3)
logits = Tensor(rng.normal(0, 2, (4, 3)))
labels = np.array([0, 1, 2, 0])
features = Tensor(rng.normal(0, 1, (4, 8)))
centers = ClassCenters(Tensor(rng.normal(0, 1, (3, 8))))

print("== cross-entropy vs marginal softmax ==")
print(f"ce                : {ce_loss(None, logits, labels).item():.5f}")
for m in (0.0, 0.5, 1.0, 2.0):
    val = marginal_softmax_loss(None, logits, labels, m).item()
    print(f"marginal (m={m:3.1f})  : {val:.5f}")
print("m=0 reproduces cross-entropy exactly; larger m demands larger logit gaps.")

print("\n== feature-space terms ==")
print(f"center loss       : {center_loss(None, features, labels, centers).item():.5f}")
for variant in ("eq4", "eq6"):
    val = contrastive_loss(None, features, labels, centers, variant).item()
    print(f"contrastive {variant}  : {val:.5f}")

at_centers = Tensor(centers.weights.data[labels])
print(f"contrastive at the centers: "
      f"{contrastive_loss(None, at_centers, labels, centers).item():.5f} (zero)")

print("\n== the joint objective is the plain sum ==")
config = LossConfig(margin=0.5)
joint = marginal_contrastive_loss(None, features, logits, labels, centers, config)
parts = (marginal_softmax_loss(None, logits, labels, 0.5).item()
         + contrastive_loss(None, features, labels, centers).item())
print(f"joint = {joint.item():.10f}")
print(f"parts = {parts:.10f}")
