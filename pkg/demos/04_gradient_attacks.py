"""FGSM and PGD on a tabular classifier: accuracy as the perturbation budget
grows, plus the constraint checks that every adversarial point respects."""

import tempfile
from pathlib import Path

import numpy as np

from robust1d.data import save_tabular_csv, synth_tabular_dataset, write_manifest
from robust1d.gradient_attacks import ContinuousAttackSpec, batch_attack
from robust1d.harness import ExperimentConfig, make_loss_fn, train

workdir = Path(tempfile.mkdtemp(prefix="robust1d-demo-"))
# a few informative coordinates plus noise ones the model will overfit to
blobs = synth_tabular_dataset(classes=2, per_class=150, features=4,
                              noise_features=12, seed=2)
save_tabular_csv(blobs, workdir / "blobs.csv")
write_manifest(workdir / "blobs.manifest",
               {"name": "blobs", "path": "blobs.csv", "schema": "tabular", "classes": 2})

config = ExperimentConfig(manifest=str(workdir / "blobs.manifest"),
                          out_dir=str(workdir / "run"), seed=2, loss="ce", epochs=25)
result = train(config)
test = result.test_set
loss_fn = make_loss_fn(result.bundle, result.centers)
clean = 100.0 * float((result.model.predict_rows(test.features) == test.labels).mean())
print(f"clean accuracy: {clean:.1f}% on {len(test)} held-out rows\n")

print(f"{'eps':>8} {'fgsm acc':>9} {'pgd acc':>9}")
for eps in (0.0, 8 / 255, 16 / 255, 0.1, 0.15):
    row = []
    for kind, steps in (("fgsm", 1), ("pgd", 10)):
        spec = ContinuousAttackSpec(epsilon=eps, steps=steps, kind=kind)
        adv, success, _ = batch_attack(result.model, loss_fn, test.features,
                                       test.labels, spec, kind=kind)
        assert np.max(np.abs(adv.data - test.features)) <= eps + 1e-12
        assert adv.data.min() >= 0.0 and adv.data.max() <= 1.0
        row.append(100.0 * float((~success).mean()))
    print(f"{eps:8.4f} {row[0]:8.1f}% {row[1]:8.1f}%")
print("\nevery adversarial batch stayed inside the L-inf ball and the [0,1] box")
