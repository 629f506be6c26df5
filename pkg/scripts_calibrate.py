"""Calibration sweep for the defense-gap experiment (temporary tooling)."""
import tempfile
import time
from pathlib import Path

import numpy as np

from robust1d.data import synth_text_dataset, save_text_csv, write_manifest
from robust1d.harness import ExperimentConfig, train, evaluate, parse_attack

spec = parse_attack("text:score=r1s,transform=substitute,budget=5")
t0 = time.time()

VARIANTS = [
    ("ce", dict(loss="ce")),
    ("mc_m2_cls", dict(loss="marginal-contrastive", margin=2.0, normalizer="classes")),
    ("mc_m5_cls", dict(loss="marginal-contrastive", margin=5.0, normalizer="classes")),
    ("mc_m2", dict(loss="marginal-contrastive", margin=2.0)),
]

gaps, cleans, damage = {}, {}, []
for seed in (1, 2, 3, 4, 5):
    tmp = Path(tempfile.mkdtemp())
    ds = synth_text_dataset(3, 150, seed=seed, decoys=2)
    save_text_csv(ds, tmp / "c.csv")
    write_manifest(tmp / "c.manifest",
                   {"name": "v", "path": "c.csv", "schema": "text", "classes": 3})
    base = None
    for tag, kw in VARIANTS:
        cfg = ExperimentConfig(manifest=str(tmp / "c.manifest"),
                               out_dir=str(tmp / tag), seed=seed, epochs=35, **kw)
        res = train(cfg)
        rep = evaluate(res, [spec], subsample=None, seed=seed)
        clean, adv = rep.rows[0].clean_accuracy, rep.rows[1].adversarial_accuracy
        if tag == "ce":
            base = adv
            damage.append(clean - adv)
        else:
            gaps.setdefault(tag, []).append(adv - base)
        cleans.setdefault(tag, []).append(clean)
        print(f"seed={seed} {tag}: clean={clean:.1f} adv={adv:.1f} ({time.time()-t0:.0f}s)",
              flush=True)

print("CE damage per seed:", np.round(damage, 1))
for tag in sorted(gaps):
    print(f"{tag}: mean gap {np.mean(gaps[tag]):+.2f} gaps={np.round(gaps[tag],1)} "
          f"cleans={np.round(cleans[tag],1)}")
