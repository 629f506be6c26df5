"""Word-importance scoring and character-level attacks on a trained text
model: rank words with each scorer, then craft an adversarial sample under an
edit budget."""

import tempfile
from pathlib import Path

import numpy as np

from robust1d.data import save_text_csv, synth_text_dataset, write_manifest
from robust1d.harness import ExperimentConfig, train
from robust1d.models import predict_true_class_prob
from robust1d.text_attacks import (DiscreteAttackSpec, generate_adversarial,
                                   score_combined, score_gradient, score_r1s,
                                   score_random, score_ths, score_tts, tokenize)

workdir = Path(tempfile.mkdtemp(prefix="robust1d-demo-"))
corpus = synth_text_dataset(classes=3, per_class=100, seed=5)
save_text_csv(corpus, workdir / "synth.csv")
write_manifest(workdir / "synth.manifest",
               {"name": "synth", "path": "synth.csv", "schema": "text", "classes": 3})
config = ExperimentConfig(manifest=str(workdir / "synth.manifest"),
                          out_dir=str(workdir / "run"), seed=5, loss="ce")
result = train(config)
model, codec = result.model, result.codec

label, text = result.test_set.records[0]
y = label - 1
words = tokenize(text).words
print(f"text ({len(words)} words, true class {label}):\n  {text}\n")
print(f"model confidence in true class: "
      f"{predict_true_class_prob(model, codec, text, y):.4f}\n")

ths = score_ths(model, codec, text, y)
tts = score_tts(model, codec, text, y)
scores = {
    "random": score_random(words, seed=0),
    "gradient": score_gradient(model, codec, text, y),
    "r1s": score_r1s(model, codec, text, y),
    "ths": ths,
    "tts": tts,
    "combined": score_combined(ths, tts, 1.0),
}
print(f"top-3 words per scorer:")
for name, vals in scores.items():
    top = sorted(range(len(words)), key=lambda i: (-vals[i], i))[:3]
    print(f"  {name:9s}: {[words[i] for i in top]}")

print(f"\ntemporal telescoping: sum(ths) = {ths.sum():+.6f} = "
      f"F(full) - F(empty) = "
      f"{predict_true_class_prob(model, codec, text, y) - predict_true_class_prob(model, codec, '', y):+.6f}")

print("\n== attacking with each transform (budget 5, R1S scoring) ==")
for transform in ("swap", "substitute", "delete", "insert"):
    spec = DiscreteAttackSpec(scoring="r1s", transform=transform, budget=5, seed=1)
    adv, edits, success = generate_adversarial(model, codec, text, y, spec)
    verdict = "flipped" if success else "held"
    print(f"  {transform:10s}: {edits} edits, prediction {verdict}")
    if success:
        changed = [(b, a) for b, a in zip(words, tokenize(adv).words) if b != a]
        print(f"              edited words: {changed}")
