"""Build a synthetic frozen world and poke at it.

The engine never sees images or text: it trains against a *bundle* of
precomputed per-backbone image features, per-(backbone, prompt, class)
text features, and the logit slab each (backbone, prompt) pair induces.
This script synthesizes one, shows what is inside, and round-trips it
through the on-disk format.
"""

import tempfile
from pathlib import Path

import numpy as np

from promptens import SynthSpec, load_bundle, save_bundle, synth_bundle
from promptens.feature_store import stack_logits, verify_bundle_logits

spec = SynthSpec(n=256, c=8, m=3, dims=(16, 16), class_separation=2.0)
bundle = synth_bundle(spec, seed=7)
man = bundle.manifest

print(f"dataset: {man.dataset_name}")
print(f"samples: {bundle.num_samples}, classes: {man.num_classes}, prompts per class: {man.num_prompts}")
for b in man.backbones:
    print(f"  backbone {b.id}: image features {bundle.image_features[b.id].shape}, "
          f"text features {bundle.text_features[b.id].shape}, logits {bundle.logits[b.id].shape}")
print(f"splits: { {k: len(v) for k, v in man.splits.items()} }")
print(f"base classes {man.base_classes}, new classes {man.new_classes}")

# Each (backbone, prompt) slab is a complete zero-shot classifier on its
# own. Their quality varies a lot -- that spread is what makes learned
# weighting worthwhile.
test = np.asarray(man.splits["test"])
truth = bundle.labels[test]
slabs = stack_logits(bundle)[test]
print("\nper-slab zero-shot accuracy on the test split:")
for k in range(man.num_slots):
    bid = man.backbone_ids[k // man.num_prompts]
    acc = float(np.mean(np.argmax(slabs[:, k], axis=1) == truth))
    print(f"  slot {k} ({bid}, prompt {k % man.num_prompts}): {acc:.3f}")
mean_ens = float(np.mean(np.argmax(slabs.mean(axis=1), axis=1) == truth))
print(f"plain slab averaging: {mean_ens:.3f}")

# The interchange format: strict JSON manifest + headerless little-endian
# float32 arrays. Loading re-validates everything, optionally including
# the cosine/temperature consistency of every stored logit.
with tempfile.TemporaryDirectory() as tmp:
    manifest_path = save_bundle(bundle, Path(tmp) / "world")
    reloaded = load_bundle(manifest_path, verify_logits=True)
    same = all(
        np.array_equal(bundle.image_features[b.id], reloaded.image_features[b.id])
        for b in man.backbones
    )
    print(f"\nround trip bit-exact: {same}")
    print(f"worst logit reconstruction error: {verify_bundle_logits(reloaded):.2e}")
